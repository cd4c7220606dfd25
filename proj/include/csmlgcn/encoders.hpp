#pragma once

#include <span>
#include <type_traits>
#include <vector>

#include "csmlgcn/autodiff.hpp"
#include "csmlgcn/graph.hpp"
#include "csmlgcn/params.hpp"

namespace csmlgcn {

// How a forward pass treats dropout. rng may be null in eval mode.
struct ForwardContext {
  Mode mode = Mode::eval;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;
};

// relu(h W_self + A h W_neigh + bias), no dropout.
template <typename Scalar>
BasicVar<Scalar> propagate(const NormalizedAdjacency& adj, BasicVar<Scalar> h,
                           const EncoderLayerT<BasicVar<Scalar>>& layer);

// Runs every layer of a view encoder on features x and returns each layer's
// (post-dropout) output, first layer first.
template <typename Scalar>
std::vector<BasicVar<Scalar>> view_encoder_forward(const NormalizedAdjacency& adj, BasicVar<Scalar> x,
                                                   const EncoderVarsT<Scalar>& params,
                                                   const ForwardContext& ctx);

// Query encoder seeded with the n x 1 one-hot query column. The input of
// layer l + 1 is its own layer-l output plus the view encoder's layer-l
// output.
template <typename Scalar>
BasicVar<Scalar> query_encoder_forward(const NormalizedAdjacency& adj, BasicVar<Scalar> query,
                                       std::type_identity_t<std::span<const BasicVar<Scalar>>> view_outputs,
                                       const EncoderVarsT<Scalar>& params, const ForwardContext& ctx);

// Per-view fused embeddings: final view encoder output + final query encoder
// output, one n x d_out matrix per layer of the graph.
template <typename Scalar>
std::vector<BasicVar<Scalar>> encode_all_views(const PropagationGraph& graph, BasicVar<Scalar> x,
                                               BasicVar<Scalar> query, const ModelVarsT<Scalar>& params,
                                               const ForwardContext& ctx);

// Same, from view encoder outputs computed earlier (one list per view). In
// eval mode they do not depend on the query and can be reused.
template <typename Scalar>
std::vector<BasicVar<Scalar>> encode_all_views(const PropagationGraph& graph,
                                               std::type_identity_t<std::span<const std::vector<BasicVar<Scalar>>>> view_outputs,
                                               BasicVar<Scalar> query, const ModelVarsT<Scalar>& params,
                                               const ForwardContext& ctx);

}  // namespace csmlgcn
