#pragma once

#include <span>
#include <type_traits>
#include <vector>

#include "csmlgcn/attention.hpp"
#include "csmlgcn/encoders.hpp"
#include "csmlgcn/graph.hpp"
#include "csmlgcn/head.hpp"
#include "csmlgcn/params.hpp"

namespace csmlgcn {

struct Architecture {
  Index feature_dim = 0;
  Index view_count = 0;
  Index hidden_dim = 128;
  Index out_dim = 64;
  Index depth = 2;
  Index head_hidden = 64;

  // Encoder widths, input first: {input, hidden, ..., out}.
  std::vector<Index> encoder_dims(Index input_dim) const;
};

// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
ModelParams init_params(const Architecture& arch, Rng& rng);

// Throws when the parameter shapes do not chain or do not fit the graph.
void validate_params(const ModelParams& params, Index feature_dim, Index view_count);

// Raises the allocator's mmap/trim thresholds (glibc only) so the large
// per-pass temporaries are recycled from the heap instead of being mapped
// and faulted in on every pass. Idempotent.
void retain_heap();

template <typename Scalar>
struct ForwardPassT {
  std::vector<BasicVar<Scalar>> views;  // fused per-view embeddings
  FusionOutputT<Scalar> fusion;
  BasicVar<Scalar> psi;
};

using ForwardPass = ForwardPassT<double>;

template <typename Scalar>
ForwardPassT<Scalar> model_forward(const PropagationGraph& graph, BasicVar<Scalar> features,
                                   BasicVar<Scalar> query, const ModelVarsT<Scalar>& params,
                                   const ForwardContext& ctx);

// Starts from view encoder outputs computed earlier (see encode_all_views).
template <typename Scalar>
ForwardPassT<Scalar> model_forward(
    const PropagationGraph& graph,
    std::type_identity_t<std::span<const std::vector<BasicVar<Scalar>>>> view_outputs,
    BasicVar<Scalar> query, const ModelVarsT<Scalar>& params, const ForwardContext& ctx);

}  // namespace csmlgcn
