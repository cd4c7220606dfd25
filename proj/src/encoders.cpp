#include "csmlgcn/encoders.hpp"

namespace csmlgcn {

namespace {

template <typename Scalar>
BasicVar<Scalar> maybe_dropout(BasicVar<Scalar> h, const ForwardContext& ctx) {
  if (ctx.mode == Mode::eval || ctx.dropout_rate == 0.0) return h;
  if (ctx.rng == nullptr) throw Error("training-mode dropout needs a random generator");
  return dropout(h, ctx.dropout_rate, ctx.mode, *ctx.rng);
}

void check_views(Index graph_views, Index model_views, std::size_t query_encoders) {
  if (model_views != graph_views || static_cast<Index>(query_encoders) != graph_views) {
    throw Error("model has " + std::to_string(model_views) + " views, graph has " +
                std::to_string(graph_views));
  }
}

}  // namespace

template <typename Scalar>
BasicVar<Scalar> propagate(const NormalizedAdjacency& adj, BasicVar<Scalar> h,
                           const EncoderLayerT<BasicVar<Scalar>>& layer) {
  if (h.cols() != layer.w_self.rows() || h.cols() != layer.w_neigh.rows()) {
    throw Error("encoder layer expects input width " + std::to_string(layer.w_self.rows()) +
                ", got " + std::to_string(h.cols()));
  }
  // A (h W) == (A h) W; aggregate on whichever side is narrower.
  const BasicVar<Scalar> neigh = layer.w_neigh.cols() < h.cols()
                                     ? neighbor_aggregate(matmul(h, layer.w_neigh), adj)
                                     : matmul(neighbor_aggregate(h, adj), layer.w_neigh);
  return relu_sum(matmul(h, layer.w_self), neigh, layer.bias);
}

template <typename Scalar>
std::vector<BasicVar<Scalar>> view_encoder_forward(const NormalizedAdjacency& adj, BasicVar<Scalar> x,
                                                   const EncoderVarsT<Scalar>& params,
                                                   const ForwardContext& ctx) {
  std::vector<BasicVar<Scalar>> outputs;
  outputs.reserve(params.layers.size());
  BasicVar<Scalar> h = x;
  for (const auto& layer : params.layers) {
    h = maybe_dropout(propagate(adj, h, layer), ctx);
    outputs.push_back(h);
  }
  return outputs;
}

template <typename Scalar>
BasicVar<Scalar> query_encoder_forward(const NormalizedAdjacency& adj, BasicVar<Scalar> query,
                                       std::type_identity_t<std::span<const BasicVar<Scalar>>> view_outputs,
                                       const EncoderVarsT<Scalar>& params, const ForwardContext& ctx) {
  if (params.layers.empty()) throw Error("query encoder has no layers");
  if (view_outputs.size() + 1 < params.layers.size()) {
    throw Error("query encoder needs " + std::to_string(params.layers.size() - 1) +
                " view encoder outputs, got " + std::to_string(view_outputs.size()));
  }
  BasicVar<Scalar> h = query;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (l > 0) {
      const auto& v = view_outputs[l - 1];
      if (v.rows() != h.rows() || v.cols() != h.cols()) {
        throw Error("query/view encoder widths differ at layer " + std::to_string(l));
      }
      h = h + v;
    }
    h = maybe_dropout(propagate(adj, h, params.layers[l]), ctx);
  }
  return h;
}

template <typename Scalar>
std::vector<BasicVar<Scalar>> encode_all_views(
    const PropagationGraph& graph,
    std::type_identity_t<std::span<const std::vector<BasicVar<Scalar>>>> view_outputs,
    BasicVar<Scalar> query, const ModelVarsT<Scalar>& params, const ForwardContext& ctx) {
  const Index views = graph.layer_count();
  check_views(views, params.view_count(), params.query_encoders.size());
  if (static_cast<Index>(view_outputs.size()) != views) throw Error("view encoder outputs missing");
  std::vector<BasicVar<Scalar>> fused;
  fused.reserve(static_cast<std::size_t>(views));
  for (Index r = 0; r < views; ++r) {
    const auto& ve = view_outputs[r];
    if (ve.empty()) throw Error("view encoder outputs missing");
    const auto qe = query_encoder_forward<Scalar>(graph.layers[r], query, ve, params.query_encoders[r], ctx);
    if (ve.back().cols() != qe.cols()) throw Error("encoder output widths differ");
    fused.push_back(ve.back() + qe);
  }
  return fused;
}

template <typename Scalar>
std::vector<BasicVar<Scalar>> encode_all_views(const PropagationGraph& graph, BasicVar<Scalar> x,
                                               BasicVar<Scalar> query, const ModelVarsT<Scalar>& params,
                                               const ForwardContext& ctx) {
  const Index views = graph.layer_count();
  check_views(views, params.view_count(), params.query_encoders.size());
  // View by view, so dropout draws stay in VE(r), QE(r), VE(r+1), ... order.
  std::vector<BasicVar<Scalar>> fused;
  fused.reserve(static_cast<std::size_t>(views));
  for (Index r = 0; r < views; ++r) {
    const auto& adj = graph.layers[r];
    const auto ve = view_encoder_forward(adj, x, params.view_encoders[r], ctx);
    const auto qe = query_encoder_forward<Scalar>(adj, query, ve, params.query_encoders[r], ctx);
    if (ve.back().cols() != qe.cols()) throw Error("encoder output widths differ");
    fused.push_back(ve.back() + qe);
  }
  return fused;
}

#define CSMLGCN_INSTANTIATE(S)                                                                      \
  template BasicVar<S> propagate(const NormalizedAdjacency&, BasicVar<S>,                           \
                                 const EncoderLayerT<BasicVar<S>>&);                                \
  template std::vector<BasicVar<S>> view_encoder_forward(const NormalizedAdjacency&, BasicVar<S>,   \
                                                         const EncoderVarsT<S>&, const ForwardContext&); \
  template BasicVar<S> query_encoder_forward<S>(const NormalizedAdjacency&, BasicVar<S>,            \
                                                std::span<const BasicVar<S>>, const EncoderVarsT<S>&, \
                                                const ForwardContext&);                             \
  template std::vector<BasicVar<S>> encode_all_views<S>(                                           \
      const PropagationGraph&, std::span<const std::vector<BasicVar<S>>>, BasicVar<S>,              \
      const ModelVarsT<S>&, const ForwardContext&);                                                 \
  template std::vector<BasicVar<S>> encode_all_views(const PropagationGraph&, BasicVar<S>,          \
                                                     BasicVar<S>, const ModelVarsT<S>&,             \
                                                     const ForwardContext&);

CSMLGCN_INSTANTIATE(float)
CSMLGCN_INSTANTIATE(double)

#undef CSMLGCN_INSTANTIATE

}  // namespace csmlgcn
