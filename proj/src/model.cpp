#include "csmlgcn/model.hpp"

#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace csmlgcn {

std::vector<Index> Architecture::encoder_dims(Index input_dim) const {
  if (depth < 1) throw Error("encoder depth must be at least 1");
  std::vector<Index> dims{input_dim};
  for (Index l = 1; l < depth; ++l) dims.push_back(hidden_dim);
  dims.push_back(out_dim);
  return dims;
}

void retain_heap() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)done;
#endif
}

namespace {

Matrix glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Index j = 0; j < fan_out; ++j) {
    for (Index i = 0; i < fan_in; ++i) w(i, j) = dist(rng);
  }
  return w;
}

EncoderParams make_encoder(const std::vector<Index>& dims, Rng& rng) {
  EncoderParams enc;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    EncoderLayerParams layer;
    layer.w_self = glorot(dims[l], dims[l + 1], rng);
    layer.w_neigh = glorot(dims[l], dims[l + 1], rng);
    layer.bias = Matrix::Zero(1, dims[l + 1]);
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

void check_shape(const Matrix& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(what + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Index check_encoder(const EncoderParams& enc, Index input_dim, const std::string& what) {
  if (enc.layers.empty()) throw Error(what + " has no layers");
  Index width = input_dim;
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const auto& layer = enc.layers[l];
    const Index out = layer.w_self.cols();
    const std::string name = what + " layer " + std::to_string(l);
    check_shape(layer.w_self, width, out, name + " w_self");
    check_shape(layer.w_neigh, width, out, name + " w_neigh");
    check_shape(layer.bias, 1, out, name + " bias");
    width = out;
  }
  return width;
}

}  // namespace

ModelParams init_params(const Architecture& arch, Rng& rng) {
  if (arch.feature_dim < 1 || arch.view_count < 1) throw Error("init_params: empty architecture");
  ModelParams p;
  const auto ve_dims = arch.encoder_dims(arch.feature_dim);
  const auto qe_dims = arch.encoder_dims(1);
  for (Index r = 0; r < arch.view_count; ++r) p.view_encoders.push_back(make_encoder(ve_dims, rng));
  for (Index r = 0; r < arch.view_count; ++r) p.query_encoders.push_back(make_encoder(qe_dims, rng));
  for (Index r = 0; r < arch.view_count; ++r) {
    p.attention.weights.push_back(glorot(arch.out_dim, arch.out_dim, rng));
  }
  p.head.w1 = glorot(arch.out_dim, arch.head_hidden, rng);
  p.head.b1 = Matrix::Zero(1, arch.head_hidden);
  p.head.w2 = glorot(arch.head_hidden, 1, rng);
  p.head.b2 = Matrix::Zero(1, 1);
  return p;
}

void validate_params(const ModelParams& p, Index feature_dim, Index view_count) {
  if (p.view_count() != view_count || static_cast<Index>(p.query_encoders.size()) != view_count ||
      static_cast<Index>(p.attention.weights.size()) != view_count) {
    throw Error("model was built for " + std::to_string(p.view_count()) + " views, graph has " +
                std::to_string(view_count));
  }
  Index out = -1;
  for (Index r = 0; r < view_count; ++r) {
    const auto& ve = p.view_encoders[r];
    const auto& qe = p.query_encoders[r];
    const Index ve_out = check_encoder(ve, feature_dim, "view encoder " + std::to_string(r));
    const Index qe_out = check_encoder(qe, 1, "query encoder " + std::to_string(r));
    if (ve.layers.size() != qe.layers.size()) throw Error("encoder depths differ");
    for (std::size_t l = 0; l + 1 < ve.layers.size(); ++l) {
      if (ve.layers[l].w_self.cols() != qe.layers[l].w_self.cols()) {
        throw Error("query encoder layer " + std::to_string(l) + " width differs from view encoder");
      }
    }
    if (ve_out != qe_out || (out >= 0 && ve_out != out)) throw Error("encoder output widths differ");
    out = ve_out;
    check_shape(p.attention.weights[r], out, out, "attention " + std::to_string(r));
  }
  check_shape(p.head.w1, out, p.head.w1.cols(), "head.w1");
  check_shape(p.head.b1, 1, p.head.w1.cols(), "head.b1");
  check_shape(p.head.w2, p.head.w1.cols(), 1, "head.w2");
  check_shape(p.head.b2, 1, 1, "head.b2");
}

template <typename Scalar>
ForwardPassT<Scalar> model_forward(const PropagationGraph& graph, BasicVar<Scalar> features,
                                   BasicVar<Scalar> query, const ModelVarsT<Scalar>& params,
                                   const ForwardContext& ctx) {
  if (features.rows() != graph.node_count() || query.rows() != graph.node_count()) {
    throw Error("features/query rows do not match the graph");
  }
  ForwardPassT<Scalar> pass;
  pass.views = encode_all_views(graph, features, query, params, ctx);
  pass.fusion = fuse<Scalar>(pass.views, params.attention);
  pass.psi = head_forward(pass.fusion.zeta, params.head);
  return pass;
}

template <typename Scalar>
ForwardPassT<Scalar> model_forward(
    const PropagationGraph& graph,
    std::type_identity_t<std::span<const std::vector<BasicVar<Scalar>>>> view_outputs,
    BasicVar<Scalar> query, const ModelVarsT<Scalar>& params, const ForwardContext& ctx) {
  if (query.rows() != graph.node_count()) throw Error("query rows do not match the graph");
  ForwardPassT<Scalar> pass;
  pass.views = encode_all_views<Scalar>(graph, view_outputs, query, params, ctx);
  pass.fusion = fuse<Scalar>(pass.views, params.attention);
  pass.psi = head_forward(pass.fusion.zeta, params.head);
  return pass;
}

#define CSMLGCN_INSTANTIATE(S)                                                                 \
  template ForwardPassT<S> model_forward(const PropagationGraph&, BasicVar<S>, BasicVar<S>,    \
                                         const ModelVarsT<S>&, const ForwardContext&);         \
  template ForwardPassT<S> model_forward<S>(const PropagationGraph&,                           \
                                            std::span<const std::vector<BasicVar<S>>>,         \
                                            BasicVar<S>, const ModelVarsT<S>&, const ForwardContext&);

CSMLGCN_INSTANTIATE(float)
CSMLGCN_INSTANTIATE(double)

#undef CSMLGCN_INSTANTIATE

}  // namespace csmlgcn
