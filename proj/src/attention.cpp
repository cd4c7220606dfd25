#include "csmlgcn/attention.hpp"

namespace csmlgcn {

template <typename Scalar>
FusionOutputT<Scalar> fuse(std::type_identity_t<std::span<const BasicVar<Scalar>>> views,
                           const AttentionVarsT<Scalar>& params) {
  using V = BasicVar<Scalar>;
  if (views.empty()) throw Error("fuse: no views");
  if (params.weights.size() != views.size()) {
    throw Error("fuse: " + std::to_string(params.weights.size()) + " attention matrices for " +
                std::to_string(views.size()) + " views");
  }
  const Index n = views.front().rows(), d = views.front().cols();
  FusionOutputT<Scalar> out;
  std::vector<V> scores;
  for (std::size_t r = 0; r < views.size(); ++r) {
    const V h = views[r];
    const V w = params.weights[r];
    if (h.rows() != n || h.cols() != d) throw Error("fuse: views differ in shape");
    if (w.rows() != d || w.cols() != d) throw Error("fuse: attention matrix must be d x d");
    const V s = view_summary(h);
    out.summaries.push_back(s);
    // h (s W)^T gives s^T W h_u for every node at once.
    scores.push_back(tanh(matmul(h, transpose(matmul(s, w)))));
  }
  out.alpha = softmax_rows(hconcat<Scalar>(scores));
  out.zeta = scale_rows(views[0], column(out.alpha, 0));
  for (std::size_t r = 1; r < views.size(); ++r) {
    out.zeta = out.zeta + scale_rows(views[r], column(out.alpha, static_cast<Index>(r)));
  }
  return out;
}

template FusionOutputT<float> fuse<float>(std::span<const BasicVar<float>>, const AttentionVarsT<float>&);
template FusionOutputT<double> fuse<double>(std::span<const BasicVar<double>>, const AttentionVarsT<double>&);

}  // namespace csmlgcn
