#include "csmlgcn/head.hpp"

#include <numeric>

namespace csmlgcn {

template <typename Scalar>
BasicVar<Scalar> head_forward(BasicVar<Scalar> zeta, const HeadVarsT<Scalar>& params) {
  const auto hidden = relu(add(matmul(zeta, params.w1), params.b1));
  const auto psi = sigmoid(add(matmul(hidden, params.w2), params.b2));
  if (!psi.value().allFinite()) throw Error("head_forward: non-finite membership scores");
  return psi;
}

template BasicVar<float> head_forward(BasicVar<float>, const HeadVarsT<float>&);
template BasicVar<double> head_forward(BasicVar<double>, const HeadVarsT<double>&);

double total_loss(std::span<const double> per_query) {
  if (per_query.empty()) throw Error("total_loss: no query losses");
  return std::accumulate(per_query.begin(), per_query.end(), 0.0);
}

}  // namespace csmlgcn
