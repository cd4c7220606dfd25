#pragma once

#include <span>

#include "csmlgcn/autodiff.hpp"
#include "csmlgcn/params.hpp"

namespace csmlgcn {

// n x 1 membership probabilities.
template <typename Scalar>
BasicVar<Scalar> head_forward(BasicVar<Scalar> zeta, const HeadVarsT<Scalar>& params);

// Mean BCE over the nodes the scores span.
template <typename Scalar>
BasicVar<Scalar> bce_loss(BasicVar<Scalar> psi, std::span<const double> labels) {
  return bce(psi, labels);
}

double total_loss(std::span<const double> per_query);

}  // namespace csmlgcn
