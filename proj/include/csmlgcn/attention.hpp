#pragma once

#include <span>
#include <type_traits>
#include <vector>

#include "csmlgcn/autodiff.hpp"
#include "csmlgcn/params.hpp"

namespace csmlgcn {

template <typename Scalar>
struct FusionOutputT {
  BasicVar<Scalar> zeta;                    // n x d
  BasicVar<Scalar> alpha;                   // n x L, rows sum to one
  std::vector<BasicVar<Scalar>> summaries;  // L rows of 1 x d
};

using FusionOutput = FusionOutputT<double>;

// Column-wise sum of a view's node embeddings.
template <typename Scalar>
BasicVar<Scalar> view_summary(BasicVar<Scalar> h) {
  return sum_rows(h);
}

// Node-level attention over views:
//   score(u, r) = tanh(s_r W_r h_r(u)^T),  alpha(u, .) = softmax_r(score(u, .)),
//   zeta(u) = sum_r alpha(u, r) h_r(u).
template <typename Scalar>
FusionOutputT<Scalar> fuse(std::type_identity_t<std::span<const BasicVar<Scalar>>> views,
                           const AttentionVarsT<Scalar>& params);

}  // namespace csmlgcn
