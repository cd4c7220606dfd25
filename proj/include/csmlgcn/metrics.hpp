#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "csmlgcn/graph.hpp"

namespace csmlgcn {

struct F1Score {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Set F1 between a predicted and a ground-truth node set. Duplicates are
// ignored; an empty prediction or empty overlap scores zero.
inline F1Score f1_score(std::span<const Index> predicted, std::span<const Index> truth) {
  NodeSet pred(predicted.begin(), predicted.end()), gt(truth.begin(), truth.end());
  std::sort(pred.begin(), pred.end());
  pred.erase(std::unique(pred.begin(), pred.end()), pred.end());
  std::sort(gt.begin(), gt.end());
  gt.erase(std::unique(gt.begin(), gt.end()), gt.end());
  if (gt.empty()) throw Error("f1_score: empty ground truth");
  F1Score s;
  if (pred.empty()) return s;
  NodeSet common;
  std::set_intersection(pred.begin(), pred.end(), gt.begin(), gt.end(), std::back_inserter(common));
  if (common.empty()) return s;
  s.precision = static_cast<double>(common.size()) / static_cast<double>(pred.size());
  s.recall = static_cast<double>(common.size()) / static_cast<double>(gt.size());
  s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace csmlgcn
