#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csmlgcn/types.hpp"

namespace csmlgcn {

using NodeSet = std::vector<Index>;

// Undirected multiplex graph: one shared node set, one edge set per layer.
// Neighbor lists are sorted, symmetric, free of self-loops and duplicates.
class MultiplexGraph {
 public:
  MultiplexGraph() = default;
  MultiplexGraph(Index node_count, Index layer_count);

  Index node_count() const { return node_count_; }
  Index layer_count() const { return static_cast<Index>(adjacency_.size()); }

  // Inserts {u, v} into layer r. Returns false when the edge already exists.
  // Throws on self-loops and out-of-range ids.
  bool add_edge(Index layer, Index u, Index v);

  std::span<const Index> neighbors(Index layer, Index u) const {
    return adjacency_[static_cast<std::size_t>(layer)][static_cast<std::size_t>(u)];
  }
  Index degree(Index layer, Index u) const {
    return static_cast<Index>(neighbors(layer, u).size());
  }
  bool has_edge(Index layer, Index u, Index v) const;
  Index edge_count(Index layer) const;
  Index edge_count() const;

  // Sorted neighbors of u over the union of all layers.
  NodeSet union_neighbors(Index u) const;

  const std::optional<Matrix>& attributes() const { return attributes_; }
  void set_attributes(Matrix x);

  const std::vector<std::string>& node_labels() const { return node_labels_; }
  const std::vector<std::string>& layer_labels() const { return layer_labels_; }
  void set_labels(std::vector<std::string> nodes, std::vector<std::string> layers);

  std::optional<Index> find_node(const std::string& label) const;
  Index node_index(const std::string& label) const;  // throws on unknown id

 private:
  Index node_count_ = 0;
  std::vector<std::vector<std::vector<Index>>> adjacency_;
  std::optional<Matrix> attributes_;
  std::vector<std::string> node_labels_;
  std::vector<std::string> layer_labels_;
  std::unordered_map<std::string, Index> label_index_;
};

struct LoadStats {
  std::size_t self_loops_dropped = 0;
  std::size_t duplicate_edges = 0;
};

// Edge file: `<layer> <src> <dst>` per line, `#` comments. Attribute file:
// CSV with header `node,f0,...` and one row per node.
MultiplexGraph load_multiplex(const std::filesystem::path& edge_path,
                              const std::optional<std::filesystem::path>& attr_path = std::nullopt,
                              LoadStats* stats = nullptr);
MultiplexGraph parse_multiplex(std::istream& edges, const std::string& source_name,
                               LoadStats* stats = nullptr);
void read_attributes(MultiplexGraph& g, std::istream& csv, const std::string& source_name);

void write_edge_list(const MultiplexGraph& g, std::ostream& out);
void write_attributes(const MultiplexGraph& g, std::ostream& out);

// p[r][u] = deg_r(u) + 1.
class DegreeCache {
 public:
  explicit DegreeCache(const MultiplexGraph& g);

  double operator()(Index layer, Index u) const {
    return p_[static_cast<std::size_t>(layer)][static_cast<std::size_t>(u)];
  }
  std::span<const double> layer(Index r) const { return p_[static_cast<std::size_t>(r)]; }

 private:
  std::vector<std::vector<double>> p_;
};

DegreeCache degree_norm(const MultiplexGraph& g);

// CSR form of the symmetric normalized adjacency of one layer:
// weight(u, v) = 1 / sqrt(p_u p_v) for every edge, no diagonal.
struct NormalizedAdjacency {
  Index rows = 0;
  std::vector<Index> offsets;  // rows + 1
  std::vector<Index> columns;
  std::vector<double> weights;

  static NormalizedAdjacency build(const MultiplexGraph& g, const DegreeCache& p, Index layer);

  Index nonzeros() const { return static_cast<Index>(columns.size()); }
  Matrix to_dense() const;

  // out = A * h. Rows are gathered as contiguous vectors, so the work is
  // nnz axpys of width h.cols().
  template <typename Derived>
  MatrixX<typename Derived::Scalar> apply(const Eigen::MatrixBase<Derived>& h) const {
    using Scalar = typename Derived::Scalar;
    using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (h.cols() == 1) {
      VectorX<Scalar> out(rows);
      for (Index u = 0; u < rows; ++u) {
        Scalar acc(0);
        for (Index k = offsets[u]; k < offsets[u + 1]; ++k) acc += static_cast<Scalar>(weights[k]) * h(columns[k], 0);
        out(u) = acc;
      }
      return out;
    }
    const RowMajor in = h;
    RowMajor out = RowMajor::Zero(h.rows(), h.cols());
    for (Index u = 0; u < rows; ++u) {
      auto row = out.row(u);
      for (Index k = offsets[u]; k < offsets[u + 1]; ++k) {
        row.noalias() += static_cast<Scalar>(weights[k]) * in.row(columns[k]);
      }
    }
    return out;
  }
};

// Per-layer propagation operators for one graph.
struct PropagationGraph {
  std::vector<NormalizedAdjacency> layers;

  explicit PropagationGraph(const MultiplexGraph& g);
  Index node_count() const { return layers.empty() ? 0 : layers.front().rows; }
  Index layer_count() const { return static_cast<Index>(layers.size()); }
};

struct Subgraph {
  MultiplexGraph graph;
  NodeSet to_parent;              // local -> parent index, ascending
  std::vector<Index> from_parent; // parent -> local index, -1 when absent

  Index local(Index parent) const { return from_parent[static_cast<std::size_t>(parent)]; }
};

// Induced subgraph on every node within union-graph distance <= hops of a
// seed. Attributes and labels are carried over.
Subgraph khop_subgraph(const MultiplexGraph& g, std::span<const Index> seeds, Index hops);

// Union-graph BFS distances from the seeds, -1 for unreachable nodes.
std::vector<Index> union_distances(const MultiplexGraph& g, std::span<const Index> seeds);

struct QueryVector {
  std::vector<std::uint8_t> bits;

  Index size() const { return static_cast<Index>(bits.size()); }
  bool contains(Index u) const { return bits[static_cast<std::size_t>(u)] != 0; }
  Matrix as_column() const;
};

QueryVector encode_query(std::span<const Index> query, Index node_count);

// Feature matrix fed to the view encoders: stored attributes when present,
// otherwise one column per layer holding deg_r(u) / max_v deg_r(v). Rows are
// L2-normalized; all-zero rows stay zero.
Matrix node_features(const MultiplexGraph& g);

template <typename Derived>
MatrixX<typename Derived::Scalar> row_normalized(const Eigen::MatrixBase<Derived>& x) {
  MatrixX<typename Derived::Scalar> out = x;
  for (Index u = 0; u < out.rows(); ++u) {
    const auto norm = out.row(u).norm();
    if (norm > 0) out.row(u) /= norm;
  }
  return out;
}

// Labels-resolving helpers for query files and CLI arguments.
NodeSet resolve_nodes(const MultiplexGraph& g, std::span<const std::string> labels);

}  // namespace csmlgcn
