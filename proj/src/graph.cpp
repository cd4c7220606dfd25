#include "csmlgcn/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>
#include <sstream>

namespace csmlgcn {

namespace {

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& tok, const std::string& where, std::size_t line) {
  double value = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError(where, line, "not a number: '" + tok + "'");
  }
  return value;
}

}  // namespace

MultiplexGraph::MultiplexGraph(Index node_count, Index layer_count)
    : node_count_(node_count),
      adjacency_(static_cast<std::size_t>(layer_count),
                 std::vector<std::vector<Index>>(static_cast<std::size_t>(node_count))) {
  if (node_count < 0 || layer_count < 0) throw Error("negative graph dimensions");
  node_labels_.reserve(static_cast<std::size_t>(node_count));
  for (Index u = 0; u < node_count; ++u) node_labels_.push_back(std::to_string(u));
  for (Index r = 0; r < layer_count; ++r) layer_labels_.push_back(std::to_string(r));
  for (Index u = 0; u < node_count; ++u) label_index_.emplace(node_labels_[u], u);
}

bool MultiplexGraph::add_edge(Index layer, Index u, Index v) {
  if (layer < 0 || layer >= layer_count()) throw Error("layer out of range");
  if (u < 0 || v < 0 || u >= node_count_ || v >= node_count_) throw Error("node out of range");
  if (u == v) throw Error("self-loop on node " + std::to_string(u));
  auto& nu = adjacency_[layer][u];
  auto it = std::lower_bound(nu.begin(), nu.end(), v);
  if (it != nu.end() && *it == v) return false;
  nu.insert(it, v);
  auto& nv = adjacency_[layer][v];
  nv.insert(std::lower_bound(nv.begin(), nv.end(), u), u);
  return true;
}

bool MultiplexGraph::has_edge(Index layer, Index u, Index v) const {
  const auto nu = neighbors(layer, u);
  return std::binary_search(nu.begin(), nu.end(), v);
}

Index MultiplexGraph::edge_count(Index layer) const {
  Index total = 0;
  for (const auto& nu : adjacency_[layer]) total += static_cast<Index>(nu.size());
  return total / 2;
}

Index MultiplexGraph::edge_count() const {
  Index total = 0;
  for (Index r = 0; r < layer_count(); ++r) total += edge_count(r);
  return total;
}

NodeSet MultiplexGraph::union_neighbors(Index u) const {
  NodeSet out;
  for (Index r = 0; r < layer_count(); ++r) {
    const auto nu = neighbors(r, u);
    out.insert(out.end(), nu.begin(), nu.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void MultiplexGraph::set_attributes(Matrix x) {
  if (x.rows() != node_count_) {
    throw Error("attribute rows (" + std::to_string(x.rows()) + ") != node count (" +
                std::to_string(node_count_) + ")");
  }
  attributes_ = std::move(x);
}

void MultiplexGraph::set_labels(std::vector<std::string> nodes, std::vector<std::string> layers) {
  if (static_cast<Index>(nodes.size()) != node_count_ ||
      static_cast<Index>(layers.size()) != layer_count()) {
    throw Error("label count mismatch");
  }
  node_labels_ = std::move(nodes);
  layer_labels_ = std::move(layers);
  label_index_.clear();
  for (Index u = 0; u < node_count_; ++u) {
    if (!label_index_.emplace(node_labels_[u], u).second) {
      throw Error("duplicate node label '" + node_labels_[u] + "'");
    }
  }
}

std::optional<Index> MultiplexGraph::find_node(const std::string& label) const {
  auto it = label_index_.find(label);
  if (it == label_index_.end()) return std::nullopt;
  return it->second;
}

Index MultiplexGraph::node_index(const std::string& label) const {
  if (auto u = find_node(label)) return *u;
  throw Error("unknown node id '" + label + "'");
}

MultiplexGraph parse_multiplex(std::istream& in, const std::string& source_name, LoadStats* stats) {
  std::vector<std::string> node_labels, layer_labels;
  std::unordered_map<std::string, Index> node_ids, layer_ids;
  std::vector<std::tuple<Index, Index, Index>> edges;
  LoadStats local;

  auto intern = [](std::unordered_map<std::string, Index>& ids, std::vector<std::string>& labels,
                   const std::string& tok) {
    auto [it, inserted] = ids.emplace(tok, static_cast<Index>(labels.size()));
    if (inserted) labels.push_back(tok);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto tokens = split_whitespace(text);
    if (tokens.size() != 3) {
      throw ParseError(source_name, line_no, "expected '<layer> <src> <dst>'");
    }
    const Index r = intern(layer_ids, layer_labels, tokens[0]);
    if (tokens[1] == tokens[2]) {
      // The node still joins the node set; only the loop is dropped.
      intern(node_ids, node_labels, tokens[1]);
      ++local.self_loops_dropped;
      continue;
    }
    const Index u = intern(node_ids, node_labels, tokens[1]);
    const Index v = intern(node_ids, node_labels, tokens[2]);
    edges.emplace_back(r, u, v);
  }

  MultiplexGraph g(static_cast<Index>(node_labels.size()), static_cast<Index>(layer_labels.size()));
  for (const auto& [r, u, v] : edges) {
    if (!g.add_edge(r, u, v)) ++local.duplicate_edges;
  }
  g.set_labels(std::move(node_labels), std::move(layer_labels));
  if (local.self_loops_dropped > 0) {
    std::cerr << "warning: " << source_name << ": dropped " << local.self_loops_dropped
              << " self-loop line(s)\n";
  }
  if (stats) *stats = local;
  return g;
}

void read_attributes(MultiplexGraph& g, std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  Index width = -1;
  Matrix x;
  std::vector<bool> seen(static_cast<std::size_t>(g.node_count()), false);
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto fields = split_csv(text);
    if (width < 0) {
      if (fields.empty() || fields[0] != "node") {
        throw ParseError(source_name, line_no, "expected header 'node,f0,...'");
      }
      width = static_cast<Index>(fields.size()) - 1;
      x = Matrix::Zero(g.node_count(), width);
      continue;
    }
    if (static_cast<Index>(fields.size()) != width + 1) {
      throw ParseError(source_name, line_no, "expected " + std::to_string(width + 1) + " fields");
    }
    const auto u = g.find_node(fields[0]);
    if (!u) throw ParseError(source_name, line_no, "attribute row for unknown node '" + fields[0] + "'");
    if (seen[*u]) throw ParseError(source_name, line_no, "duplicate row for node '" + fields[0] + "'");
    seen[*u] = true;
    for (Index j = 0; j < width; ++j) x(*u, j) = parse_double(fields[j + 1], source_name, line_no);
  }
  if (width < 0) throw ParseError(source_name, line_no, "missing header");
  for (Index u = 0; u < g.node_count(); ++u) {
    if (!seen[u]) throw Error(source_name + ": no attribute row for node '" + g.node_labels()[u] + "'");
  }
  g.set_attributes(std::move(x));
}

MultiplexGraph load_multiplex(const std::filesystem::path& edge_path,
                              const std::optional<std::filesystem::path>& attr_path,
                              LoadStats* stats) {
  std::ifstream edges(edge_path);
  if (!edges) throw Error("cannot open edge file " + edge_path.string());
  auto g = parse_multiplex(edges, edge_path.string(), stats);
  if (attr_path) {
    std::ifstream attrs(*attr_path);
    if (!attrs) throw Error("cannot open attribute file " + attr_path->string());
    read_attributes(g, attrs, attr_path->string());
  }
  return g;
}

void write_edge_list(const MultiplexGraph& g, std::ostream& out) {
  for (Index r = 0; r < g.layer_count(); ++r) {
    for (Index u = 0; u < g.node_count(); ++u) {
      for (Index v : g.neighbors(r, u)) {
        if (v > u) {
          out << g.layer_labels()[r] << '\t' << g.node_labels()[u] << '\t' << g.node_labels()[v]
              << '\n';
        }
      }
    }
  }
}

void write_attributes(const MultiplexGraph& g, std::ostream& out) {
  if (!g.attributes()) throw Error("graph has no attributes");
  const Matrix& x = *g.attributes();
  out << "node";
  for (Index j = 0; j < x.cols(); ++j) out << ",f" << j;
  out << '\n';
  char buf[32];
  for (Index u = 0; u < x.rows(); ++u) {
    out << g.node_labels()[u];
    for (Index j = 0; j < x.cols(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof(buf), x(u, j));
      out << ',' << std::string_view(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

DegreeCache::DegreeCache(const MultiplexGraph& g) {
  p_.resize(static_cast<std::size_t>(g.layer_count()));
  for (Index r = 0; r < g.layer_count(); ++r) {
    auto& row = p_[r];
    row.resize(static_cast<std::size_t>(g.node_count()));
    for (Index u = 0; u < g.node_count(); ++u) row[u] = static_cast<double>(g.degree(r, u) + 1);
  }
}

DegreeCache degree_norm(const MultiplexGraph& g) { return DegreeCache(g); }

NormalizedAdjacency NormalizedAdjacency::build(const MultiplexGraph& g, const DegreeCache& p,
                                               Index layer) {
  NormalizedAdjacency a;
  a.rows = g.node_count();
  a.offsets.reserve(static_cast<std::size_t>(a.rows + 1));
  a.offsets.push_back(0);
  for (Index u = 0; u < a.rows; ++u) {
    for (Index v : g.neighbors(layer, u)) {
      a.columns.push_back(v);
      a.weights.push_back(1.0 / std::sqrt(p(layer, u) * p(layer, v)));
    }
    a.offsets.push_back(static_cast<Index>(a.columns.size()));
  }
  return a;
}

Matrix NormalizedAdjacency::to_dense() const {
  Matrix out = Matrix::Zero(rows, rows);
  for (Index u = 0; u < rows; ++u) {
    for (Index k = offsets[u]; k < offsets[u + 1]; ++k) out(u, columns[k]) = weights[k];
  }
  return out;
}

PropagationGraph::PropagationGraph(const MultiplexGraph& g) {
  const DegreeCache p(g);
  layers.reserve(static_cast<std::size_t>(g.layer_count()));
  for (Index r = 0; r < g.layer_count(); ++r) layers.push_back(NormalizedAdjacency::build(g, p, r));
}

std::vector<Index> union_distances(const MultiplexGraph& g, std::span<const Index> seeds) {
  std::vector<Index> dist(static_cast<std::size_t>(g.node_count()), -1);
  std::deque<Index> frontier;
  for (Index s : seeds) {
    if (s < 0 || s >= g.node_count()) throw Error("seed " + std::to_string(s) + " out of range");
    if (dist[s] < 0) {
      dist[s] = 0;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const Index u = frontier.front();
    frontier.pop_front();
    for (Index r = 0; r < g.layer_count(); ++r) {
      for (Index v : g.neighbors(r, u)) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          frontier.push_back(v);
        }
      }
    }
  }
  return dist;
}

Subgraph khop_subgraph(const MultiplexGraph& g, std::span<const Index> seeds, Index hops) {
  if (seeds.empty()) throw Error("khop_subgraph: empty seed set");
  if (hops < 0) throw Error("khop_subgraph: negative hop count");
  const auto dist = union_distances(g, seeds);

  Subgraph sub;
  sub.from_parent.assign(static_cast<std::size_t>(g.node_count()), -1);
  for (Index u = 0; u < g.node_count(); ++u) {
    if (dist[u] >= 0 && dist[u] <= hops) {
      sub.from_parent[u] = static_cast<Index>(sub.to_parent.size());
      sub.to_parent.push_back(u);
    }
  }
  const auto n = static_cast<Index>(sub.to_parent.size());
  sub.graph = MultiplexGraph(n, g.layer_count());
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index u = sub.to_parent[i];
    labels.push_back(g.node_labels()[u]);
    for (Index r = 0; r < g.layer_count(); ++r) {
      for (Index v : g.neighbors(r, u)) {
        const Index j = sub.from_parent[v];
        if (j > i) sub.graph.add_edge(r, i, j);
      }
    }
  }
  sub.graph.set_labels(std::move(labels), g.layer_labels());
  if (g.attributes()) {
    Matrix x(n, g.attributes()->cols());
    for (Index i = 0; i < n; ++i) x.row(i) = g.attributes()->row(sub.to_parent[i]);
    sub.graph.set_attributes(std::move(x));
  }
  return sub;
}

Matrix QueryVector::as_column() const {
  Matrix c(size(), 1);
  for (Index u = 0; u < size(); ++u) c(u, 0) = bits[u] ? 1.0 : 0.0;
  return c;
}

QueryVector encode_query(std::span<const Index> query, Index node_count) {
  if (query.empty()) throw Error("empty query");
  QueryVector q;
  q.bits.assign(static_cast<std::size_t>(node_count), 0);
  for (Index u : query) {
    if (u < 0 || u >= node_count) {
      throw Error("query node " + std::to_string(u) + " out of range [0, " +
                  std::to_string(node_count) + ")");
    }
    q.bits[u] = 1;
  }
  return q;
}

Matrix node_features(const MultiplexGraph& g) {
  if (g.attributes()) return row_normalized(*g.attributes());
  Matrix x = Matrix::Zero(g.node_count(), g.layer_count());
  for (Index r = 0; r < g.layer_count(); ++r) {
    Index max_deg = 0;
    for (Index u = 0; u < g.node_count(); ++u) max_deg = std::max(max_deg, g.degree(r, u));
    if (max_deg == 0) continue;
    for (Index u = 0; u < g.node_count(); ++u) {
      x(u, r) = static_cast<double>(g.degree(r, u)) / static_cast<double>(max_deg);
    }
  }
  return row_normalized(x);
}

NodeSet resolve_nodes(const MultiplexGraph& g, std::span<const std::string> labels) {
  NodeSet out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(g.node_index(l));
  return out;
}

}  // namespace csmlgcn
