#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csmlgcn/graph.hpp"

namespace csmlgcn {

// Query set and its ground-truth community, as dense node indices.
struct QueryPair {
  NodeSet query;
  NodeSet community;  // empty when unknown
};

// One JSON-lines record: {"query":[ids...],"community":[ids...]}. Ids may be
// JSON strings or integers; both are matched against node labels.
struct QueryRecord {
  std::vector<std::string> query;
  std::vector<std::string> community;
};

std::vector<QueryRecord> parse_query_lines(std::istream& in, const std::string& source_name);
std::vector<QueryRecord> read_query_file(const std::filesystem::path& path);
void write_query_lines(std::ostream& out, const std::vector<QueryRecord>& records);

QueryPair resolve_query(const MultiplexGraph& g, const QueryRecord& record);
std::vector<QueryPair> resolve_queries(const MultiplexGraph& g, const std::vector<QueryRecord>& records);
QueryRecord to_record(const MultiplexGraph& g, const QueryPair& pair);

}  // namespace csmlgcn
