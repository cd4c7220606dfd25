#include "csmlgcn/queries.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace csmlgcn {

namespace {

std::vector<std::string> id_list(const nlohmann::json& arr, const std::string& where,
                                 std::size_t line, const char* key) {
  if (!arr.is_array()) throw ParseError(where, line, std::string("'") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (v.is_string()) {
      out.push_back(v.get<std::string>());
    } else if (v.is_number_integer()) {
      out.push_back(std::to_string(v.get<std::int64_t>()));
    } else {
      throw ParseError(where, line, std::string("ids in '") + key + "' must be strings or integers");
    }
  }
  return out;
}

}  // namespace

std::vector<QueryRecord> parse_query_lines(std::istream& in, const std::string& source_name) {
  std::vector<QueryRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source_name, line_no, e.what());
    }
    if (!obj.is_object() || !obj.contains("query")) {
      throw ParseError(source_name, line_no, "expected an object with a 'query' field");
    }
    QueryRecord rec;
    rec.query = id_list(obj["query"], source_name, line_no, "query");
    if (rec.query.empty()) throw ParseError(source_name, line_no, "empty query");
    if (obj.contains("community")) rec.community = id_list(obj["community"], source_name, line_no, "community");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<QueryRecord> read_query_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open query file " + path.string());
  return parse_query_lines(in, path.string());
}

void write_query_lines(std::ostream& out, const std::vector<QueryRecord>& records) {
  for (const auto& rec : records) {
    nlohmann::json obj;
    obj["query"] = rec.query;
    if (!rec.community.empty()) obj["community"] = rec.community;
    out << obj.dump() << '\n';
  }
}

QueryPair resolve_query(const MultiplexGraph& g, const QueryRecord& record) {
  QueryPair pair;
  pair.query = resolve_nodes(g, record.query);
  pair.community = resolve_nodes(g, record.community);
  return pair;
}

std::vector<QueryPair> resolve_queries(const MultiplexGraph& g, const std::vector<QueryRecord>& records) {
  std::vector<QueryPair> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(resolve_query(g, r));
  return out;
}

QueryRecord to_record(const MultiplexGraph& g, const QueryPair& pair) {
  QueryRecord rec;
  for (Index u : pair.query) rec.query.push_back(g.node_labels()[u]);
  for (Index u : pair.community) rec.community.push_back(g.node_labels()[u]);
  return rec;
}

}  // namespace csmlgcn
