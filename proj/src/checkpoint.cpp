#include "csmlgcn/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace csmlgcn {

namespace {

constexpr const char* kMagic = "csmlgcn-checkpoint";

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string next() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_no_, what); }

  std::pair<std::string, Index> section(const std::string& expected) {
    std::istringstream fields(next());
    std::string name;
    Index count = -1;
    if (!(fields >> name >> count) || name != expected || count < 0) {
      fail("expected '" + expected + " <count>'");
    }
    return {name, count};
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  std::ostringstream cfg;
  write_config(cfg, ckpt.config);
  std::size_t cfg_lines = 0;
  for (char c : cfg.str()) cfg_lines += c == '\n';
  out << "config " << cfg_lines << '\n' << cfg.str();
  out << "feature_dim " << ckpt.feature_dim << '\n';
  out << "layers " << ckpt.layer_labels.size() << '\n';
  for (const auto& l : ckpt.layer_labels) out << l << '\n';
  out << "nodes " << ckpt.node_labels.size() << '\n';
  for (const auto& l : ckpt.node_labels) out << l << '\n';
  std::size_t count = 0;
  ckpt.params.for_each([&](const std::string&, const Matrix&) { ++count; });
  out << "arrays " << count << '\n';
  ckpt.params.for_each([&](const std::string& name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << shortest(m(i, j));
      out << '\n';
    }
  });
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source_name) {
  LineReader reader(in, source_name);
  {
    std::istringstream header(reader.next());
    std::string magic;
    int version = 0;
    if (!(header >> magic >> version) || magic != kMagic) reader.fail("not a checkpoint file");
    if (version != kCheckpointVersion) {
      reader.fail("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
    }
  }
  Checkpoint ckpt;
  {
    const auto [_, lines] = reader.section("config");
    std::ostringstream cfg;
    for (Index i = 0; i < lines; ++i) cfg << reader.next() << '\n';
    std::istringstream cfg_in(cfg.str());
    try {
      ckpt.config = parse_config(cfg_in, source_name + " [config]");
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }
  ckpt.feature_dim = reader.section("feature_dim").second;
  const Index layers = reader.section("layers").second;
  for (Index i = 0; i < layers; ++i) ckpt.layer_labels.push_back(reader.next());
  const Index nodes = reader.section("nodes").second;
  for (Index i = 0; i < nodes; ++i) ckpt.node_labels.push_back(reader.next());

  if (ckpt.feature_dim < 1 || layers < 1) reader.fail("checkpoint has no model dimensions");
  Rng unused(0);
  ckpt.params = init_params(ckpt.config.architecture(ckpt.feature_dim, layers), unused);
  std::map<std::string, Matrix*> slots;
  ckpt.params.for_each([&](const std::string& name, Matrix& m) { slots.emplace(name, &m); });

  const Index arrays_count = reader.section("arrays").second;
  if (arrays_count != static_cast<Index>(slots.size())) {
    reader.fail("expected " + std::to_string(slots.size()) + " arrays, file declares " +
                std::to_string(arrays_count));
  }
  for (Index a = 0; a < arrays_count; ++a) {
    std::istringstream head(reader.next());
    std::string name;
    Index rows = -1, cols = -1;
    if (!(head >> name >> rows >> cols)) reader.fail("bad array header");
    auto it = slots.find(name);
    if (it == slots.end()) reader.fail("unexpected array '" + name + "'");
    Matrix& m = *it->second;
    if (m.rows() != rows || m.cols() != cols) reader.fail("array '" + name + "' has the wrong shape");
    for (Index i = 0; i < rows; ++i) {
      const std::string line = reader.next();
      const char* p = line.data();
      const char* end = p + line.size();
      for (Index j = 0; j < cols; ++j) {
        while (p < end && *p == ' ') ++p;
        auto [next, ec] = std::from_chars(p, end, m(i, j));
        if (ec != std::errc{}) reader.fail("bad number in array '" + name + "'");
        p = next;
      }
      while (p < end && *p == ' ') ++p;
      if (p != end) reader.fail("too many values in array '" + name + "'");
    }
    slots.erase(it);
  }
  if (reader.next() != "end") reader.fail("missing end marker");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace csmlgcn
