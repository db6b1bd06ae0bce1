#include "glance/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

#include "glance/errors.hpp"
#include "json.hpp"

namespace glance {

using nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  return in;
}

std::size_t parse_id(std::string_view field, std::size_t line_no) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r' || field.back() == '\t')) {
    field.remove_suffix(1);
  }
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError("malformed node id '" + std::string(field) + "'", line_no);
  }
  return value;
}

}  // namespace

std::vector<NodeRecord> read_nodes_jsonl(const std::filesystem::path& path,
                                         const FeatureFiller& fill_missing) {
  auto in = open_input(path);
  std::map<std::size_t, NodeRecord> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ": invalid JSON: " + e.what(), line_no);
    }
    try {
      if (!obj.is_object()) throw DataError("node record must be an object", line_no);
      NodeRecord rec;
      const auto id = obj.at("id").get<std::int64_t>();
      if (id < 0) throw DataError("negative node id", line_no);
      rec.text = obj.at("text").get<std::string>();
      rec.label = obj.at("label").get<int>();
      if (rec.label < 0) throw DataError("negative label", line_no);
      if (obj.contains("feature")) {
        rec.feature = obj.at("feature").get<std::vector<double>>();
      } else if (fill_missing) {
        rec.feature = fill_missing(rec.text);
      } else {
        throw DataError("missing feature vector and no feature provider configured", line_no);
      }
      if (obj.contains("split")) {
        const auto s = parse_split(obj.at("split").get<std::string>());
        if (!s) throw DataError("split must be train|val|test", line_no);
        rec.split = *s;
      }
      if (!by_id.emplace(static_cast<std::size_t>(id), std::move(rec)).second) {
        throw DataError("duplicate node id " + std::to_string(id), line_no);
      }
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": malformed node record: " + e.what(), line_no);
    }
  }
  std::vector<NodeRecord> out;
  out.reserve(by_id.size());
  std::size_t expected = 0;
  for (auto& [id, rec] : by_id) {
    if (id != expected) throw DataError("node ids must be contiguous from 0; missing id " +
                                        std::to_string(expected));
    out.push_back(std::move(rec));
    ++expected;
  }
  return out;
}

std::vector<Edge> read_edges_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Edge> edges;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header_seen) {
      if (line != "src,dst") throw DataError("edges file must start with header 'src,dst'", line_no);
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw DataError("edge row must have exactly two fields", line_no);
    }
    const std::string_view sv(line);
    edges.push_back({parse_id(sv.substr(0, comma), line_no), parse_id(sv.substr(comma + 1), line_no)});
  }
  if (!header_seen) throw DataError(path.string() + ": empty edges file");
  return edges;
}

TextAttributedGraph ingest_dataset(const std::filesystem::path& nodes_path,
                                   const std::filesystem::path& edges_path,
                                   const IngestOptions& options, BuildStats* stats) {
  auto nodes = read_nodes_jsonl(nodes_path, options.fill_missing_features);
  const auto edges = read_edges_csv(edges_path);
  int num_classes = options.num_classes;
  if (num_classes <= 0) {
    int max_label = -1;
    for (const auto& n : nodes) max_label = std::max(max_label, n.label);
    num_classes = max_label + 1;
  } else {
    // Re-scan so the error names the offending line, which build() cannot know.
    std::ifstream in(nodes_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const int label = json::parse(line).at("label").get<int>();
      if (label >= num_classes) {
        throw DataError(nodes_path.string() + ": label " + std::to_string(label) +
                            " >= num_classes " + std::to_string(num_classes),
                        line_no);
      }
    }
  }
  return TextAttributedGraph::build(std::move(nodes), edges, num_classes, options.split_seed, stats);
}

void write_nodes_jsonl(const TextAttributedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto f = g.feature(v);
    json obj = {{"id", v},
                {"text", g.text(v)},
                {"label", g.label(v)},
                {"feature", std::vector<double>(f.begin(), f.end())},
                {"split", split_name(g.split(v))}};
    out << obj.dump() << '\n';
  }
}

void write_edges_csv(const TextAttributedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "src,dst\n";
  for (const Edge& e : g.edges()) out << e.u << ',' << e.v << '\n';
}

}  // namespace glance
