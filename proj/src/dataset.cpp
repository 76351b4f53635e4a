#include "gml/dataset.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace gml {

namespace {

using nlohmann::json;

void write_text(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot open " + file.string() + " for writing");
  out << content;
  if (!out) throw DataError("write failed: " + file.string());
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  return in;
}

[[noreturn]] void bad_row(const std::filesystem::path& file, std::size_t line,
                          const std::string& why) {
  throw DataError(file.filename().string() + " line " + std::to_string(line) + ": " + why);
}

long parse_long(const std::string& s, const std::filesystem::path& file, std::size_t line) {
  if (s.empty()) bad_row(file, line, "empty integer field");
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) bad_row(file, line, "bad integer '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::filesystem::path& file, std::size_t line) {
  if (s.empty()) bad_row(file, line, "empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size()) bad_row(file, line, "bad number '" + s + "'");
  return v;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void write_bundle(const AttributedGraph& graph, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  std::string edges;
  for (std::size_t v = 0; v < graph.num_nodes; ++v) {
    for (std::size_t e = graph.row_ptr[v]; e < graph.row_ptr[v + 1]; ++e) {
      const std::int32_t u = graph.col_idx[e];
      if (u > static_cast<std::int32_t>(v)) {
        edges += std::to_string(v);
        edges += '\t';
        edges += std::to_string(u);
        edges += '\n';
      }
    }
  }
  write_text(dir / "graph.edges", edges);

  const std::size_t d = graph.features.shape()[1];
  std::string feat = "node_id";
  for (std::size_t k = 0; k < d; ++k) feat += ",f" + std::to_string(k);
  feat += '\n';
  for (std::size_t v = 0; v < graph.num_nodes; ++v) {
    feat += std::to_string(v);
    for (std::size_t k = 0; k < d; ++k) {
      feat += ',';
      feat += format_double(graph.features.at(v, k));
    }
    feat += '\n';
  }
  write_text(dir / "features.csv", feat);

  std::string labels = "node_id,class_id\n";
  for (std::size_t v = 0; v < graph.num_nodes; ++v) {
    labels += std::to_string(v) + "," + std::to_string(graph.labels[v]) + "\n";
  }
  write_text(dir / "labels.csv", labels);

  json splits;
  splits["train_classes"] = graph.splits.train_classes;
  splits["val_classes"] = graph.splits.val_classes;
  splits["test_classes"] = graph.splits.test_classes;
  write_text(dir / "splits.json", splits.dump(2) + "\n");
}

AttributedGraph load_bundle(const std::filesystem::path& dir, BuildReport* report) {
  // features.csv fixes the node count and dimension.
  const std::filesystem::path feat_path = dir / "features.csv";
  std::ifstream feat_in = open_input(feat_path);
  std::string line;
  if (!std::getline(feat_in, line)) bad_row(feat_path, 1, "missing header");
  const std::vector<std::string> header = split_fields(line, ',');
  if (header.size() < 2 || header[0] != "node_id") {
    bad_row(feat_path, 1, "expected header node_id,f0,...");
  }
  const std::size_t d = header.size() - 1;
  std::vector<double> values;
  std::size_t lineno = 1;
  std::size_t n = 0;
  while (std::getline(feat_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line, ',');
    if (f.size() != d + 1) bad_row(feat_path, lineno, "expected " + std::to_string(d + 1) + " fields");
    if (parse_long(f[0], feat_path, lineno) != static_cast<long>(n)) {
      bad_row(feat_path, lineno, "node ids must be dense and in order");
    }
    for (std::size_t k = 0; k < d; ++k) values.push_back(parse_double(f[k + 1], feat_path, lineno));
    ++n;
  }
  if (n == 0) bad_row(feat_path, lineno, "no nodes");

  const std::filesystem::path lab_path = dir / "labels.csv";
  std::ifstream lab_in = open_input(lab_path);
  if (!std::getline(lab_in, line)) bad_row(lab_path, 1, "missing header");
  if (split_fields(line, ',') != std::vector<std::string>{"node_id", "class_id"}) {
    bad_row(lab_path, 1, "expected header node_id,class_id");
  }
  std::vector<int> labels;
  lineno = 1;
  while (std::getline(lab_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line, ',');
    if (f.size() != 2) bad_row(lab_path, lineno, "expected 2 fields");
    if (parse_long(f[0], lab_path, lineno) != static_cast<long>(labels.size())) {
      bad_row(lab_path, lineno, "node ids must be dense and in order");
    }
    labels.push_back(static_cast<int>(parse_long(f[1], lab_path, lineno)));
  }
  if (labels.size() != n) {
    throw DataError("labels.csv has " + std::to_string(labels.size()) + " rows, expected " +
                    std::to_string(n));
  }

  const std::filesystem::path edge_path = dir / "graph.edges";
  std::ifstream edge_in = open_input(edge_path);
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  lineno = 0;
  while (std::getline(edge_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line, '\t');
    if (f.size() != 2) bad_row(edge_path, lineno, "expected src<TAB>dst");
    edges.emplace_back(parse_long(f[0], edge_path, lineno), parse_long(f[1], edge_path, lineno));
  }

  const std::filesystem::path split_path = dir / "splits.json";
  std::ifstream split_in = open_input(split_path);
  json sj;
  try {
    split_in >> sj;
  } catch (const json::exception& e) {
    throw DataError("splits.json: " + std::string(e.what()));
  }
  ClassSplits splits;
  try {
    splits.train_classes = sj.at("train_classes").get<std::vector<int>>();
    splits.val_classes = sj.at("val_classes").get<std::vector<int>>();
    splits.test_classes = sj.at("test_classes").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DataError("splits.json: " + std::string(e.what()));
  }

  return build_graph(n, edges, Tensor({n, d}, std::move(values)), std::move(labels),
                     std::move(splits), report);
}

void save_params(const ParamSet& params, const std::filesystem::path& file) {
  json tensors;
  auto put = [&tensors](const char* name, const std::vector<double>& v,
                        std::vector<std::size_t> shape) {
    json entry;
    entry["shape"] = shape;
    json vals = json::array();
    for (double x : v) vals.push_back(format_double(x));
    entry["values"] = std::move(vals);
    tensors[name] = std::move(entry);
  };
  const std::size_t d = static_cast<std::size_t>(params.d);
  const std::size_t dh = static_cast<std::size_t>(params.d_hidden);
  const std::size_t n = static_cast<std::size_t>(params.n_way);
  put("encoder", params.encoder, {d, dh});
  put("reweight", params.reweight, {2 * dh});
  put("attention", params.attention, {2});
  put("classifier", params.classifier, {dh, n});
  put("bias", params.bias, {n});
  json root;
  root["format"] = "params-v1";
  root["d"] = params.d;
  root["d_hidden"] = params.d_hidden;
  root["n_way"] = params.n_way;
  root["tensors"] = std::move(tensors);
  write_text(file, root.dump(2) + "\n");
}

ParamSet load_params(const std::filesystem::path& file) {
  std::ifstream in = open_input(file);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": " + std::string(e.what()));
  }
  try {
    if (root.at("format").get<std::string>() != "params-v1") {
      throw DataError(file.string() + ": unknown checkpoint format");
    }
    ParamSet p = ParamSet::zeros(root.at("d").get<int>(), root.at("d_hidden").get<int>(),
                                 root.at("n_way").get<int>());
    const json& tensors = root.at("tensors");
    auto get = [&file, &tensors](const char* name, std::vector<double>& dst) {
      const json& entry = tensors.at(name);
      const auto& vals = entry.at("values");
      if (vals.size() != dst.size()) {
        throw DataError(file.string() + ": tensor '" + name + "' has " +
                        std::to_string(vals.size()) + " values, expected " +
                        std::to_string(dst.size()));
      }
      std::size_t expect = 1;
      for (const auto& s : entry.at("shape")) expect *= s.get<std::size_t>();
      if (expect != dst.size()) {
        throw DataError(file.string() + ": tensor '" + name + "' shape mismatch");
      }
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const std::string s = vals[i].get<std::string>();
        errno = 0;
        char* end = nullptr;
        dst[i] = std::strtod(s.c_str(), &end);
        if (errno != 0 || end != s.c_str() + s.size() || !std::isfinite(dst[i])) {
          throw DataError(file.string() + ": tensor '" + name + "' bad value '" + s + "'");
        }
      }
    };
    get("encoder", p.encoder);
    get("reweight", p.reweight);
    get("attention", p.attention);
    get("classifier", p.classifier);
    get("bias", p.bias);
    return p;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": " + std::string(e.what()));
  }
}

void write_noisy_labels(const NoisyLabeling& labeling, const std::filesystem::path& file) {
  std::string out = "node_id,class_id,flipped\n";
  for (std::size_t v = 0; v < labeling.labels.size(); ++v) {
    out += std::to_string(v) + "," + std::to_string(labeling.labels[v]) + "," +
           std::to_string(static_cast<int>(labeling.flipped[v])) + "\n";
  }
  write_text(file, out);
}

}  // namespace gml
