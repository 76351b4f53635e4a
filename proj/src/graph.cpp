#include "gml/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace gml {

const std::vector<int>& AttributedGraph::split_classes(int which) const {
  switch (which) {
    case 0: return splits.train_classes;
    case 1: return splits.val_classes;
    default: return splits.test_classes;
  }
}

namespace {

void validate_splits(const ClassSplits& splits, const std::vector<int>& labels) {
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto* part : {&splits.train_classes, &splits.val_classes, &splits.test_classes}) {
    for (int c : *part) seen.insert(c);
    total += part->size();
  }
  if (seen.size() != total) throw DataError("build_graph: splits overlap");
  std::set<int> present(labels.begin(), labels.end());
  if (present != seen) {
    throw DataError("build_graph: splits must cover exactly the classes present in labels");
  }
}

}  // namespace

AttributedGraph build_graph(std::size_t num_nodes,
                            const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                            Tensor features, std::vector<int> labels, ClassSplits splits,
                            BuildReport* report) {
  if (features.shape().size() != 2 || features.shape()[0] != num_nodes) {
    throw DataError("build_graph: features must be num_nodes x d");
  }
  if (labels.size() != num_nodes) throw DataError("build_graph: one label per node required");
  for (int c : labels) {
    if (c < 0) throw DataError("build_graph: negative class label");
  }
  validate_splits(splits, labels);

  BuildReport rep;
  std::vector<std::pair<std::int32_t, std::int32_t>> undirected;
  undirected.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= static_cast<std::int64_t>(num_nodes) ||
        b >= static_cast<std::int64_t>(num_nodes)) {
      throw DataError("build_graph: edge endpoint out of range: " + std::to_string(a) + "-" +
                      std::to_string(b));
    }
    if (a == b) {
      ++rep.self_loops_removed;
      continue;
    }
    undirected.emplace_back(static_cast<std::int32_t>(std::min(a, b)),
                            static_cast<std::int32_t>(std::max(a, b)));
  }
  std::sort(undirected.begin(), undirected.end());
  const std::size_t before = undirected.size();
  undirected.erase(std::unique(undirected.begin(), undirected.end()), undirected.end());
  rep.duplicate_edges_removed = before - undirected.size();

  std::vector<std::size_t> deg(num_nodes, 0);
  for (const auto& [a, b] : undirected) {
    ++deg[a];
    ++deg[b];
  }
  AttributedGraph g;
  g.num_nodes = num_nodes;
  g.row_ptr.assign(num_nodes + 1, 0);
  for (std::size_t v = 0; v < num_nodes; ++v) g.row_ptr[v + 1] = g.row_ptr[v] + deg[v];
  g.col_idx.assign(g.row_ptr.back(), 0);
  std::vector<std::size_t> cursor(g.row_ptr.begin(), g.row_ptr.end() - 1);
  for (const auto& [a, b] : undirected) {
    g.col_idx[cursor[a]++] = b;
    g.col_idx[cursor[b]++] = a;
  }
  for (std::size_t v = 0; v < num_nodes; ++v) {
    std::sort(g.col_idx.begin() + g.row_ptr[v], g.col_idx.begin() + g.row_ptr[v + 1]);
  }
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.splits = std::move(splits);
  if (report) *report = rep;
  return g;
}

NormalizedAdjacency normalize(const AttributedGraph& graph) {
  const std::size_t n = graph.num_nodes;
  NormalizedAdjacency s;
  s.num_nodes = n;
  s.row_ptr.assign(n + 1, 0);
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t v = 0; v < n; ++v) {
    s.row_ptr[v + 1] = s.row_ptr[v] + graph.degree(v) + 1;  // +1: the self-loop
    inv_sqrt_deg[v] = 1.0 / std::sqrt(static_cast<double>(graph.degree(v) + 1));
  }
  s.col_idx.reserve(s.row_ptr.back());
  s.values.reserve(s.row_ptr.back());
  for (std::size_t v = 0; v < n; ++v) {
    bool placed_diag = false;
    for (std::size_t e = graph.row_ptr[v]; e < graph.row_ptr[v + 1]; ++e) {
      const std::int32_t u = graph.col_idx[e];
      if (!placed_diag && u > static_cast<std::int32_t>(v)) {
        s.col_idx.push_back(static_cast<std::int32_t>(v));
        s.values.push_back(inv_sqrt_deg[v] * inv_sqrt_deg[v]);
        placed_diag = true;
      }
      s.col_idx.push_back(u);
      s.values.push_back(inv_sqrt_deg[v] * inv_sqrt_deg[u]);
    }
    if (!placed_diag) {
      s.col_idx.push_back(static_cast<std::int32_t>(v));
      s.values.push_back(inv_sqrt_deg[v] * inv_sqrt_deg[v]);
    }
  }
  return s;
}

namespace {

void spmm_row(const NormalizedAdjacency& s, const Tensor& x, Tensor& out, std::size_t row) {
  const std::size_t d = x.shape()[1];
  double* dst = &out.values()[row * d];
  for (std::size_t k = 0; k < d; ++k) dst[k] = 0.0;
  for (std::size_t e = s.row_ptr[row]; e < s.row_ptr[row + 1]; ++e) {
    const double w = s.values[e];
    const double* src = &x.values()[static_cast<std::size_t>(s.col_idx[e]) * d];
    for (std::size_t k = 0; k < d; ++k) dst[k] += w * src[k];
  }
}

void check_spmm_shapes(const NormalizedAdjacency& s, const Tensor& x) {
  if (x.shape().size() != 2 || x.shape()[0] != s.num_nodes) {
    throw DataError("spmm: feature matrix must be num_nodes x d");
  }
}

}  // namespace

Tensor spmm(const NormalizedAdjacency& s, const Tensor& x) {
  check_spmm_shapes(s, x);
  Tensor out = Tensor::zeros({s.num_nodes, x.shape()[1]});
  const std::int64_t n = static_cast<std::int64_t>(s.num_nodes);
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    spmm_row(s, x, out, static_cast<std::size_t>(v));
  }
  return out;
}

Tensor spmm_serial(const NormalizedAdjacency& s, const Tensor& x) {
  check_spmm_shapes(s, x);
  Tensor out = Tensor::zeros({s.num_nodes, x.shape()[1]});
  for (std::size_t v = 0; v < s.num_nodes; ++v) spmm_row(s, x, out, v);
  return out;
}

PropagatedFeatures propagate(const NormalizedAdjacency& s, const Tensor& features, int hops) {
  if (hops < 0) throw DataError("propagate: hops must be non-negative");
  Tensor x = features;
  for (int h = 0; h < hops; ++h) x = spmm(s, x);
  return {std::move(x), hops};
}

PropagatedFeatures propagate_serial(const NormalizedAdjacency& s, const Tensor& features,
                                    int hops) {
  if (hops < 0) throw DataError("propagate: hops must be non-negative");
  Tensor x = features;
  for (int h = 0; h < hops; ++h) x = spmm_serial(s, x);
  return {std::move(x), hops};
}

}  // namespace gml
