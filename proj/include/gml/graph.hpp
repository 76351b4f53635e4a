#pragma once

// Attributed graphs with class splits, symmetric degree normalization and
// k-hop feature propagation.  Propagation is the one dense kernel on the hot
// path; it has an OpenMP row-parallel implementation and a serial reference
// that must agree bitwise (each output row is computed by exactly one thread
// with a fixed accumulation order).

#include <cstdint>
#include <utility>
#include <vector>

#include "gml/tensor.hpp"

namespace gml {

struct ClassSplits {
  std::vector<int> train_classes;
  std::vector<int> val_classes;
  std::vector<int> test_classes;
};

/// Undirected graph with node features, integer class labels and a
/// train/val/test partition of the classes.  Adjacency is CSR, neighbor
/// lists sorted, no self-loops stored.
struct AttributedGraph {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::int32_t> col_idx;
  Tensor features;  // num_nodes x d
  std::vector<int> labels;
  ClassSplits splits;

  std::size_t degree(std::size_t v) const { return row_ptr[v + 1] - row_ptr[v]; }
  int feature_dim() const { return static_cast<int>(features.shape()[1]); }
  /// Classes of one split, ordered as stored.
  const std::vector<int>& split_classes(int which) const;  // 0 train, 1 val, 2 test
};

struct BuildReport {
  std::size_t self_loops_removed = 0;
  std::size_t duplicate_edges_removed = 0;
};

/// Validates and assembles a graph from an undirected edge list.
/// Duplicate and reversed-duplicate edges collapse; self-loops are stripped
/// (counted in the report).  Throws DataError on: out-of-range endpoints,
/// feature/label count mismatches, overlapping splits, or splits that do not
/// cover exactly the label values present.
AttributedGraph build_graph(std::size_t num_nodes,
                            const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
                            Tensor features, std::vector<int> labels, ClassSplits splits,
                            BuildReport* report = nullptr);

/// S = D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
/// Symmetric, rows sorted by column, diagonal always present.
struct NormalizedAdjacency {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::int32_t> col_idx;
  std::vector<double> values;
};

NormalizedAdjacency normalize(const AttributedGraph& graph);

/// One sparse-dense product S * X.  Row-parallel under OpenMP.
Tensor spmm(const NormalizedAdjacency& s, const Tensor& x);
/// Serial reference for spmm; must match spmm bitwise.
Tensor spmm_serial(const NormalizedAdjacency& s, const Tensor& x);

struct PropagatedFeatures {
  Tensor matrix;  // num_nodes x d
  int hops = 0;
};

/// S^hops * X.  hops = 0 returns the features unchanged.
PropagatedFeatures propagate(const NormalizedAdjacency& s, const Tensor& features, int hops);
/// Serial reference for propagate; must match propagate bitwise.
PropagatedFeatures propagate_serial(const NormalizedAdjacency& s, const Tensor& features, int hops);

}  // namespace gml
