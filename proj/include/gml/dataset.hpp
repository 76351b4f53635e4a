#pragma once

// On-disk formats.  A dataset bundle is a directory of four files:
//   graph.edges   one undirected edge per line, "src<TAB>dst", src < dst
//   features.csv  header "node_id,f0,...,f{d-1}", one row per node in id order
//   labels.csv    header "node_id,class_id"
//   splits.json   {"train_classes": [...], "val_classes": [...], "test_classes": [...]}
// Parameters checkpoint to JSON with named, shape-tagged arrays whose values
// are decimal strings (%.17g), so save/load round-trips bit-exactly.
// Writers are byte-deterministic given identical inputs.

#include <filesystem>

#include "gml/graph.hpp"
#include "gml/noise.hpp"
#include "gml/tensor.hpp"

namespace gml {

/// Writes the four bundle files into `dir` (created if missing).
void write_bundle(const AttributedGraph& graph, const std::filesystem::path& dir);

/// Loads and validates a bundle.  Malformed rows are rejected with their
/// file name and line number; graph-level integrity violations (bad ids,
/// overlapping splits, ...) surface as DataError from build_graph.
AttributedGraph load_bundle(const std::filesystem::path& dir, BuildReport* report = nullptr);

/// Checkpoint I/O; load verifies shapes and finiteness.
void save_params(const ParamSet& params, const std::filesystem::path& file);
ParamSet load_params(const std::filesystem::path& file);

/// Weak-labeling dump: header "node_id,class_id,flipped".
void write_noisy_labels(const NoisyLabeling& labeling, const std::filesystem::path& file);

}  // namespace gml
