#pragma once

// Label corruption confined to a class split: a row-stochastic corruption
// matrix over the split's ordered class list, applied independently per node
// with a seeded stream.  Test-split labels are never touched by the harness.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gml/graph.hpp"

namespace gml {

enum class NoiseKind { symmetric, asymmetric };

NoiseKind parse_noise_kind(const std::string& s);
std::string to_string(NoiseKind kind);

/// Row-stochastic P x P matrix over class *positions* in a split's ordered
/// class list.  symmetric: diagonal 1-eps, off-diagonal eps/(P-1).
/// asymmetric: diagonal 1-eps, all of eps on the next class cyclically.
struct CorruptionMatrix {
  NoiseKind kind = NoiseKind::symmetric;
  double epsilon = 0.0;
  std::size_t num_classes = 0;
  std::vector<double> rows;  // P x P row-major

  double at(std::size_t i, std::size_t j) const { return rows[i * num_classes + j]; }
};

/// Throws DataError unless P >= 2 and eps in [0, 1].
CorruptionMatrix build_corruption_matrix(NoiseKind kind, std::size_t num_classes, double epsilon);

/// A corrupted label vector plus per-node flip flags and the seed that
/// produced it.  Entries outside the split pass through unchanged.
struct NoisyLabeling {
  std::vector<int> labels;
  std::vector<std::uint8_t> flipped;
  std::uint64_t seed = 0;
};

/// Draws a new label for every entry whose current label is in
/// `split_classes`, from that label's corruption-matrix row.  One independent
/// stream per call, derived from (seed, fixed tag); nodes outside the split
/// consume no randomness.
NoisyLabeling apply_noise(std::span<const int> labels, std::span<const int> split_classes,
                          const CorruptionMatrix& matrix, std::uint64_t seed);

/// Observed flip frequencies between split classes, P x P row-major
/// (row: original class position, column: corrupted class position).
std::vector<double> empirical_flip_rates(std::span<const int> original,
                                         std::span<const int> corrupted,
                                         std::span<const int> split_classes);

/// Full-graph weak labeling: train and val splits corrupted independently
/// (distinct stream tags), test split untouched.  Splits with fewer than two
/// classes cannot flip within themselves and pass through unchanged.
NoisyLabeling corrupt_labels(const AttributedGraph& graph, NoiseKind kind, double epsilon,
                             std::uint64_t seed);

}  // namespace gml
