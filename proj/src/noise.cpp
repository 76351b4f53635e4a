#include "gml/noise.hpp"

#include <algorithm>
#include <unordered_map>

namespace gml {

namespace {
constexpr std::uint64_t kApplyTag = 0x6e6f6973u;  // stream tag for apply_noise
constexpr std::uint64_t kTrainTag = 1;
constexpr std::uint64_t kValTag = 2;
}  // namespace

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "symmetric" || s == "sym") return NoiseKind::symmetric;
  if (s == "asymmetric" || s == "asym") return NoiseKind::asymmetric;
  throw DataError("unknown noise kind: " + s);
}

std::string to_string(NoiseKind kind) {
  return kind == NoiseKind::symmetric ? "symmetric" : "asymmetric";
}

CorruptionMatrix build_corruption_matrix(NoiseKind kind, std::size_t num_classes,
                                         double epsilon) {
  if (num_classes < 2) throw DataError("build_corruption_matrix: need at least 2 classes");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw DataError("build_corruption_matrix: epsilon must be in [0, 1]");
  }
  CorruptionMatrix m;
  m.kind = kind;
  m.epsilon = epsilon;
  m.num_classes = num_classes;
  m.rows.assign(num_classes * num_classes, 0.0);
  for (std::size_t i = 0; i < num_classes; ++i) {
    if (kind == NoiseKind::symmetric) {
      const double off = epsilon / static_cast<double>(num_classes - 1);
      for (std::size_t j = 0; j < num_classes; ++j) {
        m.rows[i * num_classes + j] = (i == j) ? 1.0 - epsilon : off;
      }
    } else {
      m.rows[i * num_classes + i] = 1.0 - epsilon;
      m.rows[i * num_classes + (i + 1) % num_classes] += epsilon;
    }
  }
  return m;
}

NoisyLabeling apply_noise(std::span<const int> labels, std::span<const int> split_classes,
                          const CorruptionMatrix& matrix, std::uint64_t seed) {
  if (split_classes.size() != matrix.num_classes) {
    throw DataError("apply_noise: split size does not match corruption matrix");
  }
  std::unordered_map<int, std::size_t> position;
  for (std::size_t i = 0; i < split_classes.size(); ++i) position[split_classes[i]] = i;

  NoisyLabeling out;
  out.seed = seed;
  out.labels.assign(labels.begin(), labels.end());
  out.flipped.assign(labels.size(), 0);
  Rng rng(derive_seed(seed, kApplyTag));
  for (std::size_t v = 0; v < labels.size(); ++v) {
    auto it = position.find(labels[v]);
    if (it == position.end()) continue;  // outside the split: untouched, no draw
    const double* row = &matrix.rows[it->second * matrix.num_classes];
    const double u = rng.uniform_real();
    double cum = 0.0;
    std::size_t pick = matrix.num_classes - 1;
    for (std::size_t j = 0; j < matrix.num_classes; ++j) {
      cum += row[j];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    out.labels[v] = split_classes[pick];
    out.flipped[v] = out.labels[v] != labels[v] ? 1 : 0;
  }
  return out;
}

std::vector<double> empirical_flip_rates(std::span<const int> original,
                                         std::span<const int> corrupted,
                                         std::span<const int> split_classes) {
  if (original.size() != corrupted.size()) {
    throw DataError("empirical_flip_rates: vector length mismatch");
  }
  std::unordered_map<int, std::size_t> position;
  for (std::size_t i = 0; i < split_classes.size(); ++i) position[split_classes[i]] = i;
  const std::size_t p = split_classes.size();
  std::vector<double> counts(p * p, 0.0);
  std::vector<double> totals(p, 0.0);
  for (std::size_t v = 0; v < original.size(); ++v) {
    auto it = position.find(original[v]);
    if (it == position.end()) continue;
    auto jt = position.find(corrupted[v]);
    if (jt == position.end()) {
      throw DataError("empirical_flip_rates: corrupted label left the split");
    }
    counts[it->second * p + jt->second] += 1.0;
    totals[it->second] += 1.0;
  }
  for (std::size_t i = 0; i < p; ++i) {
    if (totals[i] == 0.0) continue;
    for (std::size_t j = 0; j < p; ++j) counts[i * p + j] /= totals[i];
  }
  return counts;
}

NoisyLabeling corrupt_labels(const AttributedGraph& graph, NoiseKind kind, double epsilon,
                             std::uint64_t seed) {
  NoisyLabeling out;
  out.seed = seed;
  out.labels = graph.labels;
  out.flipped.assign(graph.labels.size(), 0);
  const std::pair<const std::vector<int>*, std::uint64_t> targets[2] = {
      {&graph.splits.train_classes, kTrainTag}, {&graph.splits.val_classes, kValTag}};
  for (const auto& [classes, tag] : targets) {
    if (classes->size() < 2) continue;  // nothing can flip within a <2-class split
    const CorruptionMatrix m = build_corruption_matrix(kind, classes->size(), epsilon);
    NoisyLabeling part = apply_noise(out.labels, *classes, m, derive_seed(seed, tag));
    out.labels = std::move(part.labels);
    for (std::size_t v = 0; v < out.flipped.size(); ++v) {
      out.flipped[v] = out.flipped[v] | part.flipped[v];
    }
  }
  return out;
}

}  // namespace gml
