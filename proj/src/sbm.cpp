#include "gml/sbm.hpp"

#include <cmath>
#include <string>

namespace gml {

namespace {

constexpr std::uint64_t kMeansTag = 0x6d65616eu;
constexpr std::uint64_t kEdgeTag = 0x65646765u;
constexpr std::uint64_t kFeatTag = 0x66656174u;

void validate(const SbmParams& p) {
  if (p.classes < 1 || p.nodes_per_class < 1) {
    throw DataError("generate_sbm: classes and nodes_per_class must be positive");
  }
  if (p.dim < 1) throw DataError("generate_sbm: dim must be positive");
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0) || !(p.p_out >= 0.0 && p.p_out <= 1.0)) {
    throw DataError("generate_sbm: edge probabilities must be in [0, 1]");
  }
  if (p.separation < 0.0 || p.feature_std < 0.0) {
    throw DataError("generate_sbm: separation and feature_std must be non-negative");
  }
  if (p.train_classes < 0 || p.val_classes < 0 || p.test_classes < 0 ||
      p.train_classes + p.val_classes + p.test_classes != p.classes) {
    throw DataError("generate_sbm: split counts must sum to the class count");
  }
}

/// Class mean directions: seeded Gaussian draws, orthonormalized when the
/// dimension allows (then every pairwise distance is exactly `separation`
/// after the sqrt(2) scaling); otherwise plain normalized draws.
std::vector<double> class_means(const SbmParams& p) {
  Rng rng(derive_seed(p.seed, kMeansTag));
  const std::size_t k = static_cast<std::size_t>(p.classes);
  const std::size_t d = static_cast<std::size_t>(p.dim);
  std::vector<double> dirs(k * d);
  for (double& x : dirs) x = rng.normal();
  const bool orthonormalize = d >= k;
  // First make every direction unit length (Gram-Schmidt projections are
  // only valid against unit vectors), then scale all of them at once.
  for (std::size_t i = 0; i < k; ++i) {
    double* v = &dirs[i * d];
    if (orthonormalize) {
      for (std::size_t j = 0; j < i; ++j) {
        const double* u = &dirs[j * d];  // unit norm by induction
        double proj = 0.0;
        for (std::size_t t = 0; t < d; ++t) proj += v[t] * u[t];
        for (std::size_t t = 0; t < d; ++t) v[t] -= proj * u[t];
      }
    }
    double norm = 0.0;
    for (std::size_t t = 0; t < d; ++t) norm += v[t] * v[t];
    norm = std::sqrt(norm);
    if (norm == 0.0) throw DataError("generate_sbm: degenerate mean direction");
    for (std::size_t t = 0; t < d; ++t) v[t] /= norm;
  }
  const double scale = p.separation / std::sqrt(2.0);
  for (double& x : dirs) x *= scale;
  return dirs;
}

AttributedGraph generate_impl(const SbmParams& p, bool parallel) {
  validate(p);
  const std::size_t n = static_cast<std::size_t>(p.classes) * p.nodes_per_class;
  const std::size_t d = static_cast<std::size_t>(p.dim);
  auto class_of = [&p](std::size_t v) { return static_cast<int>(v / p.nodes_per_class); };

  // Edges: one derived stream per source row, draws over v < u pairs.
  std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> rows(n);
  const std::int64_t nn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t v = 0; v < nn; ++v) {
    Rng rng(derive_seed(p.seed, kEdgeTag + static_cast<std::uint64_t>(v)));
    const int cv = class_of(static_cast<std::size_t>(v));
    for (std::size_t u = static_cast<std::size_t>(v) + 1; u < n; ++u) {
      const double prob = class_of(u) == cv ? p.p_in : p.p_out;
      if (rng.uniform_real() < prob) rows[v].emplace_back(v, static_cast<std::int64_t>(u));
    }
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (const auto& r : rows) edges.insert(edges.end(), r.begin(), r.end());

  // Features: per-node streams around the class means.
  const std::vector<double> means = class_means(p);
  std::vector<double> feat(n * d);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t v = 0; v < nn; ++v) {
    Rng rng(derive_seed(p.seed, kFeatTag + static_cast<std::uint64_t>(v)));
    const double* mu = &means[static_cast<std::size_t>(class_of(v)) * d];
    for (std::size_t t = 0; t < d; ++t) {
      feat[static_cast<std::size_t>(v) * d + t] = mu[t] + p.feature_std * rng.normal();
    }
  }

  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = class_of(v);
  ClassSplits splits;
  int c = 0;
  for (int i = 0; i < p.train_classes; ++i) splits.train_classes.push_back(c++);
  for (int i = 0; i < p.val_classes; ++i) splits.val_classes.push_back(c++);
  for (int i = 0; i < p.test_classes; ++i) splits.test_classes.push_back(c++);

  return build_graph(n, edges, Tensor({n, d}, std::move(feat)), std::move(labels),
                     std::move(splits));
}

}  // namespace

AttributedGraph generate_sbm(const SbmParams& params) { return generate_impl(params, true); }

AttributedGraph generate_sbm_serial(const SbmParams& params) {
  return generate_impl(params, false);
}

}  // namespace gml
