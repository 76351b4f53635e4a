#pragma once

// The interpolation network: linear encoder over propagated features,
// per-group prototype/delta statistics, pairwise attention over score
// projections, confidence-weighted group interpolation and a linear softmax
// classifier.  The forward pass is written once, generically over the
// numeric type, so the same code runs on plain doubles, on the reverse-mode
// tape (gradients) and on dual numbers over the tape (Hessian-vector
// products).

#include <algorithm>
#include <string>
#include <vector>

#include "gml/autodiff.hpp"
#include "gml/episodes.hpp"
#include "gml/graph.hpp"
#include "gml/tensor.hpp"

namespace gml {

/// Model ablations.  full: attention-weighted interpolation.  mlp: per-node
/// confidence without attention.  mean: plain prototype pooling.  naive: raw
/// single-node embeddings (requires M = 1 task sets).
enum class Variant { full, mlp, mean, naive };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  int d = 0;         // input feature dimension (from the data)
  int d_hidden = 16; // embedding dimension d'
  int n_way = 0;     // classes per task
  int hops = 2;      // propagation depth
  double leaky_slope = 0.2;
};

/// Per-group forward artifacts for inspection (full-pipeline semantics;
/// attention/scores are zero-filled for variants that skip them).
struct GroupForward {
  std::vector<double> prototype;  // d'
  std::vector<double> deltas;     // M x d', row-major
  std::vector<double> attention;  // M x M, row-major
  std::vector<double> scores;     // M
  std::vector<double> rep;        // d': the interpolated representation
};

// ---------------------------------------------------------------------------
// Generic core.  Num is double, ad::Var<double> or ad::Var<ad::Dual>.

namespace detail {

/// Scratch buffers reused across groups so a loss tape stays allocation-light.
template <class Num>
struct GroupScratch {
  std::vector<Num> z;       // M x d'
  std::vector<Num> proto;   // d'
  std::vector<Num> deltas;  // M x d'
  std::vector<Num> u;       // M: reweight projection of [z || delta]
  std::vector<Num> att;     // M x M
  std::vector<Num> scores;  // M
  std::vector<Num> rep;     // d'
  std::vector<Num> logits;  // n_way
  std::vector<Num> exps;    // scratch for softmax rows
  std::vector<double> mean_coeff;
};

/// z_i = x_i * W_e for every member node of a group.
template <class Num>
void encode_members(const Tensor& prop, const std::vector<int>& members,
                    const ad::ParamPack<Num>& p, std::vector<Num>& z_out) {
  const std::size_t dh = static_cast<std::size_t>(p.d_hidden);
  const std::size_t d = static_cast<std::size_t>(p.d);
  z_out.clear();
  z_out.reserve(members.size() * dh);
  for (int node : members) {
    std::span<const double> x(&prop.values()[static_cast<std::size_t>(node) * d], d);
    for (std::size_t k = 0; k < dh; ++k) {
      z_out.push_back(ad::dot_const_strided(x, p.encoder.data() + k, dh));
    }
  }
}

/// Prototype and deltas of the group's embeddings.
template <class Num>
void group_stats(GroupScratch<Num>& w, std::size_t m, std::size_t dh) {
  if (w.mean_coeff.size() != m) w.mean_coeff.assign(m, 1.0 / static_cast<double>(m));
  w.proto.clear();
  for (std::size_t k = 0; k < dh; ++k) {
    w.proto.push_back(ad::dot_const_strided(w.mean_coeff, w.z.data() + k, dh));
  }
  w.deltas.clear();
  w.deltas.reserve(m * dh);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < dh; ++k) {
      w.deltas.push_back(w.z[i * dh + k] - w.proto[k]);
    }
  }
}

/// u_i = reweight . [z_i || delta_i].
template <class Num>
void reweight_projections(GroupScratch<Num>& w, const ad::ParamPack<Num>& p, std::size_t m,
                          std::size_t dh) {
  w.u.clear();
  for (std::size_t i = 0; i < m; ++i) {
    Num a = ad::dot(p.reweight.data(), w.z.data() + i * dh, dh);
    Num b = ad::dot(p.reweight.data() + dh, w.deltas.data() + i * dh, dh);
    w.u.push_back(a + b);
  }
}

/// att[i][j] = softmax_j( leaky( a0*u_i + a1*u_j ) ), self-pairs included.
template <class Num>
void attention_rows(GroupScratch<Num>& w, const ad::ParamPack<Num>& p, std::size_t m,
                    double slope) {
  w.att.clear();
  w.att.reserve(m * m);
  w.exps.clear();
  std::vector<Num>& logits = w.exps;  // reuse: first holds logits, then exps
  for (std::size_t i = 0; i < m; ++i) {
    logits.clear();
    Num ai = p.attention[0] * w.u[i];
    for (std::size_t j = 0; j < m; ++j) {
      logits.push_back(ad::leaky(ai + p.attention[1] * w.u[j], slope));
    }
    double mx = ad::value_of(logits[0]);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, ad::value_of(logits[j]));
    for (std::size_t j = 0; j < m; ++j) logits[j] = ad::exp(ad::addc(logits[j], -mx));
    Num denom = ad::sum(logits.data(), m);
    for (std::size_t j = 0; j < m; ++j) w.att.push_back(logits[j] / denom);
  }
}

/// s_i = sigmoid( sum_j att[i][j] * u_j ).
template <class Num>
void confidence(GroupScratch<Num>& w, std::size_t m) {
  w.scores.clear();
  for (std::size_t i = 0; i < m; ++i) {
    w.scores.push_back(ad::sigmoid(ad::dot(w.att.data() + i * m, w.u.data(), m)));
  }
}

/// rep = sum_i s_i z_i / sum_i s_i.  M = 1 short-circuits to z_0 exactly
/// (the normalization cancels; doing the division would cost an ulp and leak
/// rounding into the score parameters' gradients).
template <class Num>
void interpolate(GroupScratch<Num>& w, std::size_t m, std::size_t dh) {
  w.rep.clear();
  if (m == 1) {
    w.rep.assign(w.z.begin(), w.z.begin() + dh);
    return;
  }
  Num denom = ad::sum(w.scores.data(), m);
  for (std::size_t k = 0; k < dh; ++k) {
    w.rep.push_back(ad::dot(w.scores.data(), w.z.data() + k, m, 1, dh) / denom);
  }
}

/// logits_c = classifier[:,c] . rep + bias_c.
template <class Num>
void class_logits(GroupScratch<Num>& w, const ad::ParamPack<Num>& p, std::size_t dh) {
  const std::size_t n = static_cast<std::size_t>(p.n_way);
  w.logits.clear();
  for (std::size_t c = 0; c < n; ++c) {
    w.logits.push_back(ad::dot(p.classifier.data() + c, w.rep.data(), dh, n, 1) + p.bias[c]);
  }
}

/// -log softmax(logits)[target], probabilities clamped at 1e-12 (the clamp
/// branch is a constant: zero gradient, matching the subgradient choice).
template <class Num>
Num cross_entropy_logits(GroupScratch<Num>& w, std::size_t target) {
  const std::size_t n = w.logits.size();
  double mx = ad::value_of(w.logits[0]);
  for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, ad::value_of(w.logits[c]));
  w.exps.clear();
  for (std::size_t c = 0; c < n; ++c) w.exps.push_back(ad::exp(ad::addc(w.logits[c], -mx)));
  Num denom = ad::sum(w.exps.data(), n);
  Num p = w.exps[target] / denom;
  if (ad::value_of(p) < num::kProbFloor) {
    return ad::constant_like(p, -std::log(num::kProbFloor));
  }
  return -ad::log(p);
}

/// Full per-group pipeline; fills scratch and returns the group's loss-ready
/// representation in w.rep.
template <class Num>
void group_pipeline(GroupScratch<Num>& w, const ad::ParamPack<Num>& p, std::size_t m,
                    Variant variant, double slope) {
  const std::size_t dh = static_cast<std::size_t>(p.d_hidden);
  switch (variant) {
    case Variant::naive:
      w.rep.assign(w.z.begin(), w.z.begin() + dh);
      return;
    case Variant::mean:
      group_stats(w, m, dh);
      w.rep = w.proto;
      return;
    case Variant::mlp:
      group_stats(w, m, dh);
      reweight_projections(w, p, m, dh);
      w.scores.clear();
      for (std::size_t i = 0; i < m; ++i) w.scores.push_back(ad::sigmoid(w.u[i]));
      interpolate(w, m, dh);
      return;
    case Variant::full:
      group_stats(w, m, dh);
      reweight_projections(w, p, m, dh);
      attention_rows(w, p, m, slope);
      confidence(w, m);
      interpolate(w, m, dh);
      return;
  }
}

}  // namespace detail

/// Position of a label in the episode's class list (the classifier target).
std::size_t class_position(const std::vector<int>& class_list, int label);

/// Mean cross-entropy of the chosen subset's groups under `variant`.
/// Generic over the numeric type; see the double/gradient wrappers below.
template <class Num>
Num episode_loss_t(const InterpolatedEpisode& ep, const Tensor& prop,
                   const ad::ParamPack<Num>& p, Subset subset, Variant variant, double slope) {
  const std::vector<InterpolationGroup>& groups =
      subset == Subset::support ? ep.support_groups : ep.query_groups;
  if (groups.empty()) throw DataError("episode_loss: subset has no groups");
  if (variant == Variant::naive && ep.m_tasks != 1) {
    throw DataError("episode_loss: naive variant requires M = 1 task sets");
  }
  if (static_cast<int>(prop.shape()[1]) != p.d) {
    throw DataError("episode_loss: feature dimension does not match params");
  }
  if (static_cast<std::size_t>(p.n_way) != ep.class_list.size()) {
    throw DataError("episode_loss: params n_way does not match episode class list");
  }
  detail::GroupScratch<Num> w;
  bool first = true;
  Num total{};
  for (const InterpolationGroup& g : groups) {
    detail::encode_members(prop, g.members, p, w.z);
    detail::group_pipeline(w, p, g.members.size(), variant, slope);
    detail::class_logits(w, p, static_cast<std::size_t>(p.d_hidden));
    Num loss = detail::cross_entropy_logits(w, class_position(ep.class_list, g.shared_label));
    total = first ? loss : total + loss;
    first = false;
  }
  return ad::mulc(total, 1.0 / static_cast<double>(groups.size()));
}

// ---------------------------------------------------------------------------
// Double-typed contract surface.

/// Embedding of one node's propagated features.
std::vector<double> encode(const Tensor& prop, int node, const ParamSet& params);

struct GroupStats {
  std::vector<double> prototype;  // d'
  std::vector<double> deltas;     // M x d'
};

/// Prototype (mean embedding) and per-member deltas.  embeddings: M x d' flat.
GroupStats group_statistics(const std::vector<double>& embeddings, const ParamSet& params);

/// Row-stochastic M x M attention over score projections (self-pairs included).
std::vector<double> attention_weights(const std::vector<double>& embeddings,
                                      const std::vector<double>& deltas, const ParamSet& params,
                                      double slope = 0.2);

/// Confidence scores s in (0,1)^M from attention-aggregated projections.
std::vector<double> confidence_scores(const std::vector<double>& embeddings,
                                      const std::vector<double>& deltas,
                                      const std::vector<double>& attention,
                                      const ParamSet& params);

/// Score-weighted normalized combination; M = 1 returns the embedding exactly.
std::vector<double> interpolate_group(const std::vector<double>& embeddings,
                                      const std::vector<double>& scores, const ParamSet& params);

/// Softmax class probabilities of an interpolated representation.
std::vector<double> classify(const std::vector<double>& rep, const ParamSet& params);

/// Whole per-group pipeline for inspection.
GroupForward group_forward(const std::vector<double>& embeddings, const ParamSet& params,
                           Variant variant = Variant::full, double slope = 0.2);

/// Mean cross-entropy over the subset's groups.
double episode_loss(const InterpolatedEpisode& ep, const Tensor& prop, const ParamSet& params,
                    Subset subset, Variant variant = Variant::full, double slope = 0.2);

/// Exact gradient of episode_loss at `params` (reverse-mode).
GradientSet episode_gradient(const InterpolatedEpisode& ep, const Tensor& prop,
                             const ParamSet& params, Subset subset,
                             Variant variant = Variant::full, double slope = 0.2);

/// Hessian-vector product of episode_loss at `params` along `direction`.
GradientSet episode_hvp(const InterpolatedEpisode& ep, const Tensor& prop,
                        const ParamSet& params, const GradientSet& direction, Subset subset,
                        Variant variant = Variant::full, double slope = 0.2);

/// Index of the max element; ties resolve to the lowest index.
std::size_t argmax_tie_low(const std::vector<double>& v);

/// Predicted class-list position for one group of member nodes.
std::size_t predict_group(const std::vector<int>& members, const Tensor& prop,
                          const ParamSet& params, Variant variant = Variant::full,
                          double slope = 0.2);

}  // namespace gml
