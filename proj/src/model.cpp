#include "gml/model.hpp"

#include <algorithm>

namespace gml {

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "mlp") return Variant::mlp;
  if (s == "mean") return Variant::mean;
  if (s == "naive") return Variant::naive;
  throw DataError("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::mlp: return "mlp";
    case Variant::mean: return "mean";
    default: return "naive";
  }
}

std::size_t class_position(const std::vector<int>& class_list, int label) {
  for (std::size_t i = 0; i < class_list.size(); ++i) {
    if (class_list[i] == label) return i;
  }
  throw DataError("label " + std::to_string(label) + " is not in the episode class list");
}

namespace {

std::size_t member_count(const std::vector<double>& embeddings, const ParamSet& params,
                         const char* what) {
  const std::size_t dh = static_cast<std::size_t>(params.d_hidden);
  if (embeddings.empty() || embeddings.size() % dh != 0) {
    throw DataError(std::string(what) + ": embeddings must be M x d_hidden");
  }
  return embeddings.size() / dh;
}

}  // namespace

std::vector<double> encode(const Tensor& prop, int node, const ParamSet& params) {
  if (node < 0 || static_cast<std::size_t>(node) >= prop.shape()[0]) {
    throw DataError("encode: node id out of range");
  }
  if (static_cast<int>(prop.shape()[1]) != params.d) {
    throw DataError("encode: feature dimension does not match params");
  }
  const ad::ParamPack<double> p = ad::pack(params);
  std::vector<double> z;
  detail::encode_members(prop, {node}, p, z);
  return z;
}

GroupStats group_statistics(const std::vector<double>& embeddings, const ParamSet& params) {
  const std::size_t m = member_count(embeddings, params, "group_statistics");
  const std::size_t dh = static_cast<std::size_t>(params.d_hidden);
  detail::GroupScratch<double> w;
  w.z = embeddings;
  detail::group_stats(w, m, dh);
  return {std::move(w.proto), std::move(w.deltas)};
}

std::vector<double> attention_weights(const std::vector<double>& embeddings,
                                      const std::vector<double>& deltas, const ParamSet& params,
                                      double slope) {
  const std::size_t m = member_count(embeddings, params, "attention_weights");
  if (deltas.size() != embeddings.size()) {
    throw DataError("attention_weights: deltas shape mismatch");
  }
  detail::GroupScratch<double> w;
  w.z = embeddings;
  w.deltas = deltas;
  const ad::ParamPack<double> p = ad::pack(params);
  detail::reweight_projections(w, p, m, params.d_hidden);
  detail::attention_rows(w, p, m, slope);
  return std::move(w.att);
}

std::vector<double> confidence_scores(const std::vector<double>& embeddings,
                                      const std::vector<double>& deltas,
                                      const std::vector<double>& attention,
                                      const ParamSet& params) {
  const std::size_t m = member_count(embeddings, params, "confidence_scores");
  if (deltas.size() != embeddings.size() || attention.size() != m * m) {
    throw DataError("confidence_scores: shape mismatch");
  }
  detail::GroupScratch<double> w;
  w.z = embeddings;
  w.deltas = deltas;
  w.att = attention;
  detail::reweight_projections(w, ad::pack(params), m, params.d_hidden);
  detail::confidence(w, m);
  return std::move(w.scores);
}

std::vector<double> interpolate_group(const std::vector<double>& embeddings,
                                      const std::vector<double>& scores,
                                      const ParamSet& params) {
  const std::size_t m = member_count(embeddings, params, "interpolate_group");
  if (scores.size() != m) throw DataError("interpolate_group: need one score per member");
  detail::GroupScratch<double> w;
  w.z = embeddings;
  w.scores = scores;
  detail::interpolate(w, m, params.d_hidden);
  return std::move(w.rep);
}

std::vector<double> classify(const std::vector<double>& rep, const ParamSet& params) {
  if (rep.size() != static_cast<std::size_t>(params.d_hidden)) {
    throw DataError("classify: representation must have d_hidden entries");
  }
  detail::GroupScratch<double> w;
  w.rep = rep;
  detail::class_logits(w, ad::pack(params), params.d_hidden);
  return num::softmax(w.logits);
}

GroupForward group_forward(const std::vector<double>& embeddings, const ParamSet& params,
                           Variant variant, double slope) {
  const std::size_t m = member_count(embeddings, params, "group_forward");
  if (variant == Variant::naive && m != 1) {
    throw DataError("group_forward: naive variant requires a singleton group");
  }
  const std::size_t dh = static_cast<std::size_t>(params.d_hidden);
  detail::GroupScratch<double> w;
  w.z = embeddings;
  detail::group_pipeline(w, ad::pack(params), m, variant, slope);
  GroupForward out;
  out.prototype = w.proto.empty() ? std::vector<double>(dh, 0.0) : std::move(w.proto);
  out.deltas = w.deltas.empty() ? std::vector<double>(m * dh, 0.0) : std::move(w.deltas);
  out.attention = w.att.empty() ? std::vector<double>(m * m, 0.0) : std::move(w.att);
  out.scores = w.scores.empty() ? std::vector<double>(m, 0.0) : std::move(w.scores);
  out.rep = std::move(w.rep);
  return out;
}

double episode_loss(const InterpolatedEpisode& ep, const Tensor& prop, const ParamSet& params,
                    Subset subset, Variant variant, double slope) {
  return episode_loss_t(ep, prop, ad::pack(params), subset, variant, slope);
}

namespace {

std::size_t tape_reserve(const InterpolatedEpisode& ep, const ParamSet& p) {
  const std::size_t m = static_cast<std::size_t>(ep.m_tasks);
  const std::size_t groups = ep.support_groups.size() + ep.query_groups.size();
  return p.count() + groups * (4 * m * p.d_hidden + 4 * m * m + 64) + 64;
}

}  // namespace

GradientSet episode_gradient(const InterpolatedEpisode& ep, const Tensor& prop,
                             const ParamSet& params, Subset subset, Variant variant,
                             double slope) {
  auto loss = [&](auto& /*tape*/, const auto& pk) {
    return episode_loss_t(ep, prop, pk, subset, variant, slope);
  };
  return ad::gradient(loss, params, tape_reserve(ep, params));
}

GradientSet episode_hvp(const InterpolatedEpisode& ep, const Tensor& prop,
                        const ParamSet& params, const GradientSet& direction, Subset subset,
                        Variant variant, double slope) {
  auto loss = [&](auto& /*tape*/, const auto& pk) {
    return episode_loss_t(ep, prop, pk, subset, variant, slope);
  };
  return ad::hessian_vector(loss, params, direction, tape_reserve(ep, params));
}

std::size_t argmax_tie_low(const std::vector<double>& v) {
  if (v.empty()) throw DataError("argmax_tie_low: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;  // strict: ties keep the lowest index
  }
  return best;
}

std::size_t predict_group(const std::vector<int>& members, const Tensor& prop,
                          const ParamSet& params, Variant variant, double slope) {
  detail::GroupScratch<double> w;
  detail::encode_members(prop, members, ad::pack(params), w.z);
  detail::group_pipeline(w, ad::pack(params), members.size(), variant, slope);
  return argmax_tie_low(classify(w.rep, params));
}

}  // namespace gml
