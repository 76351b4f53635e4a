#include "gml/meta.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

namespace gml {

namespace {
constexpr std::uint64_t kInitTag = 0x696e6974u;
constexpr std::uint64_t kEpisodeTag = 0x65700000u;
constexpr std::uint64_t kValTag = 0x76616c00u;
}  // namespace

MetaGradMode parse_meta_grad_mode(const std::string& s) {
  if (s == "exact") return MetaGradMode::exact;
  if (s == "first_order") return MetaGradMode::first_order;
  throw DataError("unknown meta-gradient mode: " + s);
}

std::string to_string(MetaGradMode m) {
  return m == MetaGradMode::exact ? "exact" : "first_order";
}

Objective episode_objective(const InterpolatedEpisode& ep, const Tensor& prop, Subset subset,
                            Variant variant, double slope) {
  // The episode and features outlive the objective everywhere this is used;
  // capture by reference to keep episode construction cheap.
  Objective obj;
  obj.loss = [&ep, &prop, subset, variant, slope](const ParamSet& p) {
    return episode_loss(ep, prop, p, subset, variant, slope);
  };
  obj.grad = [&ep, &prop, subset, variant, slope](const ParamSet& p) {
    return episode_gradient(ep, prop, p, subset, variant, slope);
  };
  obj.hvp = [&ep, &prop, subset, variant, slope](const ParamSet& p, const GradientSet& v) {
    return episode_hvp(ep, prop, p, v, subset, variant, slope);
  };
  return obj;
}

ParamSet inner_adapt(const ParamSet& params, const Objective& obj, double alpha, int steps,
                     std::vector<ParamSet>* trajectory) {
  if (steps < 0) throw DataError("inner_adapt: steps must be non-negative");
  ParamSet p = params;
  for (int t = 0; t < steps; ++t) {
    if (trajectory) trajectory->push_back(p);
    if (alpha == 0.0) continue;
    const GradientSet g = obj.grad(p);
    axpy(-alpha, g, p);
    if (!p.all_finite()) throw DivergenceError("inner_adapt: parameters diverged");
  }
  return p;
}

GradientSet meta_gradient(const ParamSet& params, const Objective& support,
                          const Objective& query, const MetaConfig& cfg, double* query_loss) {
  std::vector<ParamSet> trajectory;
  const ParamSet adapted = inner_adapt(params, support, cfg.inner_lr, cfg.inner_steps,
                                       cfg.mode == MetaGradMode::exact ? &trajectory : nullptr);
  if (query_loss) *query_loss = query.loss(adapted);
  GradientSet u = query.grad(adapted);
  if (cfg.mode == MetaGradMode::exact && cfg.inner_lr != 0.0) {
    // Reverse through theta_{t+1} = theta_t - alpha * grad L_S(theta_t):
    // u <- (I - alpha H_S(theta_t)) u, latest step first.
    for (auto it = trajectory.rbegin(); it != trajectory.rend(); ++it) {
      const GradientSet hu = support.hvp(*it, u);
      axpy(-cfg.inner_lr, hu, u);
    }
  }
  return u;
}

namespace {

double meta_step_impl(TrainingState& state,
                      const std::vector<std::pair<Objective, Objective>>& batch,
                      const MetaConfig& cfg, bool parallel) {
  if (batch.empty()) throw DataError("meta_step: empty batch");
  const std::int64_t b = static_cast<std::int64_t>(batch.size());
  std::vector<GradientSet> grads(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < b; ++i) {
    try {
      grads[i] = meta_gradient(state.params, batch[i].first, batch[i].second, cfg, &losses[i]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  double loss_sum = 0.0;
  for (double l : losses) {
    if (!std::isfinite(l)) throw DivergenceError("meta_step: non-finite query loss");
    loss_sum += l;
  }
  if (cfg.meta_lr != 0.0) {
    GradientSet total = ParamSet::zeros(state.params.d, state.params.d_hidden,
                                        state.params.n_way);
    for (const GradientSet& g : grads) axpy(1.0, g, total);  // fixed episode order
    axpy(-cfg.meta_lr, total, state.params);
    if (!state.params.all_finite()) throw DivergenceError("meta_step: parameters diverged");
  }
  state.episodes_done += batch.size();
  return loss_sum / static_cast<double>(batch.size());
}

}  // namespace

double meta_step(TrainingState& state, const std::vector<std::pair<Objective, Objective>>& batch,
                 const MetaConfig& cfg) {
  return meta_step_impl(state, batch, cfg, /*parallel=*/true);
}

double meta_step_serial(TrainingState& state,
                        const std::vector<std::pair<Objective, Objective>>& batch,
                        const MetaConfig& cfg) {
  return meta_step_impl(state, batch, cfg, /*parallel=*/false);
}

namespace {

struct EpisodeAccuracy {
  double weak = 0.0;
  double truth = 0.0;
};

/// Adapt on the episode's support groups, then score its query groups.
EpisodeAccuracy validation_episode(const ParamSet& params, const AttributedGraph& graph,
                                   const NoisyLabeling& labeling, const Tensor& prop,
                                   const EpisodeSpec& spec, Variant variant, double slope,
                                   const MetaConfig& cfg, Split split, std::uint64_t seed) {
  const TaskSet ts = sample_task_set(graph, labeling, split, spec.n_way, spec.k_shot,
                                     spec.k_query, spec.m_tasks, seed);
  const InterpolatedEpisode ep = build_interpolation_groups(ts);
  const Objective support = episode_objective(ep, prop, Subset::support, variant, slope);
  const ParamSet adapted = inner_adapt(params, support, cfg.inner_lr, cfg.inner_steps);
  EpisodeAccuracy acc;
  std::size_t truth_total = 0;
  for (const InterpolationGroup& g : ep.query_groups) {
    const std::size_t pos = predict_group(g.members, prop, adapted, variant, slope);
    const int predicted = ep.class_list[pos];
    if (predicted == g.shared_label) acc.weak += 1.0;
    for (int node : g.members) {
      if (predicted == graph.labels[node]) acc.truth += 1.0;
      ++truth_total;
    }
  }
  acc.weak /= static_cast<double>(ep.query_groups.size());
  acc.truth /= static_cast<double>(truth_total);
  return acc;
}

ValResult evaluate_validation_impl(const ParamSet& params, const AttributedGraph& graph,
                                   const NoisyLabeling& labeling, const Tensor& prop,
                                   const EpisodeSpec& spec, Variant variant, double slope,
                                   const MetaConfig& cfg, int n_tasks, std::uint64_t seed,
                                   bool parallel) {
  if (n_tasks < 1) throw DataError("evaluate_validation: n_tasks must be positive");
  std::vector<EpisodeAccuracy> per_episode(n_tasks);
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t t = 0; t < n_tasks; ++t) {
    try {
      per_episode[t] =
          validation_episode(params, graph, labeling, prop, spec, variant, slope, cfg, Split::val,
                             derive_seed(seed, kValTag + static_cast<std::uint64_t>(t)));
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  ValResult out;
  for (const EpisodeAccuracy& a : per_episode) {  // fixed episode order
    out.weak_accuracy += a.weak;
    out.truth_accuracy += a.truth;
  }
  out.weak_accuracy /= n_tasks;
  out.truth_accuracy /= n_tasks;
  return out;
}

}  // namespace

ValResult evaluate_validation(const ParamSet& params, const AttributedGraph& graph,
                              const NoisyLabeling& labeling, const Tensor& prop,
                              const EpisodeSpec& spec, Variant variant, double slope,
                              const MetaConfig& cfg, int n_tasks, std::uint64_t seed) {
  return evaluate_validation_impl(params, graph, labeling, prop, spec, variant, slope, cfg,
                                  n_tasks, seed, /*parallel=*/true);
}

ValResult evaluate_validation_serial(const ParamSet& params, const AttributedGraph& graph,
                                     const NoisyLabeling& labeling, const Tensor& prop,
                                     const EpisodeSpec& spec, Variant variant, double slope,
                                     const MetaConfig& cfg, int n_tasks, std::uint64_t seed) {
  return evaluate_validation_impl(params, graph, labeling, prop, spec, variant, slope, cfg,
                                  n_tasks, seed, /*parallel=*/false);
}

TrainResult train(const AttributedGraph& graph, const NoisyLabeling& labeling,
                  const Tensor& prop, const ModelConfig& model, const MetaConfig& cfg,
                  const EpisodeSpec& spec, Variant variant, std::uint64_t seed) {
  if (model.n_way != spec.n_way) throw DataError("train: model n_way must match episode spec");
  if (cfg.tasks_per_batch < 1) throw DataError("train: tasks_per_batch must be positive");
  const int m_tasks = variant == Variant::naive ? 1 : spec.m_tasks;

  TrainResult result;
  TrainingState& state = result.state;
  state.params = ParamSet::init(model.d, model.d_hidden, model.n_way, derive_seed(seed, kInitTag));
  state.best_params = state.params;

  double loss_accum = 0.0;
  std::size_t loss_batches = 0;
  std::size_t next_check = cfg.val_interval;

  while (state.episodes_done < cfg.max_episodes) {
    const std::size_t remaining = cfg.max_episodes - state.episodes_done;
    const std::size_t b =
        std::min<std::size_t>(static_cast<std::size_t>(cfg.tasks_per_batch), remaining);

    // Sampling is serial and cheap; the gradient work inside meta_step is the
    // parallel part.
    std::vector<InterpolatedEpisode> episodes;
    episodes.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::uint64_t ep_seed =
          derive_seed(seed, kEpisodeTag + static_cast<std::uint64_t>(state.episodes_done + i));
      episodes.push_back(build_interpolation_groups(
          sample_task_set(graph, labeling, Split::train, spec.n_way, spec.k_shot, spec.k_query,
                          m_tasks, ep_seed)));
    }
    std::vector<std::pair<Objective, Objective>> batch;
    batch.reserve(b);
    for (const InterpolatedEpisode& ep : episodes) {
      batch.emplace_back(
          episode_objective(ep, prop, Subset::support, variant, model.leaky_slope),
          episode_objective(ep, prop, Subset::query, variant, model.leaky_slope));
    }
    try {
      loss_accum += meta_step(state, batch, cfg);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (episode " +
                            std::to_string(state.episodes_done) + ")");
    }
    ++loss_batches;

    if (cfg.val_interval > 0 && state.episodes_done >= next_check) {
      while (next_check <= state.episodes_done) next_check += cfg.val_interval;
      const std::uint64_t check_seed =
          derive_seed(seed, kValTag + static_cast<std::uint64_t>(state.episodes_done));
      EpisodeSpec val_spec = spec;
      val_spec.m_tasks = m_tasks;
      const ValResult val =
          evaluate_validation(state.params, graph, labeling, prop, val_spec, variant,
                              model.leaky_slope, cfg, cfg.val_tasks, check_seed);
      result.log.push_back({state.episodes_done, loss_accum / static_cast<double>(loss_batches),
                            val.weak_accuracy, val.truth_accuracy});
      loss_accum = 0.0;
      loss_batches = 0;
      if (val.weak_accuracy > state.best_val_accuracy) {
        state.best_val_accuracy = val.weak_accuracy;
        state.best_params = state.params;
        state.best_episode = state.episodes_done;
        state.checks_without_improvement = 0;
      } else {
        ++state.checks_without_improvement;
        if (state.checks_without_improvement >= cfg.patience) {
          result.early_stopped = true;
          break;
        }
      }
    }
  }
  if (result.log.empty()) {
    // No validation check ever ran; the final parameters are the best we have.
    state.best_params = state.params;
    state.best_episode = state.episodes_done;
  }
  return result;
}

FinetuneResult finetune_and_predict(const ParamSet& trained, const FewShotTask& task,
                                    const Tensor& prop, const MetaConfig& cfg,
                                    std::uint64_t reinit_seed) {
  if (task.class_list.empty() || task.support.empty() || task.query.empty()) {
    throw DataError("finetune_and_predict: task must have classes, support and query");
  }
  ParamSet p = trained;
  if (task.n_way() != trained.n_way) {
    // New classifier head for the new way count; everything else carries over.
    const ParamSet fresh =
        ParamSet::init(trained.d, trained.d_hidden, task.n_way(), reinit_seed);
    p.n_way = fresh.n_way;
    p.classifier = fresh.classifier;
    p.bias = fresh.bias;
  }

  // Interpolation-free adaptation: the task's members become singleton groups,
  // so the loss touches only encoder/classifier/bias.
  InterpolatedEpisode ep;
  ep.class_list = task.class_list;
  ep.m_tasks = 1;
  for (const TaskMember& m : task.support) {
    ep.support_groups.push_back({{m.node}, m.label, Subset::support});
  }
  for (const TaskMember& m : task.query) {
    ep.query_groups.push_back({{m.node}, m.label, Subset::query});
  }
  const Objective support = episode_objective(ep, prop, Subset::support, Variant::naive, 0.2);
  p = inner_adapt(p, support, cfg.inner_lr, cfg.finetune_steps);

  FinetuneResult out;
  out.predictions.reserve(task.query.size());
  std::size_t correct = 0;
  for (const TaskMember& m : task.query) {
    const std::size_t pos = predict_group({m.node}, prop, p, Variant::naive, 0.2);
    const int predicted = task.class_list[pos];
    out.predictions.push_back(predicted);
    if (predicted == m.label) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(task.query.size());
  return out;
}

}  // namespace gml
