#pragma once

// Episodic meta-optimization: inner-loop gradient adaptation per episode,
// outer-loop SGD on the post-adaptation query losses.  Exact mode carries the
// curvature term through the inner step(s) via Hessian-vector products
// (reverse over the adaptation chain: u <- u - alpha * H_support(theta_t) u);
// first-order mode treats adapted parameters as constants.
//
// The batch meta-gradient is embarrassingly parallel over episodes and is
// reduced in fixed episode order, so the result is identical for any thread
// count; a serial reference implementation is kept for the equality tests.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gml/episodes.hpp"
#include "gml/model.hpp"
#include "gml/tensor.hpp"

namespace gml {

enum class MetaGradMode { exact, first_order };

MetaGradMode parse_meta_grad_mode(const std::string& s);
std::string to_string(MetaGradMode m);

struct MetaConfig {
  double inner_lr = 0.1;      // alpha: inner adaptation step size
  double meta_lr = 0.001;     // beta: outer step size
  int inner_steps = 1;
  int tasks_per_batch = 5;    // episodes per meta-batch
  std::size_t max_episodes = 20000;
  MetaGradMode mode = MetaGradMode::exact;
  int patience = 10;          // validation checks without improvement before stopping
  std::size_t val_interval = 100;  // episodes between validation checks
  int val_tasks = 20;         // episodes per validation check during training
  int finetune_steps = 10;    // meta-test adaptation steps
};

/// A scalar objective of the parameters with its first derivative and a
/// Hessian-vector product.  Episode losses provide all three; tests plug in
/// analytic surrogates.
struct Objective {
  std::function<double(const ParamSet&)> loss;
  std::function<GradientSet(const ParamSet&)> grad;
  std::function<GradientSet(const ParamSet&, const GradientSet&)> hvp;
};

/// Support/query objectives of one interpolated episode.
Objective episode_objective(const InterpolatedEpisode& ep, const Tensor& prop, Subset subset,
                            Variant variant, double slope);

/// steps gradient steps of size alpha on `obj`, starting from `params`.
/// alpha = 0 or steps = 0 returns the input unchanged.  If `trajectory` is
/// given it receives the parameter values *before* each step (theta_0 ..
/// theta_{steps-1}), which exact-mode differentiation needs.
ParamSet inner_adapt(const ParamSet& params, const Objective& obj, double alpha, int steps,
                     std::vector<ParamSet>* trajectory = nullptr);

/// d/dtheta [ query.loss(adapt(theta)) ] — exact or first-order per `mode`.
/// Optionally reports the query loss at the adapted parameters.
GradientSet meta_gradient(const ParamSet& params, const Objective& support,
                          const Objective& query, const MetaConfig& cfg,
                          double* query_loss = nullptr);

struct TrainingState {
  ParamSet params;
  std::size_t episodes_done = 0;
  double best_val_accuracy = -1.0;
  ParamSet best_params;
  std::size_t best_episode = 0;
  int checks_without_improvement = 0;
};

/// One outer step over a batch of (support, query) objective pairs: the
/// per-episode meta-gradients are summed in episode order and applied with
/// step size beta.  Returns the mean query loss at the adapted parameters.
/// Throws DivergenceError if any loss or the updated parameters go
/// non-finite.  beta = 0 leaves the parameters bit-identical.
double meta_step(TrainingState& state, const std::vector<std::pair<Objective, Objective>>& batch,
                 const MetaConfig& cfg);
/// Serial reference for meta_step; must match bitwise.
double meta_step_serial(TrainingState& state,
                        const std::vector<std::pair<Objective, Objective>>& batch,
                        const MetaConfig& cfg);

/// Episode-shape parameters of training/validation sampling.
struct EpisodeSpec {
  int n_way = 2;
  int k_shot = 1;
  int k_query = 5;
  int m_tasks = 5;
};

struct ValResult {
  double weak_accuracy = 0.0;   // vs the weak labels the episodes carry
  double truth_accuracy = 0.0;  // vs ground-truth member labels (diagnostic)
};

/// Mean query-group accuracy over n_tasks seeded validation episodes.
/// Adaptation happens on per-episode copies; `params` itself is untouched.
ValResult evaluate_validation(const ParamSet& params, const AttributedGraph& graph,
                              const NoisyLabeling& labeling, const Tensor& prop,
                              const EpisodeSpec& spec, Variant variant, double slope,
                              const MetaConfig& cfg, int n_tasks, std::uint64_t seed);
/// Serial reference for evaluate_validation; must match bitwise.
ValResult evaluate_validation_serial(const ParamSet& params, const AttributedGraph& graph,
                                     const NoisyLabeling& labeling, const Tensor& prop,
                                     const EpisodeSpec& spec, Variant variant, double slope,
                                     const MetaConfig& cfg, int n_tasks, std::uint64_t seed);

struct TrainCheck {
  std::size_t episode = 0;
  double train_loss = 0.0;     // mean query meta-loss since the last check
  double val_accuracy = 0.0;
  double val_truth_accuracy = 0.0;
};

struct TrainResult {
  TrainingState state;
  std::vector<TrainCheck> log;
  bool early_stopped = false;
};

/// Full training loop: batches of sampled episodes, periodic validation,
/// patience-based early stopping.  A pure function of its inputs and `seed`
/// (bit-identical parameter trajectories on repeated runs).
/// max_episodes = 0 returns the freshly initialized state.
TrainResult train(const AttributedGraph& graph, const NoisyLabeling& labeling,
                  const Tensor& prop, const ModelConfig& model, const MetaConfig& cfg,
                  const EpisodeSpec& spec, Variant variant, std::uint64_t seed);

struct FinetuneResult {
  double accuracy = 0.0;
  std::vector<int> predictions;  // predicted class ids, one per query member
};

/// Meta-test protocol: the interpolation machinery is dropped; finetune_steps
/// gradient steps on the clean support set move only the interpolation-free
/// path (encoder, classifier, bias — the score/attention parameters carry no
/// gradient here), then query nodes are classified.  Ties resolve to the
/// lowest class index.  If the task's N differs from the trained head, the
/// classifier head is re-initialized from `reinit_seed`.
FinetuneResult finetune_and_predict(const ParamSet& trained, const FewShotTask& task,
                                    const Tensor& prop, const MetaConfig& cfg,
                                    std::uint64_t reinit_seed = 0);

}  // namespace gml
