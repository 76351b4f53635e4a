// Serial/parallel equivalence: every OpenMP kernel must produce bit-identical
// output to its serial reference.  Determinism comes from per-slot writes and
// fixed-order reductions, so equality must hold for any thread count; the
// suite forces several threads so the decomposition is exercised even on a
// single-core machine.

#include <cstdint>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "doctest.h"
#include "gml/experiment.hpp"
#include "gml/graph.hpp"
#include "gml/meta.hpp"
#include "gml/noise.hpp"
#include "gml/sbm.hpp"
#include "oracles.hpp"

using namespace gml;

namespace {

/// Force a thread count larger than this machine may have, so the parallel
/// paths really split their loops.  Returns the previous max for restoring.
struct ThreadCountGuard {
  int previous = 1;
  explicit ThreadCountGuard(int n) {
#ifdef _OPENMP
    previous = omp_get_max_threads();
    omp_set_num_threads(n);
#else
    (void)n;
#endif
  }
  ~ThreadCountGuard() {
#ifdef _OPENMP
    omp_set_num_threads(previous);
#endif
  }
};

SbmParams medium_sbm(std::uint64_t seed) {
  SbmParams p;
  p.classes = 8;
  p.nodes_per_class = 30;
  p.p_in = 0.15;
  p.p_out = 0.02;
  p.dim = 12;
  p.separation = 5.0;
  p.feature_std = 1.0;
  p.train_classes = 4;
  p.val_classes = 2;
  p.test_classes = 2;
  p.seed = seed;
  return p;
}

bool same_graph(const AttributedGraph& a, const AttributedGraph& b) {
  return a.num_nodes == b.num_nodes && a.row_ptr == b.row_ptr && a.col_idx == b.col_idx &&
         a.features.values() == b.features.values() && a.labels == b.labels &&
         a.splits.train_classes == b.splits.train_classes &&
         a.splits.val_classes == b.splits.val_classes &&
         a.splits.test_classes == b.splits.test_classes;
}

ExperimentConfig small_experiment() {
  ExperimentConfig cfg;
  cfg.use_synthetic = true;
  cfg.synthetic = SbmParams{};
  cfg.synthetic.classes = 6;
  cfg.synthetic.nodes_per_class = 14;
  cfg.synthetic.dim = 5;
  cfg.synthetic.train_classes = 2;
  cfg.synthetic.val_classes = 2;
  cfg.synthetic.test_classes = 2;
  cfg.synthetic.seed = 77;
  cfg.episode.n_way = 2;
  cfg.episode.k_shot = 1;
  cfg.episode.k_query = 2;
  cfg.episode.m_tasks = 2;
  cfg.epsilon = 0.3;
  cfg.model.d_hidden = 4;
  cfg.meta.max_episodes = 30;
  cfg.meta.val_interval = 10;
  cfg.meta.val_tasks = 3;
  cfg.meta.tasks_per_batch = 3;
  cfg.n_test_tasks = 5;
  cfg.n_repetitions = 3;
  cfg.master_seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("spmm matches its serial reference bitwise") {
  const ThreadCountGuard guard(4);
  const AttributedGraph g = generate_sbm(medium_sbm(101));
  const NormalizedAdjacency s = normalize(g);

  SUBCASE("on the graph's own features") {
    const Tensor par = spmm(s, g.features);
    const Tensor ser = spmm_serial(s, g.features);
    CHECK(par.shape() == ser.shape());
    CHECK(par.values() == ser.values());
  }
  SUBCASE("on a random dense matrix") {
    Rng rng(555);
    std::vector<double> vals(g.num_nodes * 7);
    for (double& v : vals) v = rng.normal();
    const Tensor x({g.num_nodes, 7}, vals);
    CHECK(spmm(s, x).values() == spmm_serial(s, x).values());
  }
  SUBCASE("on a ring graph") {
    const AttributedGraph ring = testref::ring_graph(50, 3, 808);
    const NormalizedAdjacency rs = normalize(ring);
    CHECK(spmm(rs, ring.features).values() == spmm_serial(rs, ring.features).values());
  }
}

TEST_CASE("propagate matches its serial reference bitwise across hop counts") {
  const ThreadCountGuard guard(4);
  const AttributedGraph g = generate_sbm(medium_sbm(102));
  const NormalizedAdjacency s = normalize(g);
  for (const int hops : {0, 1, 2, 5}) {
    CAPTURE(hops);
    const PropagatedFeatures par = propagate(s, g.features, hops);
    const PropagatedFeatures ser = propagate_serial(s, g.features, hops);
    CHECK(par.hops == hops);
    CHECK(ser.hops == hops);
    CHECK(par.matrix.values() == ser.matrix.values());
  }
}

TEST_CASE("generate_sbm matches its serial reference") {
  const ThreadCountGuard guard(4);
  for (const std::uint64_t seed : {1ULL, 9090ULL}) {
    CAPTURE(seed);
    const AttributedGraph par = generate_sbm(medium_sbm(seed));
    const AttributedGraph ser = generate_sbm_serial(medium_sbm(seed));
    CHECK(same_graph(par, ser));
  }
}

TEST_CASE("generate_sbm is invariant to the thread count") {
  AttributedGraph with_one;
  {
    const ThreadCountGuard guard(1);
    with_one = generate_sbm(medium_sbm(33));
  }
  AttributedGraph with_four;
  {
    const ThreadCountGuard guard(4);
    with_four = generate_sbm(medium_sbm(33));
  }
  CHECK(same_graph(with_one, with_four));
}

TEST_CASE("meta_step matches its serial reference bitwise") {
  const ThreadCountGuard guard(4);
  const AttributedGraph g = generate_sbm(medium_sbm(103));
  const NoisyLabeling weak = corrupt_labels(g, NoiseKind::symmetric, 0.3, 400);
  const Tensor prop = propagate(normalize(g), g.features, 2).matrix;

  // Objectives hold references to their episodes, so the episodes must
  // outlive the batch.
  std::vector<InterpolatedEpisode> episodes;
  episodes.reserve(5);
  for (int i = 0; i < 5; ++i) {
    const TaskSet ts = sample_task_set(g, weak, Split::train, 2, 2, 2, 3, 600 + i);
    episodes.push_back(build_interpolation_groups(ts));
  }
  std::vector<std::pair<Objective, Objective>> batch;
  for (const InterpolatedEpisode& ep : episodes) {
    batch.emplace_back(episode_objective(ep, prop, Subset::support, Variant::full, 0.2),
                       episode_objective(ep, prop, Subset::query, Variant::full, 0.2));
  }

  MetaConfig cfg;
  cfg.inner_lr = 0.1;
  cfg.inner_steps = 1;
  cfg.meta_lr = 0.001;
  for (const MetaGradMode mode : {MetaGradMode::exact, MetaGradMode::first_order}) {
    CAPTURE(to_string(mode));
    cfg.mode = mode;
    TrainingState par_state;
    par_state.params = ParamSet::init(12, 6, 2, 888);
    TrainingState ser_state;
    ser_state.params = par_state.params;

    const double par_loss = meta_step(par_state, batch, cfg);
    const double ser_loss = meta_step_serial(ser_state, batch, cfg);
    CHECK(par_loss == ser_loss);
    CHECK(par_state.params.flatten() == ser_state.params.flatten());
    CHECK(par_state.episodes_done == ser_state.episodes_done);
  }
}

TEST_CASE("evaluate_validation matches its serial reference bitwise") {
  const ThreadCountGuard guard(4);
  const AttributedGraph g = generate_sbm(medium_sbm(104));
  const NoisyLabeling weak = corrupt_labels(g, NoiseKind::symmetric, 0.3, 401);
  const Tensor prop = propagate(normalize(g), g.features, 2).matrix;
  const ParamSet params = ParamSet::init(12, 6, 2, 999);
  EpisodeSpec spec;
  spec.n_way = 2;
  spec.k_shot = 1;
  spec.k_query = 3;
  spec.m_tasks = 3;
  MetaConfig cfg;
  cfg.inner_lr = 0.1;
  cfg.inner_steps = 1;

  const ValResult par = evaluate_validation(params, g, weak, prop, spec, Variant::full, 0.2,
                                            cfg, 8, 4242);
  const ValResult ser = evaluate_validation_serial(params, g, weak, prop, spec, Variant::full,
                                                   0.2, cfg, 8, 4242);
  CHECK(par.weak_accuracy == ser.weak_accuracy);
  CHECK(par.truth_accuracy == ser.truth_accuracy);
}

TEST_CASE("run_experiment matches its serial reference") {
  const ThreadCountGuard guard(4);
  const ExperimentConfig cfg = small_experiment();
  const ExperimentOutput par = run_experiment(cfg);
  const ExperimentOutput ser = run_experiment_serial(cfg);

  // Everything except wall_seconds (a measurement, not a computation) must
  // agree bitwise.
  CHECK(par.record.fingerprint == ser.record.fingerprint);
  CHECK(par.record.dataset_name == ser.record.dataset_name);
  CHECK(par.record.accuracies == ser.record.accuracies);
  CHECK(par.record.rep_seeds == ser.record.rep_seeds);
  CHECK(par.record.mean_accuracy == ser.record.mean_accuracy);
  CHECK(par.record.std_accuracy == ser.record.std_accuracy);
  CHECK(par.record.master_seed == ser.record.master_seed);
  CHECK(par.rep0_params.flatten() == ser.rep0_params.flatten());

  REQUIRE(par.rep0_train.log.size() == ser.rep0_train.log.size());
  for (std::size_t i = 0; i < par.rep0_train.log.size(); ++i) {
    CHECK(par.rep0_train.log[i].episode == ser.rep0_train.log[i].episode);
    CHECK(par.rep0_train.log[i].train_loss == ser.rep0_train.log[i].train_loss);
    CHECK(par.rep0_train.log[i].val_accuracy == ser.rep0_train.log[i].val_accuracy);
  }
  CHECK(par.rep0_train.early_stopped == ser.rep0_train.early_stopped);
}

TEST_CASE("run_experiment is invariant to the thread count") {
  const ExperimentConfig cfg = small_experiment();
  ExperimentOutput with_one;
  {
    const ThreadCountGuard guard(1);
    with_one = run_experiment(cfg);
  }
  ExperimentOutput with_four;
  {
    const ThreadCountGuard guard(4);
    with_four = run_experiment(cfg);
  }
  CHECK(with_one.record.fingerprint == with_four.record.fingerprint);
  CHECK(with_one.record.accuracies == with_four.record.accuracies);
  CHECK(with_one.record.mean_accuracy == with_four.record.mean_accuracy);
  CHECK(with_one.rep0_params.flatten() == with_four.rep0_params.flatten());
}
