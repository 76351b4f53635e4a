// Meta-optimization: inner adaptation and meta-gradients against analytic
// surrogates with hand-computed updates, finite-difference checks of the
// composed meta-objective on real episodes, the training loop's determinism
// and stopping behavior, and the meta-test finetune protocol.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "doctest.h"
#include "gml/meta.hpp"
#include "gml/noise.hpp"
#include "gml/sbm.hpp"
#include "oracles.hpp"

using namespace gml;

namespace {

/// f(theta) = 0.5 * ||theta - t||^2 componentwise: grad theta - t, H = I.
Objective quadratic(double target) {
  Objective o;
  o.loss = [target](const ParamSet& p) {
    double s = 0.0;
    for (const double v : p.flatten()) s += (v - target) * (v - target);
    return 0.5 * s;
  };
  o.grad = [target](const ParamSet& p) {
    std::vector<double> f = p.flatten();
    for (double& x : f) x -= target;
    return GradientSet::unflatten(p.d, p.d_hidden, p.n_way, f);
  };
  o.hvp = [](const ParamSet&, const GradientSet& v) { return v; };
  return o;
}

/// f(theta) = sum_i c * theta_i: constant gradient, zero curvature.
Objective linear(double c) {
  Objective o;
  o.loss = [c](const ParamSet& p) {
    double s = 0.0;
    for (const double v : p.flatten()) s += c * v;
    return s;
  };
  o.grad = [c](const ParamSet& p) {
    std::vector<double> f(p.count(), c);
    return GradientSet::unflatten(p.d, p.d_hidden, p.n_way, f);
  };
  o.hvp = [](const ParamSet& p, const GradientSet&) {
    return GradientSet::zeros(p.d, p.d_hidden, p.n_way);
  };
  return o;
}

ParamSet filled(int d, int dh, int n, double value) {
  std::vector<double> f(ParamSet::zeros(d, dh, n).count(), value);
  return ParamSet::unflatten(d, dh, n, f);
}

bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  return a.same_shape(b) && a.flatten() == b.flatten();
}

/// Small SBM episode for real-objective tests.
struct MetaFixture {
  AttributedGraph g;
  NoisyLabeling weak;
  Tensor prop;
  InterpolatedEpisode support_ep;
  InterpolatedEpisode query_ep;
};

MetaFixture meta_fixture(std::uint64_t seed) {
  SbmParams params;
  params.classes = 6;
  params.nodes_per_class = 18;
  params.dim = 4;
  params.train_classes = 3;
  params.val_classes = 2;
  params.test_classes = 1;
  params.seed = 23;
  MetaFixture f;
  f.g = generate_sbm(params);
  f.weak = corrupt_labels(f.g, NoiseKind::symmetric, 0.3, seed);
  f.prop = propagate(normalize(f.g), f.g.features, 2).matrix;
  const TaskSet ts = sample_task_set(f.g, f.weak, Split::train, 2, 2, 2, 2, seed + 5);
  f.support_ep = build_interpolation_groups(ts);
  f.query_ep = f.support_ep;  // same episode; support/query subsets differ
  return f;
}

}  // namespace

TEST_CASE("meta-grad mode parsing") {
  CHECK(parse_meta_grad_mode("exact") == MetaGradMode::exact);
  CHECK(parse_meta_grad_mode("first_order") == MetaGradMode::first_order);
  CHECK(to_string(MetaGradMode::exact) == "exact");
  CHECK(to_string(MetaGradMode::first_order) == "first_order");
  CHECK_THROWS_AS(parse_meta_grad_mode("second_order"), DataError);
}

TEST_CASE("inner_adapt: identity cases and the quadratic contraction") {
  const ParamSet theta = filled(2, 3, 2, 1.0);
  const Objective obj = quadratic(0.0);

  SUBCASE("alpha = 0 returns the input bitwise") {
    CHECK(bitwise_equal(inner_adapt(theta, obj, 0.0, 3), theta));
  }
  SUBCASE("steps = 0 returns the input bitwise") {
    CHECK(bitwise_equal(inner_adapt(theta, obj, 0.5, 0), theta));
  }
  SUBCASE("negative steps are rejected") {
    CHECK_THROWS_AS(inner_adapt(theta, obj, 0.1, -1), DataError);
  }
  SUBCASE("one step contracts by exactly 1 - alpha") {
    // alpha = 0.25: the update theta - 0.25*theta is exact in binary.
    const ParamSet adapted = inner_adapt(theta, obj, 0.25, 1);
    for (const double v : adapted.flatten()) CHECK(v == 0.75);
  }
  SUBCASE("two steps compose; the trajectory holds the pre-step iterates") {
    std::vector<ParamSet> traj;
    const ParamSet adapted = inner_adapt(theta, obj, 0.25, 2, &traj);
    for (const double v : adapted.flatten()) CHECK(v == 0.75 * 0.75);
    REQUIRE(traj.size() == 2);
    for (const double v : traj[0].flatten()) CHECK(v == 1.0);
    for (const double v : traj[1].flatten()) CHECK(v == 0.75);
  }
}

TEST_CASE("inner_adapt flags divergence") {
  const ParamSet theta = filled(2, 2, 2, 1.0);
  Objective bad = quadratic(0.0);
  bad.grad = [](const ParamSet& p) {
    std::vector<double> f(p.count(), std::numeric_limits<double>::quiet_NaN());
    return GradientSet::unflatten(p.d, p.d_hidden, p.n_way, f);
  };
  CHECK_THROWS_AS(inner_adapt(theta, bad, 0.1, 1), DivergenceError);
}

TEST_CASE("meta_gradient on the quadratic: exact carries the curvature factor") {
  // Support f_S = 0.5||theta||^2, query f_Q = 0.5||theta||^2, alpha = 0.5.
  // theta' = 0.5 theta;  grad f_Q(theta') = 0.5 theta.
  // exact:       (I - alpha H_S) 0.5 theta = 0.25 theta.
  // first-order:                             0.5 theta.
  const ParamSet theta = filled(3, 2, 2, 1.0);
  MetaConfig cfg;
  cfg.inner_lr = 0.5;
  cfg.inner_steps = 1;

  cfg.mode = MetaGradMode::exact;
  double qloss = 0.0;
  const GradientSet exact = meta_gradient(theta, quadratic(0.0), quadratic(0.0), cfg, &qloss);
  for (const double v : exact.flatten()) CHECK(v == 0.25);
  // Query loss is reported at the adapted parameters: 0.5 * count * 0.25.
  CHECK(qloss == 0.5 * 0.25 * static_cast<double>(theta.count()));

  cfg.mode = MetaGradMode::first_order;
  const GradientSet fo = meta_gradient(theta, quadratic(0.0), quadratic(0.0), cfg);
  for (const double v : fo.flatten()) CHECK(v == 0.5);
}

TEST_CASE("zero curvature makes exact and first-order identical bitwise") {
  const ParamSet theta = filled(2, 3, 3, 0.5);
  MetaConfig cfg;
  cfg.inner_lr = 0.125;
  cfg.inner_steps = 1;
  cfg.mode = MetaGradMode::exact;
  const GradientSet a = meta_gradient(theta, linear(0.75), quadratic(0.0), cfg);
  cfg.mode = MetaGradMode::first_order;
  const GradientSet b = meta_gradient(theta, linear(0.75), quadratic(0.0), cfg);
  CHECK(a.flatten() == b.flatten());
}

TEST_CASE("meta_gradient matches finite differences of the composed objective") {
  const MetaFixture f = meta_fixture(71);
  const ParamSet theta = ParamSet::init(4, 3, 2, 15);
  const Objective support = episode_objective(f.support_ep, f.prop, Subset::support,
                                              Variant::full, 0.2);
  const Objective query = episode_objective(f.query_ep, f.prop, Subset::query,
                                            Variant::full, 0.2);
  MetaConfig cfg;
  cfg.inner_lr = 0.1;
  cfg.inner_steps = 1;

  for (const MetaGradMode mode : {MetaGradMode::exact, MetaGradMode::first_order}) {
    cfg.mode = mode;
    const GradientSet g = meta_gradient(theta, support, query, cfg);

    if (mode == MetaGradMode::exact) {
      // d/dtheta of the true composition L_Q(theta - alpha grad L_S(theta)).
      const testref::FdReport rep = testref::fd_check(
          [&](const ParamSet& q) {
            return query.loss(inner_adapt(q, support, cfg.inner_lr, cfg.inner_steps));
          },
          theta, g.flatten());
      CHECK(rep.worst_rel < 1e-5);
      CHECK(rep.worst_abs < 1e-7);
    } else {
      // First-order is by definition the query gradient at the adapted point.
      const ParamSet adapted = inner_adapt(theta, support, cfg.inner_lr, cfg.inner_steps);
      const std::vector<double> expect = query.grad(adapted).flatten();
      const std::vector<double> got = g.flatten();
      REQUIRE(got.size() == expect.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);
    }
  }
}

TEST_CASE("meta_step applies the summed batch update with step beta") {
  MetaConfig cfg;
  cfg.inner_lr = 0.5;
  cfg.meta_lr = 0.25;
  cfg.inner_steps = 1;
  cfg.mode = MetaGradMode::exact;

  TrainingState state;
  state.params = filled(2, 2, 2, 1.0);

  SUBCASE("single episode, hand-computed result") {
    std::vector<std::pair<Objective, Objective>> batch;
    batch.emplace_back(quadratic(0.0), quadratic(0.0));
    const double loss = meta_step(state, batch, cfg);
    // meta-grad = 0.25 theta; theta <- theta - 0.25*0.25 theta = 0.9375 theta.
    for (const double v : state.params.flatten()) CHECK(v == 0.9375);
    CHECK(loss == 0.5 * 0.25 * static_cast<double>(state.params.count()));
  }
  SUBCASE("two identical episodes sum their gradients") {
    std::vector<std::pair<Objective, Objective>> batch;
    batch.emplace_back(quadratic(0.0), quadratic(0.0));
    batch.emplace_back(quadratic(0.0), quadratic(0.0));
    meta_step(state, batch, cfg);
    // theta <- theta - 0.25 * (2 * 0.25 theta) = 0.875 theta.
    for (const double v : state.params.flatten()) CHECK(v == 0.875);
  }
  SUBCASE("beta = 0 leaves the parameters bit-identical") {
    cfg.meta_lr = 0.0;
    const ParamSet before = state.params;
    std::vector<std::pair<Objective, Objective>> batch;
    batch.emplace_back(quadratic(3.0), quadratic(-1.0));
    meta_step(state, batch, cfg);
    CHECK(bitwise_equal(state.params, before));
  }
  SUBCASE("empty batch is rejected") {
    std::vector<std::pair<Objective, Objective>> batch;
    CHECK_THROWS_AS(meta_step(state, batch, cfg), DataError);
  }
  SUBCASE("non-finite query loss raises DivergenceError") {
    Objective bad = quadratic(0.0);
    bad.loss = [](const ParamSet&) { return std::numeric_limits<double>::quiet_NaN(); };
    std::vector<std::pair<Objective, Objective>> batch;
    batch.emplace_back(quadratic(0.0), bad);
    CHECK_THROWS_AS(meta_step(state, batch, cfg), DivergenceError);
  }
}

TEST_CASE("evaluate_validation with frozen zero parameters scores exactly 1/N") {
  SbmParams params;
  params.classes = 12;
  params.nodes_per_class = 16;
  params.dim = 5;
  params.train_classes = 5;
  params.val_classes = 5;
  params.test_classes = 2;
  params.seed = 29;
  const AttributedGraph g = generate_sbm(params);
  const NoisyLabeling weak = corrupt_labels(g, NoiseKind::symmetric, 0.3, 3);
  const Tensor prop = propagate(normalize(g), g.features, 2).matrix;

  EpisodeSpec spec;
  spec.n_way = 5;
  spec.k_shot = 1;
  spec.k_query = 2;
  spec.m_tasks = 2;
  MetaConfig cfg;
  cfg.inner_lr = 0.0;  // no adaptation: zero params mean uniform logits everywhere

  const ParamSet zeros = ParamSet::zeros(5, 4, 5);
  const ValResult r =
      evaluate_validation(zeros, g, weak, prop, spec, Variant::full, 0.2, cfg, 4, 17);
  // Ties resolve to slot 0, so exactly K' of the N*K' query groups per
  // episode are counted correct.
  CHECK(r.weak_accuracy == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.truth_accuracy >= 0.0);
  CHECK(r.truth_accuracy <= 1.0);

  CHECK_THROWS_AS(
      evaluate_validation(zeros, g, weak, prop, spec, Variant::full, 0.2, cfg, 0, 17),
      DataError);

  // Seeded: same seed, same numbers.
  cfg.inner_lr = 0.1;
  const ParamSet p = ParamSet::init(5, 4, 5, 2);
  const ValResult a =
      evaluate_validation(p, g, weak, prop, spec, Variant::full, 0.2, cfg, 6, 99);
  const ValResult b =
      evaluate_validation(p, g, weak, prop, spec, Variant::full, 0.2, cfg, 6, 99);
  CHECK(a.weak_accuracy == b.weak_accuracy);
  CHECK(a.truth_accuracy == b.truth_accuracy);
}

TEST_CASE("train: max_episodes = 0 returns the fresh initialization") {
  const MetaFixture f = meta_fixture(5);
  ModelConfig model;
  model.d = 4;
  model.d_hidden = 3;
  model.n_way = 2;
  MetaConfig cfg;
  cfg.max_episodes = 0;
  EpisodeSpec spec;
  spec.n_way = 2;
  spec.k_shot = 1;
  spec.k_query = 2;
  spec.m_tasks = 2;

  const TrainResult r = train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 42);
  CHECK(r.state.episodes_done == 0);
  CHECK(r.log.empty());
  CHECK_FALSE(r.early_stopped);
  // Best parameters fall back to the (seeded) initialization itself.
  CHECK(bitwise_equal(r.state.params, r.state.best_params));

  const TrainResult again = train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 42);
  CHECK(bitwise_equal(r.state.params, again.state.params));
  const TrainResult other = train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 43);
  CHECK_FALSE(bitwise_equal(r.state.params, other.state.params));
}

TEST_CASE("train is bit-deterministic and logs on the validation grid") {
  const MetaFixture f = meta_fixture(9);
  ModelConfig model;
  model.d = 4;
  model.d_hidden = 3;
  model.n_way = 2;
  MetaConfig cfg;
  cfg.max_episodes = 60;
  cfg.val_interval = 20;
  cfg.val_tasks = 4;
  cfg.tasks_per_batch = 2;
  cfg.patience = 50;  // effectively off for this short run
  cfg.mode = MetaGradMode::exact;
  EpisodeSpec spec;
  spec.n_way = 2;
  spec.k_shot = 1;
  spec.k_query = 2;
  spec.m_tasks = 2;

  const TrainResult a = train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 7);
  const TrainResult b = train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 7);

  CHECK(bitwise_equal(a.state.params, b.state.params));
  CHECK(bitwise_equal(a.state.best_params, b.state.best_params));
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].episode == b.log[i].episode);
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_accuracy == b.log[i].val_accuracy);
  }

  // Checks land every val_interval episodes and training ran to the cap.
  CHECK(a.state.episodes_done == 60);
  REQUIRE(a.log.size() == 3);
  CHECK(a.log[0].episode == 20);
  CHECK(a.log[1].episode == 40);
  CHECK(a.log[2].episode == 60);
  for (const TrainCheck& c : a.log) {
    CHECK(std::isfinite(c.train_loss));
    CHECK(c.val_accuracy >= 0.0);
    CHECK(c.val_accuracy <= 1.0);
  }
  // Best-so-far bookkeeping agrees with the log.
  double best = -1.0;
  std::size_t best_ep = 0;
  for (const TrainCheck& c : a.log) {
    if (c.val_accuracy > best) {
      best = c.val_accuracy;
      best_ep = c.episode;
    }
  }
  CHECK(a.state.best_val_accuracy == best);
  CHECK(a.state.best_episode == best_ep);

  // The parameters actually moved.
  const TrainResult zero = train(f.g, f.weak, f.prop, model,
                                 [&] {
                                   MetaConfig c2 = cfg;
                                   c2.max_episodes = 0;
                                   return c2;
                                 }(),
                                 spec, Variant::full, 7);
  CHECK_FALSE(bitwise_equal(a.state.params, zero.state.params));
}

TEST_CASE("train stops early once validation stalls") {
  const MetaFixture f = meta_fixture(33);
  ModelConfig model;
  model.d = 4;
  model.d_hidden = 3;
  model.n_way = 2;
  MetaConfig cfg;
  cfg.max_episodes = 2000;
  cfg.val_interval = 10;
  cfg.val_tasks = 3;
  cfg.tasks_per_batch = 1;
  cfg.patience = 2;
  cfg.mode = MetaGradMode::first_order;
  EpisodeSpec spec;
  spec.n_way = 2;
  spec.k_shot = 1;
  spec.k_query = 2;
  spec.m_tasks = 2;

  const TrainResult r = train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 21);
  CHECK(r.early_stopped);
  CHECK(r.state.episodes_done < 2000);
  CHECK(r.log.size() == r.state.episodes_done / 10);
}

TEST_CASE("train validates shape agreement") {
  const MetaFixture f = meta_fixture(2);
  ModelConfig model;
  model.d = 4;
  model.d_hidden = 3;
  model.n_way = 3;  // mismatch: spec below asks for 2-way episodes
  MetaConfig cfg;
  EpisodeSpec spec;
  spec.n_way = 2;
  CHECK_THROWS_AS(train(f.g, f.weak, f.prop, model, cfg, spec, Variant::full, 1), DataError);
}

TEST_CASE("finetune_and_predict: frozen zero head predicts slot 0") {
  const AttributedGraph g = testref::blob_graph(20, 6, 10.0, 44);
  const Tensor prop = propagate(normalize(g), g.features, 2).matrix;
  const FewShotTask task = sample_meta_test_task(g, 2, 1, 5, 12);

  MetaConfig cfg;
  cfg.finetune_steps = 0;
  const ParamSet zeros = ParamSet::zeros(6, 4, 2);
  const FinetuneResult r = finetune_and_predict(zeros, task, prop, cfg);
  // All-zero logits tie at every query node; ties resolve to class_list[0].
  REQUIRE(r.predictions.size() == task.query.size());
  for (const int p : r.predictions) CHECK(p == task.class_list[0]);
  CHECK(r.accuracy == 0.5);  // balanced 2-way task
}

TEST_CASE("finetune_and_predict solves a separable task from a random start") {
  const AttributedGraph g = testref::blob_graph(20, 6, 10.0, 44);
  const Tensor prop = propagate(normalize(g), g.features, 2).matrix;

  MetaConfig cfg;  // defaults: 10 steps at alpha = 0.1
  const ParamSet start = ParamSet::init(6, 8, 2, 303);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const FewShotTask task = sample_meta_test_task(g, 2, 2, 5, 100 + s);
    const FinetuneResult r = finetune_and_predict(start, task, prop, cfg);
    CHECK(r.accuracy == 1.0);
    // Predictions are real class ids of the task.
    for (const int p : r.predictions) {
      CHECK(std::count(task.class_list.begin(), task.class_list.end(), p) == 1);
    }
  }
}

TEST_CASE("finetune_and_predict re-initializes a mismatched head deterministically") {
  const AttributedGraph g = testref::blob_graph(20, 6, 10.0, 44);
  const Tensor prop = propagate(normalize(g), g.features, 2).matrix;
  const FewShotTask task = sample_meta_test_task(g, 2, 2, 5, 9);

  MetaConfig cfg;
  // Head trained for 3-way, task is 2-way: the classifier is re-drawn.
  const ParamSet trained = ParamSet::init(6, 8, 3, 1);
  const FinetuneResult a = finetune_and_predict(trained, task, prop, cfg, 500);
  const FinetuneResult b = finetune_and_predict(trained, task, prop, cfg, 500);
  CHECK(a.predictions == b.predictions);
  CHECK(a.accuracy == b.accuracy);
  // Separation 10 is easy even with a fresh head.
  CHECK(a.accuracy == 1.0);

  FewShotTask empty;
  CHECK_THROWS_AS(finetune_and_predict(trained, empty, prop, cfg), DataError);
}
