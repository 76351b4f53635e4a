// Benchmark: OpenMP kernels vs their serial reference implementations.
//
// Each kernel is timed over a few iterations and the outputs are checked
// for bitwise equality -- the parallel paths are written so that thread
// count never changes the result, and this is where we make that visible.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gml/experiment.hpp"
#include "gml/graph.hpp"
#include "gml/meta.hpp"
#include "gml/sbm.hpp"

namespace {

double time_of(const std::function<void()>& fn, int iters) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / iters;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const std::string& name, double serial_s, double parallel_s, bool match) {
  std::printf("%-28s serial %9.4f s   parallel %9.4f s   speedup %5.2fx   %s\n", name.c_str(),
              serial_s, parallel_s, parallel_s > 0 ? serial_s / parallel_s : 0.0,
              match ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel paths run serially\n\n");
#endif

  // A graph big enough to make propagation visible.
  gml::SbmParams big;
  big.classes = 10;
  big.nodes_per_class = 400;
  big.p_in = 0.05;
  big.p_out = 0.005;
  big.dim = 32;
  big.seed = 11;

  const gml::AttributedGraph gs = gml::generate_sbm_serial(big);
  double t_sbm_s = time_of([&] { gml::generate_sbm_serial(big); }, 3);
  gml::AttributedGraph gp = gml::generate_sbm(big);
  double t_sbm_p = time_of([&] { gp = gml::generate_sbm(big); }, 3);
  report("generate_sbm", t_sbm_s, t_sbm_p,
         bits_equal(gs.features.values(), gp.features.values()) && gs.col_idx == gp.col_idx);

  const gml::NormalizedAdjacency adj = gml::normalize(gs);
  const gml::PropagatedFeatures ps = gml::propagate_serial(adj, gs.features, 2);
  double t_prop_s = time_of([&] { gml::propagate_serial(adj, gs.features, 2); }, 10);
  gml::PropagatedFeatures pp = gml::propagate(adj, gs.features, 2);
  double t_prop_p = time_of([&] { pp = gml::propagate(adj, gs.features, 2); }, 10);
  report("propagate (2 hops)", t_prop_s, t_prop_p,
         bits_equal(ps.matrix.values(), pp.matrix.values()));

  // Meta-training batch on a desk-scale problem.
  gml::SbmParams small;
  small.seed = 11;
  const gml::AttributedGraph g2 = gml::generate_sbm(small);
  const gml::NoisyLabeling noisy = gml::corrupt_labels(g2, gml::NoiseKind::symmetric, 0.3, 5);
  const gml::PropagatedFeatures prop2 = gml::propagate(gml::normalize(g2), g2.features, 2);

  gml::ModelConfig model;
  model.d = g2.feature_dim();
  model.n_way = 2;
  gml::MetaConfig meta;
  const gml::EpisodeSpec spec;

  const auto make_state = [&] {
    gml::TrainingState st;
    st.params = gml::ParamSet::init(model.d, model.d_hidden, model.n_way, 99);
    return st;
  };
  const auto make_batch = [&] {
    std::vector<std::pair<gml::Objective, gml::Objective>> batch;
    static std::vector<gml::InterpolatedEpisode> keep;  // keep episodes alive
    keep.clear();
    for (int i = 0; i < meta.tasks_per_batch; ++i) {
      const gml::TaskSet ts =
          gml::sample_task_set(g2, noisy, gml::Split::train, spec.n_way, spec.k_shot,
                               spec.k_query, spec.m_tasks, gml::derive_seed(31, 400 + i));
      keep.push_back(gml::build_interpolation_groups(ts));
    }
    for (auto& ep : keep) {
      batch.emplace_back(
          gml::episode_objective(ep, prop2.matrix, gml::Subset::support, gml::Variant::full,
                                 model.leaky_slope),
          gml::episode_objective(ep, prop2.matrix, gml::Subset::query, gml::Variant::full,
                                 model.leaky_slope));
    }
    return batch;
  };

  const auto batch = make_batch();
  gml::TrainingState st_s = make_state();
  double t_step_s = time_of([&] { gml::meta_step_serial(st_s, batch, meta); }, 5);
  gml::TrainingState st_p = make_state();
  double t_step_p = time_of([&] { gml::meta_step(st_p, batch, meta); }, 5);
  report("meta_step (B=5, exact)", t_step_s, t_step_p,
         bits_equal(st_s.params.flatten(), st_p.params.flatten()));

  const gml::ParamSet theta = gml::ParamSet::init(model.d, model.d_hidden, model.n_way, 99);
  const auto val_s = gml::evaluate_validation_serial(theta, g2, noisy, prop2.matrix, spec,
                                                     gml::Variant::full, model.leaky_slope, meta,
                                                     20, 77);
  double t_val_s = time_of(
      [&] {
        gml::evaluate_validation_serial(theta, g2, noisy, prop2.matrix, spec,
                                        gml::Variant::full, model.leaky_slope, meta, 20, 77);
      },
      3);
  auto val_p = gml::evaluate_validation(theta, g2, noisy, prop2.matrix, spec,
                                        gml::Variant::full, model.leaky_slope, meta, 20, 77);
  double t_val_p = time_of(
      [&] {
        val_p = gml::evaluate_validation(theta, g2, noisy, prop2.matrix, spec,
                                         gml::Variant::full, model.leaky_slope, meta, 20, 77);
      },
      3);
  report("evaluate_validation (20)", t_val_s, t_val_p,
         val_s.weak_accuracy == val_p.weak_accuracy &&
             val_s.truth_accuracy == val_p.truth_accuracy);

  return 0;
}
