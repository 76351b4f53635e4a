#pragma once

// Experiment orchestration: a config names a dataset (bundle path or
// synthetic spec), the episode shape, noise, model/meta settings, repetition
// counts and a master seed.  Every repetition derives its own seed; noise,
// initialization, training and meta-test evaluation are pure functions of
// it, so any repetition can be reproduced in isolation and two runs of the
// same config are bit-identical (wall time aside).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "gml/meta.hpp"
#include "gml/noise.hpp"
#include "gml/sbm.hpp"

namespace gml {

struct ExperimentConfig {
  std::string dataset;       // bundle directory; empty when synthetic
  bool use_synthetic = false;
  SbmParams synthetic;
  EpisodeSpec episode;
  NoiseKind noise_kind = NoiseKind::symmetric;
  double epsilon = 0.3;
  ModelConfig model;  // d is filled from the data at run time
  MetaConfig meta;
  int n_test_tasks = 100;
  int n_repetitions = 10;
  std::uint64_t master_seed = 1;
  Variant variant = Variant::full;
};

/// Parse/serialize the JSON config format (see README).  Unknown keys are
/// rejected; missing keys fall back to the defaults above.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// 16-hex-digit stable hash of the canonicalized effective config.
std::string config_fingerprint(const ExperimentConfig& cfg);

/// The effective config actually run: naive forces M = 1.
ExperimentConfig effective_config(const ExperimentConfig& cfg);

struct ResultRecord {
  std::string fingerprint;
  std::string dataset_name;  // bundle path or "synthetic"
  ExperimentConfig config;   // effective
  std::vector<double> accuracies;      // one per repetition
  std::vector<std::uint64_t> rep_seeds;  // seed lineage, one per repetition
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over repetitions
  double wall_seconds = 0.0;
  std::uint64_t master_seed = 0;
};

/// Per-repetition seed: a tagged derivation of the master seed, one distinct
/// stream per repetition index.
std::uint64_t repetition_seed(std::uint64_t master_seed, int repetition);
/// Seeds of the meta-test task stream and the head re-init stream of one
/// repetition (used by run_experiment and the eval subcommand alike).
std::uint64_t test_task_seed(std::uint64_t run_seed, int task_index);
std::uint64_t head_reinit_seed(std::uint64_t run_seed, int task_index);

struct RepetitionResult {
  double accuracy = 0.0;  // mean meta-test accuracy over n_test_tasks
  TrainResult train_result;
};

/// One repetition of the full protocol (corrupt -> train -> meta-test),
/// a pure function of `run_seed`.  run_experiment calls this per repetition;
/// it is public so a single repetition can be reproduced in isolation.
RepetitionResult run_repetition(const ExperimentConfig& cfg, const AttributedGraph& graph,
                                const Tensor& prop, const ModelConfig& model,
                                std::uint64_t run_seed);

/// Everything run_experiment produces beyond the record (for checkpointing).
struct ExperimentOutput {
  ResultRecord record;
  ParamSet rep0_params;      // best params of repetition 0
  TrainResult rep0_train;    // its training log
};

/// Full protocol: materialize data, propagate once, then per repetition
/// corrupt -> train -> meta-test over n_test_tasks clean tasks.  Repetitions
/// run in parallel into indexed slots; aggregation is fixed-order.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);
/// Serial reference (repetitions in a plain loop); must match bitwise.
ExperimentOutput run_experiment_serial(const ExperimentConfig& cfg);

/// One record per variant, order full, mlp, mean, naive (naive with M = 1).
std::vector<ResultRecord> run_ablation(const ExperimentConfig& cfg);

/// One record per epsilon (config's variant).  Duplicate epsilons are
/// rejected.
std::vector<ResultRecord> run_noise_sweep(const ExperimentConfig& cfg,
                                          const std::vector<double>& epsilons);

/// Writes results.csv, results.json and plotdata/accuracy_vs_epsilon.csv
/// into `outdir`.  Byte-deterministic given identical records.
void write_report(const std::vector<ResultRecord>& records,
                  const std::filesystem::path& outdir);

}  // namespace gml
