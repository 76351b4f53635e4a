#include "gml/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>

#include "gml/dataset.hpp"

namespace gml {

namespace {

using nlohmann::json;

constexpr std::uint64_t kRepTag = 0x52455000u;
constexpr std::uint64_t kNoiseTag = 0x6e7a0000u;
constexpr std::uint64_t kTestTag = 0x74657374u;
constexpr std::uint64_t kHeadTag = 0x68656164u;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.contains(key)) throw DataError("config: unknown key '" + key + "' in " + where);
  }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw DataError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw DataError("config: top level must be a JSON object");
  reject_unknown_keys(j,
                      {"dataset", "synthetic", "episode", "noise", "model", "meta",
                       "n_test_tasks", "n_repetitions", "master_seed", "variant"},
                      "top level");
  ExperimentConfig cfg;
  maybe(j, "dataset", cfg.dataset);
  if (j.contains("synthetic")) {
    cfg.use_synthetic = true;
    const json& s = j.at("synthetic");
    reject_unknown_keys(s,
                        {"classes", "nodes_per_class", "p_in", "p_out", "dim", "separation",
                         "feature_std", "splits", "seed"},
                        "synthetic");
    maybe(s, "classes", cfg.synthetic.classes);
    maybe(s, "nodes_per_class", cfg.synthetic.nodes_per_class);
    maybe(s, "p_in", cfg.synthetic.p_in);
    maybe(s, "p_out", cfg.synthetic.p_out);
    maybe(s, "dim", cfg.synthetic.dim);
    maybe(s, "separation", cfg.synthetic.separation);
    maybe(s, "feature_std", cfg.synthetic.feature_std);
    maybe(s, "seed", cfg.synthetic.seed);
    if (s.contains("splits")) {
      const auto splits = s.at("splits").get<std::vector<int>>();
      if (splits.size() != 3) throw DataError("config: synthetic.splits must be [train,val,test]");
      cfg.synthetic.train_classes = splits[0];
      cfg.synthetic.val_classes = splits[1];
      cfg.synthetic.test_classes = splits[2];
    }
  }
  if (cfg.dataset.empty() == !cfg.use_synthetic) {
    throw DataError("config: exactly one of 'dataset' and 'synthetic' is required");
  }
  if (j.contains("episode")) {
    const json& e = j.at("episode");
    reject_unknown_keys(e, {"n_way", "k_shot", "k_query", "m_tasks"}, "episode");
    maybe(e, "n_way", cfg.episode.n_way);
    maybe(e, "k_shot", cfg.episode.k_shot);
    maybe(e, "k_query", cfg.episode.k_query);
    maybe(e, "m_tasks", cfg.episode.m_tasks);
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    reject_unknown_keys(n, {"kind", "epsilon"}, "noise");
    std::string kind = to_string(cfg.noise_kind);
    maybe(n, "kind", kind);
    cfg.noise_kind = parse_noise_kind(kind);
    maybe(n, "epsilon", cfg.epsilon);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m, {"d_hidden", "hops", "leaky_slope"}, "model");
    maybe(m, "d_hidden", cfg.model.d_hidden);
    maybe(m, "hops", cfg.model.hops);
    maybe(m, "leaky_slope", cfg.model.leaky_slope);
  }
  if (j.contains("meta")) {
    const json& m = j.at("meta");
    reject_unknown_keys(m,
                        {"inner_lr", "meta_lr", "inner_steps", "tasks_per_batch", "max_episodes",
                         "mode", "patience", "val_interval", "val_tasks", "finetune_steps"},
                        "meta");
    maybe(m, "inner_lr", cfg.meta.inner_lr);
    maybe(m, "meta_lr", cfg.meta.meta_lr);
    maybe(m, "inner_steps", cfg.meta.inner_steps);
    maybe(m, "tasks_per_batch", cfg.meta.tasks_per_batch);
    maybe(m, "max_episodes", cfg.meta.max_episodes);
    std::string mode = to_string(cfg.meta.mode);
    maybe(m, "mode", mode);
    cfg.meta.mode = parse_meta_grad_mode(mode);
    maybe(m, "patience", cfg.meta.patience);
    maybe(m, "val_interval", cfg.meta.val_interval);
    maybe(m, "val_tasks", cfg.meta.val_tasks);
    maybe(m, "finetune_steps", cfg.meta.finetune_steps);
  }
  maybe(j, "n_test_tasks", cfg.n_test_tasks);
  maybe(j, "n_repetitions", cfg.n_repetitions);
  maybe(j, "master_seed", cfg.master_seed);
  std::string variant = to_string(cfg.variant);
  maybe(j, "variant", variant);
  cfg.variant = parse_variant(variant);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.use_synthetic) {
    j["synthetic"] = {{"classes", cfg.synthetic.classes},
                      {"nodes_per_class", cfg.synthetic.nodes_per_class},
                      {"p_in", cfg.synthetic.p_in},
                      {"p_out", cfg.synthetic.p_out},
                      {"dim", cfg.synthetic.dim},
                      {"separation", cfg.synthetic.separation},
                      {"feature_std", cfg.synthetic.feature_std},
                      {"splits", {cfg.synthetic.train_classes, cfg.synthetic.val_classes,
                                  cfg.synthetic.test_classes}},
                      {"seed", cfg.synthetic.seed}};
  } else {
    j["dataset"] = cfg.dataset;
  }
  j["episode"] = {{"n_way", cfg.episode.n_way},
                  {"k_shot", cfg.episode.k_shot},
                  {"k_query", cfg.episode.k_query},
                  {"m_tasks", cfg.episode.m_tasks}};
  j["noise"] = {{"kind", to_string(cfg.noise_kind)}, {"epsilon", cfg.epsilon}};
  j["model"] = {{"d_hidden", cfg.model.d_hidden},
                {"hops", cfg.model.hops},
                {"leaky_slope", cfg.model.leaky_slope}};
  j["meta"] = {{"inner_lr", cfg.meta.inner_lr},
               {"meta_lr", cfg.meta.meta_lr},
               {"inner_steps", cfg.meta.inner_steps},
               {"tasks_per_batch", cfg.meta.tasks_per_batch},
               {"max_episodes", cfg.meta.max_episodes},
               {"mode", to_string(cfg.meta.mode)},
               {"patience", cfg.meta.patience},
               {"val_interval", cfg.meta.val_interval},
               {"val_tasks", cfg.meta.val_tasks},
               {"finetune_steps", cfg.meta.finetune_steps}};
  j["n_test_tasks"] = cfg.n_test_tasks;
  j["n_repetitions"] = cfg.n_repetitions;
  j["master_seed"] = cfg.master_seed;
  j["variant"] = to_string(cfg.variant);
  return j;
}

ExperimentConfig effective_config(const ExperimentConfig& cfg) {
  ExperimentConfig eff = cfg;
  if (eff.variant == Variant::naive) eff.episode.m_tasks = 1;
  return eff;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  return format_hex64(fnv1a64(config_to_json(effective_config(cfg)).dump()));
}

std::uint64_t repetition_seed(std::uint64_t master_seed, int repetition) {
  return derive_seed(master_seed, kRepTag + static_cast<std::uint64_t>(repetition));
}

std::uint64_t test_task_seed(std::uint64_t run_seed, int task_index) {
  return derive_seed(run_seed, kTestTag + static_cast<std::uint64_t>(task_index));
}

std::uint64_t head_reinit_seed(std::uint64_t run_seed, int task_index) {
  return derive_seed(run_seed, kHeadTag + static_cast<std::uint64_t>(task_index));
}

RepetitionResult run_repetition(const ExperimentConfig& cfg, const AttributedGraph& graph,
                                const Tensor& prop, const ModelConfig& model,
                                std::uint64_t run_seed) {
  RepetitionResult rep;
  const NoisyLabeling labeling =
      corrupt_labels(graph, cfg.noise_kind, cfg.epsilon, derive_seed(run_seed, kNoiseTag));
  rep.train_result = train(graph, labeling, prop, model, cfg.meta, cfg.episode, cfg.variant,
                           run_seed);
  const ParamSet& best = rep.train_result.state.best_params;
  double acc_sum = 0.0;
  for (int t = 0; t < cfg.n_test_tasks; ++t) {
    const FewShotTask task =
        sample_meta_test_task(graph, cfg.episode.n_way, cfg.episode.k_shot, cfg.episode.k_query,
                              test_task_seed(run_seed, t));
    const FinetuneResult ft =
        finetune_and_predict(best, task, prop, cfg.meta, head_reinit_seed(run_seed, t));
    acc_sum += ft.accuracy;
  }
  rep.accuracy = acc_sum / static_cast<double>(cfg.n_test_tasks);
  return rep;
}

namespace {

ExperimentOutput run_impl(const ExperimentConfig& raw, bool parallel) {
  const ExperimentConfig cfg = effective_config(raw);
  if (cfg.n_repetitions < 1) throw DataError("run_experiment: n_repetitions must be positive");
  if (cfg.n_test_tasks < 1) throw DataError("run_experiment: n_test_tasks must be positive");
  const auto t0 = std::chrono::steady_clock::now();

  AttributedGraph graph =
      cfg.use_synthetic ? generate_sbm(cfg.synthetic) : load_bundle(cfg.dataset);
  ModelConfig model = cfg.model;
  model.d = graph.feature_dim();
  model.n_way = cfg.episode.n_way;
  const NormalizedAdjacency s = normalize(graph);
  const PropagatedFeatures prop = propagate(s, graph.features, model.hops);  // cached once

  std::vector<RepetitionResult> reps(cfg.n_repetitions);
  const std::int64_t r_count = cfg.n_repetitions;
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t r = 0; r < r_count; ++r) {
    try {
      reps[r] = run_repetition(cfg, graph, prop.matrix, model,
                               repetition_seed(cfg.master_seed, static_cast<int>(r)));
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  ExperimentOutput out;
  ResultRecord& rec = out.record;
  rec.fingerprint = config_fingerprint(cfg);
  rec.dataset_name = cfg.use_synthetic ? "synthetic" : cfg.dataset;
  rec.config = cfg;
  rec.master_seed = cfg.master_seed;
  for (int r = 0; r < cfg.n_repetitions; ++r) {
    rec.accuracies.push_back(reps[r].accuracy);
    rec.rep_seeds.push_back(repetition_seed(cfg.master_seed, r));
  }
  double mean = 0.0;
  for (double a : rec.accuracies) mean += a;
  mean /= static_cast<double>(rec.accuracies.size());
  double var = 0.0;
  for (double a : rec.accuracies) var += (a - mean) * (a - mean);
  var /= static_cast<double>(rec.accuracies.size());
  rec.mean_accuracy = mean;
  rec.std_accuracy = std::sqrt(var);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.rep0_params = reps[0].train_result.state.best_params;
  out.rep0_train = std::move(reps[0].train_result);
  return out;
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg) { return run_impl(cfg, true); }

ExperimentOutput run_experiment_serial(const ExperimentConfig& cfg) {
  return run_impl(cfg, false);
}

std::vector<ResultRecord> run_ablation(const ExperimentConfig& cfg) {
  std::vector<ResultRecord> records;
  for (Variant v : {Variant::full, Variant::mlp, Variant::mean, Variant::naive}) {
    ExperimentConfig c = cfg;
    c.variant = v;
    records.push_back(run_experiment(c).record);
  }
  return records;
}

std::vector<ResultRecord> run_noise_sweep(const ExperimentConfig& cfg,
                                          const std::vector<double>& epsilons) {
  if (epsilons.empty()) throw DataError("run_noise_sweep: need at least one epsilon");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    for (std::size_t j = i + 1; j < epsilons.size(); ++j) {
      if (epsilons[i] == epsilons[j]) {
        throw DataError("run_noise_sweep: duplicate epsilon " + format_double(epsilons[i]));
      }
    }
  }
  std::vector<ResultRecord> records;
  for (double eps : epsilons) {
    ExperimentConfig c = cfg;
    c.epsilon = eps;
    records.push_back(run_experiment(c).record);
  }
  return records;
}

void write_report(const std::vector<ResultRecord>& records,
                  const std::filesystem::path& outdir) {
  if (records.empty()) throw DataError("write_report: no records");
  std::filesystem::create_directories(outdir);
  std::filesystem::create_directories(outdir / "plotdata");

  std::string csv =
      "fingerprint,dataset,variant,N,K,M,noise_kind,epsilon,rep_count,mean_acc,std_acc,wall_s,"
      "master_seed\n";
  for (const ResultRecord& r : records) {
    csv += r.fingerprint + "," + r.dataset_name + "," + to_string(r.config.variant) + "," +
           std::to_string(r.config.episode.n_way) + "," + std::to_string(r.config.episode.k_shot) +
           "," + std::to_string(r.config.episode.m_tasks) + "," + to_string(r.config.noise_kind) +
           "," + format_double(r.config.epsilon) + "," + std::to_string(r.accuracies.size()) +
           "," + format_double(r.mean_accuracy) + "," + format_double(r.std_accuracy) + "," +
           format_double(r.wall_seconds) + "," + std::to_string(r.master_seed) + "\n";
  }
  {
    std::ofstream out(outdir / "results.csv", std::ios::binary);
    if (!out) throw DataError("write_report: cannot write results.csv");
    out << csv;
  }

  json root;
  root["records"] = json::array();
  for (const ResultRecord& r : records) {
    json jr;
    jr["fingerprint"] = r.fingerprint;
    jr["dataset"] = r.dataset_name;
    jr["config"] = config_to_json(r.config);
    json accs = json::array();
    for (double a : r.accuracies) accs.push_back(format_double(a));
    jr["accuracies"] = std::move(accs);
    jr["rep_seeds"] = r.rep_seeds;
    jr["mean_acc"] = format_double(r.mean_accuracy);
    jr["std_acc"] = format_double(r.std_accuracy);
    jr["wall_s"] = r.wall_seconds;
    jr["master_seed"] = r.master_seed;
    root["records"].push_back(std::move(jr));
  }
  {
    std::ofstream out(outdir / "results.json", std::ios::binary);
    if (!out) throw DataError("write_report: cannot write results.json");
    out << root.dump(2) << "\n";
  }

  // accuracy-vs-epsilon curves, one row per record, sorted for stable plots
  std::vector<const ResultRecord*> sorted;
  for (const ResultRecord& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const ResultRecord* a, const ResultRecord* b) {
    const std::string va = to_string(a->config.variant);
    const std::string vb = to_string(b->config.variant);
    if (va != vb) return va < vb;
    const std::string ka = to_string(a->config.noise_kind);
    const std::string kb = to_string(b->config.noise_kind);
    if (ka != kb) return ka < kb;
    return a->config.epsilon < b->config.epsilon;
  });
  std::string plot = "variant,noise_kind,epsilon,mean_acc,std_acc\n";
  for (const ResultRecord* r : sorted) {
    plot += to_string(r->config.variant) + "," + to_string(r->config.noise_kind) + "," +
            format_double(r->config.epsilon) + "," + format_double(r->mean_accuracy) + "," +
            format_double(r->std_accuracy) + "\n";
  }
  {
    std::ofstream out(outdir / "plotdata" / "accuracy_vs_epsilon.csv", std::ios::binary);
    if (!out) throw DataError("write_report: cannot write plotdata");
    out << plot;
  }
}

}  // namespace gml
