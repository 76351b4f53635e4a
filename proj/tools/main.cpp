// Command-line front end.
//
// Subcommands:
//   synth         generate a synthetic benchmark bundle
//   inject-noise  corrupt a bundle's train/val labels and dump the weak labels
//   train         train one run on a bundle, save params + training log
//   eval          meta-test a saved checkpoint on a bundle's test split
//   run           full protocol (noise -> train -> eval -> report)
//   ablate        run all four variants and report
//   sweep         run the config across noise levels and report
//
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric divergence.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gml/dataset.hpp"
#include "gml/experiment.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gml::DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw gml::DataError(path + ": " + e.what());
  }
  return j;
}

/// Config for subcommands that take --data: the bundle path overrides
/// whatever dataset the config file names.
gml::ExperimentConfig load_config_with_data(const std::string& config_path,
                                            const std::string& data_dir) {
  json j = config_path.empty() ? json::object() : read_json_file(config_path);
  j.erase("synthetic");
  j["dataset"] = data_dir;
  return gml::config_from_json(j);
}

void write_train_log(const gml::TrainResult& tr, const std::string& path) {
  std::string csv = "episode,train_loss,val_acc,val_truth_acc\n";
  for (const gml::TrainCheck& c : tr.log) {
    csv += std::to_string(c.episode) + "," + gml::format_double(c.train_loss) + "," +
           gml::format_double(c.val_accuracy) + "," + gml::format_double(c.val_truth_accuracy) +
           "\n";
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gml::DataError("cannot write " + path);
  out << csv;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"few-shot node classification on noisy-labeled graphs"};
  app.require_subcommand(1);

  // --- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark bundle");
  std::string synth_out;
  gml::SbmParams sbm;
  std::vector<int> split_counts = {6, 2, 2};
  synth->add_option("--out", synth_out, "output bundle directory")->required();
  synth->add_option("--classes", sbm.classes, "number of classes");
  synth->add_option("--nodes-per-class", sbm.nodes_per_class, "nodes per class");
  synth->add_option("--p-in", sbm.p_in, "within-class edge probability");
  synth->add_option("--p-out", sbm.p_out, "cross-class edge probability");
  synth->add_option("--dim", sbm.dim, "feature dimension");
  synth->add_option("--separation", sbm.separation, "distance between class means");
  synth->add_option("--std", sbm.feature_std, "per-coordinate feature std");
  synth->add_option("--splits", split_counts, "train,val,test class counts")->delimiter(',');
  synth->add_option("--seed", sbm.seed, "generator seed");
  synth->callback([&] {
    if (split_counts.size() != 3) throw CLI::ValidationError("--splits needs three counts");
    sbm.train_classes = split_counts[0];
    sbm.val_classes = split_counts[1];
    sbm.test_classes = split_counts[2];
    const gml::AttributedGraph g = gml::generate_sbm(sbm);
    gml::write_bundle(g, synth_out);
    std::cout << "wrote " << synth_out << ": " << g.num_nodes << " nodes, "
              << g.col_idx.size() / 2 << " edges, d=" << g.feature_dim() << "\n";
  });

  // --- inject-noise ------------------------------------------------------
  auto* inject = app.add_subcommand("inject-noise", "corrupt train/val labels of a bundle");
  std::string inj_data, inj_kind = "symmetric", inj_out;
  double inj_eps = 0.3;
  std::uint64_t inj_seed = 1;
  inject->add_option("--data", inj_data, "bundle directory")->required();
  inject->add_option("--kind", inj_kind, "symmetric|asymmetric");
  inject->add_option("--epsilon", inj_eps, "noise level in [0,1]");
  inject->add_option("--seed", inj_seed, "noise seed");
  inject->add_option("--out", inj_out, "output CSV (node_id,class_id,flipped)")->required();
  inject->callback([&] {
    const gml::AttributedGraph g = gml::load_bundle(inj_data);
    const gml::NoisyLabeling noisy =
        gml::corrupt_labels(g, gml::parse_noise_kind(inj_kind), inj_eps, inj_seed);
    gml::write_noisy_labels(noisy, inj_out);
    std::size_t flips = 0;
    for (auto f : noisy.flipped) flips += f;
    std::cout << "wrote " << inj_out << ": " << flips << "/" << g.num_nodes
              << " labels flipped\n";
  });

  // --- train --------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train one run on a bundle");
  std::string tr_data, tr_config, tr_out = "params.json", tr_log;
  std::uint64_t tr_seed = 0;
  bool tr_seed_set = false;
  train_cmd->add_option("--data", tr_data, "bundle directory")->required();
  train_cmd->add_option("--config", tr_config, "experiment config JSON");
  train_cmd->add_option("--seed", tr_seed, "run seed (default: config master_seed)")
      ->each([&](const std::string&) { tr_seed_set = true; });
  train_cmd->add_option("--out", tr_out, "output checkpoint path");
  train_cmd->add_option("--log", tr_log, "training log CSV path");
  train_cmd->callback([&] {
    gml::ExperimentConfig cfg = load_config_with_data(tr_config, tr_data);
    cfg = gml::effective_config(cfg);
    const std::uint64_t seed = tr_seed_set ? tr_seed : cfg.master_seed;
    const gml::AttributedGraph graph = gml::load_bundle(cfg.dataset);
    gml::ModelConfig model = cfg.model;
    model.d = graph.feature_dim();
    model.n_way = cfg.episode.n_way;
    const gml::PropagatedFeatures prop =
        gml::propagate(gml::normalize(graph), graph.features, model.hops);
    const gml::RepetitionResult rep =
        gml::run_repetition(cfg, graph, prop.matrix, model, seed);
    gml::save_params(rep.train_result.state.best_params, tr_out);
    if (!tr_log.empty()) write_train_log(rep.train_result, tr_log);
    std::cout << "trained " << rep.train_result.state.episodes_done << " episodes, best val acc "
              << gml::format_double(rep.train_result.state.best_val_accuracy)
              << ", meta-test acc " << gml::format_double(rep.accuracy) << "\n";
  });

  // --- eval ---------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "meta-test a checkpoint on the test split");
  std::string ev_data, ev_params;
  int ev_nway = 2, ev_kshot = 1, ev_query = 5, ev_tasks = 100, ev_hops = 2;
  int ev_finetune = 10;
  double ev_inner_lr = 0.1;
  std::uint64_t ev_seed = 1;
  eval_cmd->add_option("--data", ev_data, "bundle directory")->required();
  eval_cmd->add_option("--params", ev_params, "checkpoint path")->required();
  eval_cmd->add_option("--n-way", ev_nway, "classes per task");
  eval_cmd->add_option("--k-shot", ev_kshot, "support shots per class");
  eval_cmd->add_option("--query", ev_query, "query nodes per class");
  eval_cmd->add_option("--tasks", ev_tasks, "number of meta-test tasks");
  eval_cmd->add_option("--hops", ev_hops, "propagation hops (must match training)");
  eval_cmd->add_option("--finetune-steps", ev_finetune, "adaptation steps per task");
  eval_cmd->add_option("--inner-lr", ev_inner_lr, "adaptation step size");
  eval_cmd->add_option("--seed", ev_seed, "evaluation seed");
  eval_cmd->callback([&] {
    const gml::AttributedGraph graph = gml::load_bundle(ev_data);
    const gml::ParamSet params = gml::load_params(ev_params);
    if (params.d != graph.feature_dim()) {
      throw gml::DataError("checkpoint feature dimension does not match the bundle");
    }
    const gml::PropagatedFeatures prop =
        gml::propagate(gml::normalize(graph), graph.features, ev_hops);
    gml::MetaConfig meta;
    meta.inner_lr = ev_inner_lr;
    meta.finetune_steps = ev_finetune;
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < ev_tasks; ++t) {
      const gml::FewShotTask task = gml::sample_meta_test_task(
          graph, ev_nway, ev_kshot, ev_query, gml::test_task_seed(ev_seed, t));
      const double acc =
          gml::finetune_and_predict(params, task, prop.matrix, meta,
                                    gml::head_reinit_seed(ev_seed, t))
              .accuracy;
      sum += acc;
      sumsq += acc * acc;
    }
    const double mean = sum / ev_tasks;
    const double var = sumsq / ev_tasks - mean * mean;
    std::printf("accuracy %.4f +- %.4f over %d tasks\n", mean,
                std::sqrt(var > 0 ? var : 0.0), ev_tasks);
  });

  // --- run / ablate / sweep ----------------------------------------------
  std::string run_config, run_out;
  auto* run_cmd = app.add_subcommand("run", "full protocol: noise -> train -> eval -> report");
  run_cmd->add_option("--config", run_config, "experiment config JSON")->required();
  run_cmd->add_option("--out", run_out, "output directory")->required();
  run_cmd->callback([&] {
    const gml::ExperimentConfig cfg = gml::config_from_json(read_json_file(run_config));
    const gml::ExperimentOutput out = gml::run_experiment(cfg);
    gml::write_report({out.record}, run_out);
    gml::save_params(out.rep0_params, std::filesystem::path(run_out) / "params.json");
    write_train_log(out.rep0_train, (std::filesystem::path(run_out) / "train_log.csv").string());
    std::cout << "mean acc " << gml::format_double(out.record.mean_accuracy) << " +- "
              << gml::format_double(out.record.std_accuracy) << " over "
              << out.record.accuracies.size() << " repetitions -> " << run_out << "\n";
  });

  std::string abl_config, abl_out;
  auto* abl_cmd = app.add_subcommand("ablate", "run all four variants");
  abl_cmd->add_option("--config", abl_config, "experiment config JSON")->required();
  abl_cmd->add_option("--out", abl_out, "output directory")->required();
  abl_cmd->callback([&] {
    const gml::ExperimentConfig cfg = gml::config_from_json(read_json_file(abl_config));
    const std::vector<gml::ResultRecord> records = gml::run_ablation(cfg);
    gml::write_report(records, abl_out);
    for (const gml::ResultRecord& r : records) {
      std::cout << gml::to_string(r.config.variant) << ": "
                << gml::format_double(r.mean_accuracy) << " +- "
                << gml::format_double(r.std_accuracy) << "\n";
    }
  });

  std::string sw_config, sw_out;
  std::vector<double> sw_eps;
  auto* sw_cmd = app.add_subcommand("sweep", "run across noise levels");
  sw_cmd->add_option("--config", sw_config, "experiment config JSON")->required();
  sw_cmd->add_option("--epsilons", sw_eps, "noise levels, comma separated")
      ->delimiter(',')
      ->required();
  sw_cmd->add_option("--out", sw_out, "output directory")->required();
  sw_cmd->callback([&] {
    const gml::ExperimentConfig cfg = gml::config_from_json(read_json_file(sw_config));
    const std::vector<gml::ResultRecord> records = gml::run_noise_sweep(cfg, sw_eps);
    gml::write_report(records, sw_out);
    for (const gml::ResultRecord& r : records) {
      std::cout << "epsilon " << gml::format_double(r.config.epsilon) << ": "
                << gml::format_double(r.mean_accuracy) << " +- "
                << gml::format_double(r.std_accuracy) << "\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help is 0; any usage problem is 1
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const gml::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const gml::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
