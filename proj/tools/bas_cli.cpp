// Command-line front end: dataset generation, training, evaluation, the
// mask-morphology study, image-specific threshold search, and the loss
// ablation, all driven by one flat JSON config plus dotted-key overrides.
// Every command is deterministic given its seed and writes a resolved-config
// snapshot next to its outputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bas/checkpoint.hpp"
#include "bas/config.hpp"
#include "bas/evaluate.hpp"
#include "bas/explore.hpp"
#include "bas/metrics.hpp"
#include "bas/model.hpp"
#include "bas/svg.hpp"
#include "bas/synth_data.hpp"
#include "bas/threshold_search.hpp"
#include "bas/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::optional<std::string> config;
  std::optional<uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON config file");
  cmd->add_option("--seed", args.seed, "run seed (overrides the config)");
  cmd->add_option("--out", args.out, "output directory")->required();
  cmd->add_option("--set", args.overrides, "dotted-key override, e.g. train.epochs=5")
      ->take_all();
}

bas::RunConfig resolve(const CommonArgs& args) {
  return bas::load_run_config(args.config, args.overrides, args.seed);
}

void write_snapshot(const std::string& out_dir, const bas::RunConfig& cfg) {
  fs::create_directories(out_dir);
  std::ofstream os(out_dir + "/config_resolved.json");
  if (!os) throw std::runtime_error("cannot write config snapshot in " + out_dir);
  os << bas::run_config_json(cfg) << "\n";
}

std::string pick_split(const std::string& data_dir, const std::string& split) {
  return data_dir + "/" + split;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text << "\n";
}

void write_report_files(const std::string& out_dir, const bas::MetricReport& report) {
  write_text(out_dir + "/metric_report.json", report.to_json());
  bas::write_iou_curve_csv(out_dir + "/iou_threshold_curve.csv", report.iou_threshold_curve);
  bas::write_pr_curve_csv(out_dir + "/pr_curve.csv", report.pr_curve);
}

bas::MetricReport eval_checkpoint(const bas::RunConfig& cfg, const std::string& ckpt,
                                  const std::string& data_dir, const std::string& split) {
  bas::BasNet net = bas::init_net(cfg.model, cfg.train.seed);
  bas::load_checkpoint(ckpt, net);
  bas::Manifest data = bas::load_manifest(pick_split(data_dir, split));
  return bas::run_eval(net, data, cfg.eval);
}

int cmd_gen_data(const CommonArgs& args) {
  bas::RunConfig cfg = resolve(args);
  write_snapshot(args.out, cfg);
  bas::generate_dataset(cfg.dataset, args.out);
  std::cout << "dataset written to " << args.out << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir) {
  bas::RunConfig cfg = resolve(args);
  write_snapshot(args.out, cfg);
  bas::Manifest data = bas::load_manifest(pick_split(data_dir, "train"));
  bas::BasNet net = bas::init_net(cfg.model, cfg.train.seed);
  bas::TrainResult r = bas::train(net, data, cfg.train, args.out);
  std::cout << "trained " << r.steps << " steps; checkpoint at " << r.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt,
             const std::string& split) {
  bas::RunConfig cfg = resolve(args);
  write_snapshot(args.out, cfg);
  bas::MetricReport report = eval_checkpoint(cfg, ckpt, data_dir, split);
  write_report_files(args.out, report);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_explore(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt) {
  bas::RunConfig cfg = resolve(args);
  write_snapshot(args.out, cfg);
  if (cfg.explore.n_min > cfg.explore.n_max)
    throw std::invalid_argument("config: explore.n_min exceeds explore.n_max");
  bas::BasNet net = bas::init_net(cfg.model, cfg.train.seed);
  bas::load_checkpoint(ckpt, net);
  bas::Manifest data = bas::load_manifest(pick_split(data_dir, cfg.explore.split));

  std::vector<int> n_range;
  for (int n = cfg.explore.n_min; n <= cfg.explore.n_max; ++n) n_range.push_back(n);

  const int count = int(data.entries.size());
  std::vector<bas::SampleCurve> curves(static_cast<size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    bas::Sample s = bas::load_sample(data, size_t(i));
    curves[size_t(i)] =
        bas::curve_for_sample(net, s.image, s.masks[0], s.labels[0], i, n_range);
  }
  bas::AggregateCurves agg = bas::aggregate_curves(curves, cfg.explore.bins);

  bas::write_sample_curves_csv(args.out + "/curves.csv", curves);
  bas::write_aggregate_csv(args.out + "/aggregate.csv", agg);

  std::vector<double> xs;
  std::vector<double> e, a, b;
  for (const auto& bin : agg.bins) {
    if (bin.count == 0) continue;
    xs.push_back(bin.center);
    e.push_back(bin.entropy_mean);
    a.push_back(bin.activation_mean);
    b.push_back(bin.bkg_activation_mean);
  }
  bas::SvgChart ce("entropy vs mask area", "area ratio", "cross-entropy");
  ce.add_series("entropy", xs, e);
  ce.write(args.out + "/entropy.svg");
  bas::SvgChart ca("activation vs mask area", "area ratio", "normalized activation");
  ca.add_series("activation", xs, a);
  ca.write(args.out + "/activation.svg");
  bas::SvgChart cb("background activation vs mask area", "area ratio", "normalized activation");
  cb.add_series("bkg_activation", xs, b);
  cb.write(args.out + "/bkg_activation.svg");

  std::cout << "explore curves over " << agg.samples_used << " samples ("
            << agg.samples_skipped << " skipped) written to " << args.out << "\n";
  return 0;
}

int cmd_threshold_search(const CommonArgs& args, const std::string& data_dir,
                         const std::string& ckpt) {
  bas::RunConfig cfg = resolve(args);
  write_snapshot(args.out, cfg);
  if (cfg.search.grid < 1) throw std::invalid_argument("config: search.grid must be positive");
  bas::BasNet net = bas::init_net(cfg.model, cfg.train.seed);
  bas::load_checkpoint(ckpt, net);
  bas::Manifest data = bas::load_manifest(pick_split(data_dir, cfg.search.split));

  std::vector<double> grid;
  if (cfg.search.grid == 256) {
    grid = bas::threshold_grid_256();
  } else {
    for (int i = 0; i < cfg.search.grid; ++i)
      grid.push_back(cfg.search.grid == 1 ? 0.5 : double(i) / double(cfg.search.grid - 1));
  }
  bas::ThresholdSearchResult r =
      bas::threshold_search(net, data, grid, cfg.train.weights.epsilon);
  bas::write_threshold_rows_csv(args.out + "/thresholds.csv", r);

  ordered_json j;
  j["miou_global"] = r.miou_global;
  j["best_global_theta"] = r.best_global_theta;
  j["miou_image_specific"] = r.miou_image_specific;
  write_text(args.out + "/threshold_report.json", j.dump(2));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& data_dir) {
  bas::RunConfig cfg = resolve(args);
  write_snapshot(args.out, cfg);
  bas::Manifest train_data = bas::load_manifest(pick_split(data_dir, "train"));

  struct Arm {
    std::string name;
    double lambda;
    bool legacy;
  };
  const Arm arms[] = {{"baseline", 0.0, false},
                      {"bas", cfg.train.weights.lambda, false},
                      {"bas_legacy", cfg.train.weights.lambda, true}};

  ordered_json summary;
  double final_lbas_default = 0, final_lbas_legacy = 0;
  std::map<std::string, bas::MetricReport> reports;
  for (const Arm& arm : arms) {
    bas::RunConfig run = cfg;
    run.train.weights.lambda = arm.lambda;
    run.model.legacy_relu = arm.legacy;
    const std::string arm_dir = args.out + "/" + arm.name;
    fs::create_directories(arm_dir);

    bas::BasNet net = bas::init_net(run.model, run.train.seed);
    bas::TrainResult tr = bas::train(net, train_data, run.train, arm_dir);
    bas::Manifest eval_data = bas::load_manifest(pick_split(data_dir, "eval"));
    bas::MetricReport report = bas::run_eval(net, eval_data, run.eval);
    write_report_files(arm_dir, report);
    reports[arm.name] = report;

    ordered_json a;
    a["final_epoch_mean_l_bas"] = tr.final_epoch_mean.l_bas;
    a["final_epoch_mean_total"] = tr.final_epoch_mean.total;
    a["piou"] = report.piou ? ordered_json(*report.piou) : ordered_json(nullptr);
    a["gt_known"] = report.gt_known ? ordered_json(*report.gt_known) : ordered_json(nullptr);
    a["miou"] = report.miou ? ordered_json(*report.miou) : ordered_json(nullptr);
    summary[arm.name] = a;
    if (arm.name == "bas") final_lbas_default = tr.final_epoch_mean.l_bas;
    if (arm.name == "bas_legacy") final_lbas_legacy = tr.final_epoch_mean.l_bas;
  }

  auto gain = [&](auto get) {
    return get(reports["bas"]) && get(reports["baseline"])
               ? ordered_json(*get(reports["bas"]) - *get(reports["baseline"]))
               : ordered_json(nullptr);
  };
  summary["gains"] = {
      {"piou", gain([](const bas::MetricReport& r) { return r.piou; })},
      {"gt_known", gain([](const bas::MetricReport& r) { return r.gt_known; })},
      {"miou", gain([](const bas::MetricReport& r) { return r.miou; })},
  };
  summary["l_bas_final"] = {{"default", final_lbas_default}, {"legacy_relu", final_lbas_legacy}};
  write_text(args.out + "/ablate_report.json", summary.dump(2));
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"background activation suppression toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, explore_args, search_args, ablate_args;
  std::string train_data, eval_data, explore_data, search_data, ablate_data;
  std::string eval_ckpt, explore_ckpt, search_ckpt;
  std::string eval_split = "eval";
  double theta_box = 0;
  std::optional<int> k_flag;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, gen_args);

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train, train_args);
  train->add_option("--data", train_data, "dataset root (holds train/ and eval/)")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--theta-box", theta_box, "binarization threshold for box extraction")
      ->required();
  eval->add_option("--k", k_flag, "top-k map fusion");
  eval->add_option("--split", eval_split, "dataset split (default eval)");

  CLI::App* explore = app.add_subcommand("explore", "mask-morphology curves");
  add_common(explore, explore_args);
  explore->add_option("--data", explore_data, "dataset root")->required();
  explore->add_option("--ckpt", explore_ckpt, "checkpoint file")->required();

  CLI::App* search = app.add_subcommand("threshold-search", "image-specific threshold study");
  add_common(search, search_args);
  search->add_option("--data", search_data, "dataset root")->required();
  search->add_option("--ckpt", search_ckpt, "checkpoint file")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "suppression-loss and ReLU-placement ablation");
  add_common(ablate, ablate_args);
  ablate->add_option("--data", ablate_data, "dataset root")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train->parsed()) return cmd_train(train_args, train_data);
    if (eval->parsed()) {
      eval_args.overrides.push_back("eval.theta_box=" + std::to_string(theta_box));
      if (k_flag) eval_args.overrides.push_back("eval.k=" + std::to_string(*k_flag));
      return cmd_eval(eval_args, eval_data, eval_ckpt, eval_split);
    }
    if (explore->parsed()) return cmd_explore(explore_args, explore_data, explore_ckpt);
    if (search->parsed()) return cmd_threshold_search(search_args, search_data, search_ckpt);
    if (ablate->parsed()) return cmd_ablate(ablate_args, ablate_data);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
