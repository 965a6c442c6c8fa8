// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

// gohome command-line entry point: generate | train | predict | eval |
// ensemble | bench.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O or parse error,
// 4 numeric failure, 1 anything else.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gohome/bench.hpp"
#include "gohome/error.hpp"
#include "gohome/generator.hpp"
#include "gohome/heatmap_decoder.hpp"
#include "gohome/model.hpp"
#include "gohome/predictor.hpp"
#include "gohome/run_config.hpp"
#include "gohome/scenario_io.hpp"
#include "gohome/train.hpp"

namespace fs = std::filesystem;
using gohome::json;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gohome::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw gohome::IoError("short write on " + path.string());
}

fs::path data_dir(const json& cfg) { return cfg.at("data_dir").get<std::string>(); }

std::vector<gohome::Scene> load_split(const json& cfg, const std::string& split) {
  return gohome::io::read_split(data_dir(cfg), split);
}

void print_report(const std::string& title, const gohome::MetricReport& rep) {
  std::printf("%s (%zu scenes, threshold %.2f m)\n", title.c_str(), rep.scenes, rep.threshold);
  std::printf("  %4s %8s %10s %10s\n", "k", "MR", "minFDE", "minADE");
  for (std::size_t i = 0; i < rep.ks.size(); ++i)
    std::printf("  %4zu %8.4f %10.4f %10.4f\n", rep.ks[i], rep.miss_rate[i], rep.min_fde[i], rep.min_ade[i]);
}

/// Ground truths aligned with `preds` by scene id.
std::vector<std::vector<gohome::Vec2>> aligned_ground_truth(const std::vector<gohome::ScenePrediction>& preds,
                                                            const std::vector<gohome::Scene>& scenes) {
  std::map<std::string, const gohome::Scene*> by_id;
  for (const gohome::Scene& s : scenes) by_id[s.scene_id] = &s;
  std::vector<std::vector<gohome::Vec2>> gts;
  for (const gohome::ScenePrediction& p : preds) {
    const auto it = by_id.find(p.scene_id);
    if (it == by_id.end()) throw gohome::InputError("prediction for unknown scene '" + p.scene_id + "'");
    gts.push_back(it->second->gt_future);
  }
  return gts;
}

int cmd_generate(const json& cfg) {
  const gohome::gen::GeneratorConfig g = gohome::generator_config(cfg);
  const json& s = cfg.at("generate");
  const auto scenes = gohome::gen::generate(g);
  auto [train, val] = gohome::io::split(scenes, gohome::config_get<double>(s, "train_fraction", "generate"),
                                        gohome::config_get<std::uint64_t>(s, "split_seed", "generate"));
  gohome::io::write_dataset(data_dir(cfg), {{"train", &train}, {"val", &val}});
  std::printf("wrote %zu train and %zu val scenes to %s\n", train.size(), val.size(), data_dir(cfg).c_str());
  return 0;
}

int cmd_train(const json& cfg) {
  const json& s = cfg.at("train");
  const gohome::ModelConfig mc = gohome::model_config(cfg);
  const gohome::TrainOptions opt = gohome::train_options(cfg);
  const auto train_set = load_split(cfg, gohome::config_get<std::string>(s, "split", "train"));
  const std::string val_name = gohome::config_get<std::string>(s, "validation_split", "train");
  std::vector<gohome::Scene> val_set;
  if (!val_name.empty()) val_set = load_split(cfg, val_name);
  gohome::GohomeModel model(mc, cfg.at("model_seed").get<std::uint64_t>());
  std::printf("model: %zu parameters, %zu training scenes\n", model.parameter_count(), train_set.size());
  const fs::path ckpt = gohome::config_get<std::string>(s, "checkpoint", "train");
  const fs::path log_path = gohome::config_get<std::string>(s, "log", "train");
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  std::ofstream log(log_path);
  if (!log) throw gohome::IoError("cannot write " + log_path.string());
  gohome::train(model, train_set, val_set.empty() ? nullptr : &val_set, opt, [&](const gohome::EpochStats& st) {
    json rec = {{"epoch", st.epoch},   {"lr", st.lr},         {"loss", st.loss},
                {"focal", st.focal},   {"ranking", st.ranking}, {"trajectory", st.trajectory},
                {"scenes", st.scenes}, {"skipped", st.skipped}, {"clamped", st.clamped}};
    std::printf("epoch %2zu  lr %.2e  loss %.6f  focal %.6f  rank %.4f  traj %.4f", st.epoch, st.lr, st.loss, st.focal,
                st.ranking, st.trajectory);
    if (st.validation) {
      rec["validation"] = st.validation->to_json();
      std::printf("  val MR_1 %.3f MR_%zu %.3f minFDE_%zu %.3f", st.validation->mr(1), opt.predict.k,
                  st.validation->mr(opt.predict.k), opt.predict.k, st.validation->fde(opt.predict.k));
    }
    if (st.clamped) std::printf("  (%zu predictions clamped)", st.clamped);
    std::printf("  %.1fs\n", st.seconds);
    std::fflush(stdout);
    log << rec.dump() << "\n";
    log.flush();
    gohome::save_model(ckpt.string(), model, {{"epoch", st.epoch}});
  });
  std::printf("checkpoint written to %s\n", ckpt.c_str());
  return 0;
}

int cmd_predict(const json& cfg) {
  const json& s = cfg.at("predict");
  const auto model = gohome::load_model(gohome::config_get<std::string>(s, "checkpoint", "predict"));
  const gohome::PredictOptions opt = gohome::predict_options(cfg);
  const auto scenes = load_split(cfg, gohome::config_get<std::string>(s, "split", "predict"));
  const fs::path out_dir = gohome::config_get<std::string>(s, "out_dir", "predict");
  const bool heatmaps = gohome::config_get<bool>(s, "write_heatmaps", "predict");
  fs::create_directories(out_dir / "heatmaps");
  std::vector<gohome::ScenePrediction> preds;
  for (const gohome::Scene& scene : scenes) {
    const gohome::Prediction p = gohome::predict(scene, *model, opt);
    if (heatmaps) gohome::export_heatmap(out_dir / "heatmaps" / scene.scene_id, p.heatmap);
    preds.push_back(gohome::to_scene_prediction(scene, p));
  }
  gohome::write_predictions(out_dir / "predictions.jsonl", preds);
  std::printf("wrote %zu predictions to %s\n", preds.size(), (out_dir / "predictions.jsonl").c_str());
  return 0;
}

int cmd_eval(const json& cfg) {
  const json& s = cfg.at("eval");
  const auto scenes = load_split(cfg, gohome::config_get<std::string>(s, "split", "eval"));
  const std::string baseline = gohome::config_get<std::string>(s, "baseline", "eval");
  std::vector<gohome::ScenePrediction> preds;
  if (baseline == "constant_velocity") {
    for (const gohome::Scene& scene : scenes) preds.push_back(gohome::constant_velocity(scene));
  } else if (baseline.empty()) {
    preds = gohome::read_predictions(gohome::config_get<std::string>(s, "predictions", "eval"));
  } else {
    throw gohome::ConfigError("eval.baseline must be \"\" or \"constant_velocity\"");
  }
  const auto ks = gohome::config_get<std::vector<std::size_t>>(s, "ks", "eval");
  const auto rep = gohome::evaluate(preds, aligned_ground_truth(preds, scenes), ks,
                                    gohome::config_get<double>(s, "threshold", "eval"));
  print_report(baseline.empty() ? "metrics" : baseline, rep);
  write_text(gohome::config_get<std::string>(s, "out", "eval"), rep.to_json().dump(1) + "\n");
  return 0;
}

int cmd_ensemble(const json& cfg) {
  const json& s = cfg.at("ensemble");
  const auto inputs = gohome::config_get<std::vector<std::string>>(s, "inputs", "ensemble");
  auto weights = gohome::config_get<std::vector<double>>(s, "weights", "ensemble");
  if (inputs.empty()) throw gohome::ConfigError("ensemble.inputs lists no prediction directories");
  if (weights.empty()) weights.assign(inputs.size(), 1.0);
  const auto scenes = load_split(cfg, gohome::config_get<std::string>(s, "split", "ensemble"));
  const std::string ckpt = gohome::config_get<std::string>(s, "checkpoint", "ensemble");
  std::unique_ptr<gohome::GohomeModel> model;
  if (!ckpt.empty()) model = gohome::load_model(ckpt);
  gohome::PredictOptions opt;
  opt.k = gohome::config_get<std::size_t>(s, "k", "ensemble");
  opt.radius = gohome::config_get<double>(s, "radius", "ensemble");
  const fs::path out_dir = gohome::config_get<std::string>(s, "out_dir", "ensemble");
  fs::create_directories(out_dir / "heatmaps");
  std::vector<gohome::ScenePrediction> preds;
  std::vector<std::vector<gohome::Vec2>> gts;
  for (const gohome::Scene& scene : scenes) {
    std::vector<gohome::HeatmapGrid> maps;
    for (const std::string& dir : inputs) maps.push_back(gohome::import_heatmap(fs::path(dir) / "heatmaps" / scene.scene_id));
    gohome::HeatmapGrid avg = gohome::ensemble(maps, weights);
    gohome::export_heatmap(out_dir / "heatmaps" / scene.scene_id, avg);
    if (model) {
      preds.push_back(gohome::to_scene_prediction(scene, gohome::complete_prediction(scene, *model, std::move(avg), opt)));
    } else {
      const gohome::EndpointSet e = gohome::sample_endpoints(avg, opt.k, opt.radius);
      preds.push_back({scene.scene_id, e.points, {}, e.masses});
    }
    gts.push_back(scene.gt_future);
  }
  gohome::write_predictions(out_dir / "predictions.jsonl", preds);
  std::vector<std::size_t> ks{1};
  if (opt.k > 1) ks.push_back(opt.k);
  const auto rep = gohome::evaluate(preds, gts, ks, gohome::config_get<double>(s, "threshold", "ensemble"));
  print_report("ensemble", rep);
  write_text(out_dir / "metrics.json", rep.to_json().dump(1) + "\n");
  return 0;
}

int cmd_bench(const json& cfg) {
  const json& s = cfg.at("bench");
  const gohome::BenchConfig bench = gohome::bench_config(cfg);
  gohome::gen::GeneratorConfig g = gohome::generator_config(cfg);
  g.scene_count = gohome::config_get<std::size_t>(s, "scenes", "bench");
  g.seed = gohome::config_get<std::uint64_t>(s, "scene_seed", "bench");
  const auto scenes = gohome::gen::generate(g);
  const auto rows = gohome::run_bench(scenes, gohome::model_config(cfg), bench);
  const std::string csv = gohome::bench_csv(rows);
  write_text(gohome::config_get<std::string>(s, "csv", "bench"), csv);
  write_text(gohome::config_get<std::string>(s, "plot", "bench"), gohome::bench_plot_svg(csv));
  std::printf("%-10s %8s %6s %8s %14s %14s %9s\n", "sweep", "range", "res", "decoded", "decode_macs", "dense_macs",
              "wall_ms");
  for (const auto& r : rows)
    std::printf("%-10s %8.1f %6.3f %8.1f %14.0f %14.0f %9.2f\n", r.sweep.c_str(), r.output_range, r.resolution,
                r.mean_decoded, r.decode_macs, r.dense_macs, r.wall_ms);
  for (const auto& st : gohome::range_scaling(rows))
    std::printf("range %.0f -> %.0f m: decode x%.3f, dense x%.3f\n", st.from_range, st.to_range, st.decode_ratio,
                st.dense_ratio);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gohome: lane-graph heatmap trajectory prediction"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON run configuration");
  app.add_option("-s,--set", overrides, "override a dotted config key, e.g. train.total_epochs=2");
  app.add_flag_callback("--print-config", [] {
    std::cout << gohome::default_run_config().dump(2) << "\n";
    std::exit(0);
  }, "print the default configuration and exit");
  const std::map<std::string, int (*)(const json&)> commands = {
      {"generate", cmd_generate}, {"train", cmd_train},       {"predict", cmd_predict},
      {"eval", cmd_eval},         {"ensemble", cmd_ensemble}, {"bench", cmd_bench}};
  const std::map<std::string, std::string> help = {
      {"generate", "write a synthetic dataset"},
      {"train", "train a model and write checkpoints"},
      {"predict", "write heatmaps and predictions for a split"},
      {"eval", "compute metrics for predictions or a baseline"},
      {"ensemble", "average heatmaps of several prediction runs, then sample and evaluate"},
      {"bench", "sweep output range and resolution, write CSV and plot"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    json cfg = gohome::resolve_config(config_path.empty() ? json::object() : gohome::read_config_file(config_path));
    for (const std::string& o : overrides) gohome::apply_override(cfg, o);
    const std::string name = app.get_subcommands().front()->get_name();
    return commands.at(name)(cfg);
  } catch (const gohome::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const gohome::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const gohome::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitIo;
  } catch (const gohome::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
}
