// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohome/bench.hpp"
#include "gohome/run_config.hpp"

#ifndef GOHOME_CLI_PATH
#define GOHOME_CLI_PATH "gohome"
#endif

namespace gohome {
namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- run configuration

TEST(RunConfig, DefaultsResolveAndUnknownKeysFail) {
  const json cfg = resolve_config(json::object());
  EXPECT_EQ(cfg, default_run_config());
  EXPECT_NO_THROW(generator_config(cfg));
  EXPECT_NO_THROW(model_config(cfg));
  EXPECT_THROW(resolve_config({{"trian", {{"batch_size", 4}}}}), ConfigError);
  EXPECT_THROW(resolve_config({{"train", {{"batchsize", 4}}}}), ConfigError);
  EXPECT_THROW(resolve_config({{"train", 3}}), ConfigError);
}

TEST(RunConfig, OverridesParseJsonValues) {
  json cfg = default_run_config();
  apply_override(cfg, "train.total_epochs=2");
  apply_override(cfg, "predict.radius=2.6");
  apply_override(cfg, "data_dir=/tmp/x");
  apply_override(cfg, "train.lr_halving_epochs=[1]");
  EXPECT_EQ(train_options(cfg).schedule.total_epochs, 2u);
  EXPECT_DOUBLE_EQ(predict_options(cfg).radius, 2.6);
  EXPECT_EQ(cfg["data_dir"], "/tmp/x");
  EXPECT_EQ(train_options(cfg).schedule.lr_halving_epochs, (std::vector<std::size_t>{1}));
  EXPECT_THROW(apply_override(cfg, "train"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "=3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "train.nope=3"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "model=3"), ConfigError);
}

TEST(RunConfig, BadValuesAreConfigErrors) {
  json cfg = default_run_config();
  cfg["predict"]["k"] = 0;
  EXPECT_THROW(predict_options(cfg), ConfigError);
  cfg = default_run_config();
  cfg["generate"]["speed_min"] = "slow";
  EXPECT_THROW(generator_config(cfg), ConfigError);
  cfg = default_run_config();
  cfg["model"]["channels"] = 0;
  EXPECT_THROW(model_config(cfg), ConfigError);
}

// ---------------------------------------------------------------- bench output

TEST(Bench, CsvRoundTripsAndPlotDependsOnlyOnCsv) {
  std::vector<BenchRow> rows;
  for (double r : {96.0, 192.0, 384.0}) rows.push_back({"range", r, 0.5, 20, 3, 120.0, 20.0, 1000.0 * r, 9000.0 * r * r, 1.5});
  for (double res : {1.0, 0.5}) rows.push_back({"resolution", 192.0, res, 20, 3, 120.0, 20.0, 5e5 / res, 3e7 / (res * res), 2.0});
  const std::string csv = bench_csv(rows);
  const auto back = parse_bench_csv(csv);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].sweep, rows[i].sweep);
    EXPECT_DOUBLE_EQ(back[i].output_range, rows[i].output_range);
    EXPECT_DOUBLE_EQ(back[i].decode_macs, rows[i].decode_macs);
    EXPECT_DOUBLE_EQ(back[i].dense_macs, rows[i].dense_macs);
  }
  EXPECT_EQ(bench_csv(back), csv);
  const std::string svg = bench_plot_svg(csv);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(bench_plot_svg(bench_csv(back)), svg);
  const auto steps = range_scaling(rows);
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_DOUBLE_EQ(steps[0].decode_ratio, 2.0);
  EXPECT_DOUBLE_EQ(steps[0].dense_ratio, 4.0);
  EXPECT_THROW(parse_bench_csv("not,a,bench\n1,2,3\n"), ParseError);
}

// ---------------------------------------------------------------- binary end to end

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(GOHOME_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "gohome_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    json cfg = {
        {"data_dir", (dir_ / "data").string()},
        {"generate", {{"seed", 3}, {"scene_count", 50}}},
        {"model",
         {{"channels", 8}, {"output_range", 48.0}, {"resolution", 1.0}, {"input_range", 0.0}, {"traj_hidden", 8}}},
        {"train",
         {{"batch_size", 8},
          {"total_epochs", 2},
          {"lr_halving_epochs", json::array()},
          {"checkpoint", (dir_ / "model.ckpt").string()},
          {"log", (dir_ / "train_log.jsonl").string()}}},
        {"predict", {{"checkpoint", (dir_ / "model.ckpt").string()}, {"out_dir", (dir_ / "pred").string()}}},
        {"eval", {{"predictions", (dir_ / "pred" / "predictions.jsonl").string()}, {"out", (dir_ / "metrics.json").string()}}},
        {"bench",
         {{"scenes", 2},
          {"output_ranges", {24.0, 48.0}},
          {"pixels_per_meter", {1.0, 2.0}},
          {"base_range", 48.0},
          {"base_resolution", 1.0},
          {"input_range", 0.0},
          {"csv", (dir_ / "bench.csv").string()},
          {"plot", (dir_ / "bench.svg").string()}}}};
    std::ofstream(dir_ / "run.json") << cfg.dump(1);
    config_ = "-c " + (dir_ / "run.json").string();
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  std::string config_;
};

TEST_F(CliRun, GenerateTrainPredictEval) {
  RunResult r = run(config_ + " generate");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "data" / "manifest.json"));

  r = run(config_ + " train");
  ASSERT_EQ(r.code, 0) << r.output;
  std::vector<json> log;
  std::ifstream in(dir_ / "train_log.jsonl");
  for (std::string line; std::getline(in, line);) log.push_back(json::parse(line));
  ASSERT_EQ(log.size(), 2u);
  EXPECT_LT(log[1]["loss"].get<double>(), log[0]["loss"].get<double>());
  EXPECT_TRUE(log[1].contains("validation"));
  EXPECT_TRUE(fs::exists(dir_ / "model.ckpt"));

  r = run(config_ + " predict");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "pred" / "predictions.jsonl"));

  r = run(config_ + " eval");
  ASSERT_EQ(r.code, 0) << r.output;
  const json m = json::parse(slurp(dir_ / "metrics.json"));
  EXPECT_EQ(m.at("scenes").get<std::size_t>(), 10u);
  EXPECT_LE(m.at("MR_6").get<double>(), m.at("MR_1").get<double>());

  r = run(config_ + " -s eval.baseline=\\\"constant_velocity\\\" -s eval.ks=[1] eval");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("constant_velocity"), std::string::npos);

  r = run(config_ + " -s ensemble.inputs=[\\\"" + (dir_ / "pred").string() + "\\\",\\\"" + (dir_ / "pred").string() +
          "\\\"] -s ensemble.out_dir=\\\"" + (dir_ / "ens").string() + "\\\" ensemble");
  ASSERT_EQ(r.code, 0) << r.output;
  const json e = json::parse(slurp(dir_ / "ens" / "metrics.json"));
  EXPECT_LE(e.at("MR_6").get<double>(), e.at("MR_1").get<double>());
}

TEST_F(CliRun, BenchWritesCsvAndPlot) {
  const RunResult r = run(config_ + " bench");
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(dir_ / "bench.csv");
  EXPECT_EQ(parse_bench_csv(csv).size(), 4u);
  EXPECT_EQ(slurp(dir_ / "bench.svg"), bench_plot_svg(csv));
}

TEST_F(CliRun, ExitCodes) {
  EXPECT_EQ(run(config_ + " -s train.nope=1 train").code, 2);
  EXPECT_EQ(run("-c " + (dir_ / "missing.json").string() + " train").code, 3);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run(config_ + " eval").code, 3);  // no dataset yet
  ASSERT_EQ(run(config_ + " generate").code, 0);
  const fs::path scene = *fs::directory_iterator(dir_ / "data" / "val");
  std::ofstream(scene, std::ios::trunc) << "{ broken";
  EXPECT_EQ(run(config_ + " -s eval.baseline=\\\"constant_velocity\\\" eval").code, 3);
  EXPECT_EQ(run(config_ + " -s train.initial_lr=1e300 -s train.validation_split=\\\"\\\" train").code, 4);
  const RunResult printed = run("--print-config");
  EXPECT_EQ(printed.code, 0);
  EXPECT_EQ(json::parse(printed.output), default_run_config());
}

}  // namespace
}  // namespace gohome
