// Copyright 2026 The iwprune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "iwp/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "iwp/error.hpp"

namespace iwp {
namespace {

namespace fs = std::filesystem;

std::string config_error(std::string_view text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << text;
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("iwp_exp_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

constexpr const char* kSmall = R"({
  "mode": "compressed",
  "task": {"kind": "mlp_classification", "n_samples": 256, "input_dim": 6,
           "hidden_dim": 8, "n_classes": 3, "noise": 0.7},
  "training": {"n_nodes": 4, "batch_size": 8, "epochs": 3, "learning_rate": 0.1},
  "threshold": {"alpha": 0.05, "warmup_epochs": 1}
})";

TEST(ParseConfig, EmptyObjectGivesDefaults) {
  const ExperimentConfig cfg = parse_config("{}");
  const ExperimentConfig def = default_config();
  EXPECT_EQ(cfg.task, def.task);
  EXPECT_EQ(cfg.training.n_nodes, def.training.n_nodes);
  EXPECT_EQ(cfg.threshold.alpha, def.threshold.alpha);
  EXPECT_EQ(cfg.mask.n_selected, 2u);
  EXPECT_EQ(cfg.mode, Mode::kCompressed);
}

TEST(ParseConfig, FieldLevelErrors) {
  EXPECT_NE(config_error(R"({"training": {"learning_rate": -0.1}})")
                .find("training.learning_rate"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"training": {"lr": 0.1}})").find("training.lr: unknown key"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"bogus": 1})").find("bogus"), std::string::npos);
  EXPECT_NE(config_error(R"({"task": {"n_samples": -5}})").find("task.n_samples"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"task": {"kind": "cnn"}})").find("task.kind"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"mode": "fast"})").find("mode"), std::string::npos);
  EXPECT_NE(config_error(R"({"threshold": {"alpha": [{"from": 0, "value": 0.1, "x": 1}]}})")
                .find("threshold.alpha[0].x"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"mask_agreement": {"n_selected": 9}})").find("n_selected"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"training": {"momentum": "high"}})").find("training.momentum"),
            std::string::npos);
  config_error("{not json");
}

TEST(ParseConfig, SchedulesAndNulls) {
  const ExperimentConfig cfg = parse_config(R"({
    "training": {"epochs": 6, "clip_norm": null},
    "threshold": {
      "alpha": [{"from": 0, "to": 2, "value": 0.01}, {"from": 3, "to": null, "value": 0.05}],
      "beta": 0.002, "thr_max": null, "scale": [{"from": 4, "value": 0.5}]
    }
  })");
  ASSERT_EQ(cfg.threshold.alpha.size(), 2u);
  EXPECT_EQ(cfg.threshold.alpha[0].last_epoch, 2u);
  EXPECT_EQ(*schedule_lookup(cfg.threshold.alpha, 5), 0.05);
  EXPECT_TRUE(std::isinf(cfg.threshold.thr_max));
  EXPECT_FALSE(cfg.training.clip_norm.has_value());
  EXPECT_EQ(*schedule_lookup(cfg.threshold.scale, 4), 0.5);
  EXPECT_EQ(schedule_lookup(cfg.threshold.scale, 3), nullptr);

  config_error(R"({"training": {"epochs": 6},
                   "threshold": {"alpha": [{"from": 0, "to": 2, "value": 0.01}]}})");
}

TEST(Manifest, IsAFixpoint) {
  const ExperimentConfig cfg = parse_config(R"({
    "training": {"epochs": 6, "clip_norm": 2.5, "seed": 99},
    "threshold": {"alpha": [{"from": 0, "to": 2, "value": 0.01}, {"from": 3, "value": 0.1}],
                  "thr_max": 0.5}
  })");
  const std::string m = manifest_json(cfg);
  EXPECT_EQ(manifest_json(parse_config(m)), m);
  EXPECT_EQ(manifest_json(parse_config(manifest_json(default_config()))),
            manifest_json(default_config()));
}

TEST(WriteRun, ThreeFilesAndDeterminism) {
  TempDir tmp;
  const ExperimentConfig cfg = parse_config(kSmall);
  write_run(tmp.path() / "a", cfg, run_config(cfg));
  write_run(tmp.path() / "b", cfg, run_config(cfg));
  for (const char* f : {kMetricsFile, kBandwidthFile, kManifestFile}) {
    ASSERT_TRUE(fs::exists(tmp.path() / "a" / f)) << f;
    EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f)) << f;
  }
  const std::string metrics = slurp(tmp.path() / "a" / kMetricsFile);
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "step,epoch,mode,loss,accuracy,mean_density,compression_ratio,"
            "bytes_total,staleness_p50,staleness_p90,staleness_max");
  EXPECT_EQ(slurp(tmp.path() / "a" / kBandwidthFile).rfind("step,node,phase,bytes\n", 0),
            0u);

  const ExperimentConfig again = load_config(tmp.path() / "a" / kManifestFile);
  write_run(tmp.path() / "c", again, run_config(again));
  for (const char* f : {kMetricsFile, kBandwidthFile, kManifestFile}) {
    EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "c" / f)) << f;
  }
}

TEST(Summarize, HarmonicCompressionRatioAndBytes) {
  std::vector<MetricsRow> rows(4);
  rows[0].step = 0;
  rows[0].compression_ratio = std::nan("");
  rows[0].loss = 3.0;
  const double crs[] = {2.0, 4.0, std::numeric_limits<double>::infinity()};
  for (int i = 1; i <= 3; ++i) {
    rows[i].step = i;
    rows[i].compression_ratio = crs[i - 1];
    rows[i].bytes_total = 100 * i;
    rows[i].mean_density = 0.1 * i;
    rows[i].loss = 1.0 / i;
  }
  const RunSummary s = summarize(rows);
  EXPECT_EQ(s.steps, 3u);
  EXPECT_DOUBLE_EQ(s.mean_compression_ratio, 3.0 / (0.5 + 0.25));
  EXPECT_DOUBLE_EQ(s.bytes_total, 600.0);
  EXPECT_DOUBLE_EQ(s.mean_density, 0.2);
  EXPECT_DOUBLE_EQ(s.final_loss, 1.0 / 3);
}

TEST(CompareRuns, SelfAndDenseVsCompressed) {
  TempDir tmp;
  ExperimentConfig cfg = parse_config(kSmall);
  cfg.threshold.alpha = constant_schedule(2.0);
  cfg.threshold.warmup_epochs = 0;
  write_run(tmp.path() / "c", cfg, run_config(cfg));
  cfg.mode = Mode::kDense;
  write_run(tmp.path() / "d", cfg, run_config(cfg));

  const Comparison self = compare_runs(tmp.path() / "c", tmp.path() / "c");
  EXPECT_EQ(self.final_loss_delta, 0.0);
  EXPECT_EQ(self.final_accuracy_delta, 0.0);
  EXPECT_EQ(self.bytes_ratio, 1.0);

  const Comparison dc = compare_runs(tmp.path() / "d", tmp.path() / "c");
  EXPECT_GT(dc.bytes_ratio, 1.0);
  EXPECT_EQ(dc.a.mean_compression_ratio, 1.0);

  std::ostringstream os;
  write_comparison_csv(os, self);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "final_loss_a,final_loss_b,final_loss_delta,final_accuracy_a,"
            "final_accuracy_b,final_accuracy_delta,mean_compression_ratio_a,"
            "mean_compression_ratio_b,bytes_total_a,bytes_total_b,bytes_ratio");
}

TEST(CompareRuns, MismatchedTasksAndMissingFiles) {
  TempDir tmp;
  ExperimentConfig cfg = parse_config(kSmall);
  write_run(tmp.path() / "a", cfg, run_config(cfg));
  cfg.task.noise = 0.9;
  write_run(tmp.path() / "b", cfg, run_config(cfg));
  try {
    compare_runs(tmp.path() / "a", tmp.path() / "b");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  try {
    compare_runs(tmp.path() / "a", tmp.path() / "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

}  // namespace
}  // namespace iwp
