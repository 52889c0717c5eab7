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

#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "iwp/importance.hpp"
#include "iwp/ring_sim.hpp"
#include "iwp/tasks.hpp"
#include "iwp/trainer.hpp"

namespace iwp {

struct ExperimentConfig {
  TaskSpec task;
  TrainingConfig training;
  ThresholdPolicy threshold;
  MaskAgreementConfig mask;
  Mode mode = Mode::kCompressed;
  std::string output_dir = "runs/default";

  /// Cross-field checks; throws kConfig naming the field.
  void validate() const;
};

ExperimentConfig default_config();

/// Parses a JSON config; missing keys take defaults, unknown keys and bad
/// values throw kConfig with the dotted field path.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config, itself a valid config file.
std::string manifest_json(const ExperimentConfig& cfg);

/// Builds the task and runs the configured mode.
ExperimentResult run_config(const ExperimentConfig& cfg);

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kBandwidthFile = "bandwidth.csv";
inline constexpr const char* kManifestFile = "manifest.json";

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// Writes metrics.csv, bandwidth.csv and manifest.json into `dir`.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& cfg,
               const ExperimentResult& result);

struct RunSummary {
  std::size_t steps = 0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  double mean_compression_ratio = 0.0;  // harmonic, over steps >= 1
  double mean_density = 0.0;
  double bytes_total = 0.0;
};

RunSummary summarize(const std::vector<MetricsRow>& rows);

/// Reads metrics.csv back as a summary.
RunSummary summarize_metrics_csv(const std::filesystem::path& metrics_csv);

struct Comparison {
  RunSummary a;
  RunSummary b;
  double final_loss_delta = 0.0;      // b - a
  double final_accuracy_delta = 0.0;  // b - a
  double bytes_ratio = 0.0;           // a / b
};

/// Compares two run directories. Throws kConfig if their task specs differ
/// or either directory lacks a manifest or metrics.
Comparison compare_runs(const std::filesystem::path& dir_a,
                        const std::filesystem::path& dir_b);

void write_comparison_csv(std::ostream& out, const Comparison& cmp);

}  // namespace iwp
