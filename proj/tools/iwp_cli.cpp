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

// Command-line front end. Talks to the library only through the C API.
//
//   iwprune run <config> [--seed N] [--out DIR] [--quiet]
//   iwprune compare <dirA> <dirB> [--out DIR] [--quiet]
//
// Exit codes: 0 ok, 2 configuration error, 3 diverged run, 1 anything else.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "iwp/iwp.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

int exit_code(iwp_status status) {
  switch (status) {
    case IWP_OK:
      return kExitOk;
    case IWP_ERR_CONFIG:
      return kExitConfig;
    case IWP_ERR_DIVERGED:
      return kExitDiverged;
    default:
      return kExitOther;
  }
}

int report(iwp_status status, const char* what) {
  std::fprintf(stderr, "iwprune: %s failed (%s): %s\n", what,
               iwp_status_string(status), iwp_last_error());
  return exit_code(status);
}

struct ExperimentHandle {
  iwp_experiment* ptr = nullptr;
  ~ExperimentHandle() { iwp_experiment_free(ptr); }
};

struct ComparisonHandle {
  iwp_comparison* ptr = nullptr;
  ~ComparisonHandle() { iwp_comparison_free(ptr); }
};

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed,
            const std::string& out, bool quiet) {
  ExperimentHandle exp;
  if (iwp_status s = iwp_experiment_load(config.c_str(), &exp.ptr); s != IWP_OK) {
    return report(s, "loading config");
  }
  if (seed) iwp_experiment_set_seed(exp.ptr, *seed);
  if (!out.empty()) {
    if (iwp_status s = iwp_experiment_set_output_dir(exp.ptr, out.c_str());
        s != IWP_OK) {
      return report(s, "setting output directory");
    }
  }
  if (iwp_status s = iwp_experiment_run(exp.ptr); s != IWP_OK) {
    return report(s, "run");
  }
  if (!quiet) {
    iwp_run_summary sum{};
    iwp_experiment_summary(exp.ptr, &sum);
    std::printf(
        "wrote %s: steps=%llu final_loss=%.6g final_accuracy=%.4g "
        "mean_compression_ratio=%.4g mean_density=%.4g bytes_total=%.0f\n",
        iwp_experiment_output_dir(exp.ptr),
        static_cast<unsigned long long>(sum.steps), sum.final_loss,
        sum.final_accuracy, sum.mean_compression_ratio, sum.mean_density,
        sum.bytes_total);
  }
  return kExitOk;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b,
                const std::string& out, bool quiet) {
  ComparisonHandle cmp;
  if (iwp_status s = iwp_compare_runs(dir_a.c_str(), dir_b.c_str(), &cmp.ptr);
      s != IWP_OK) {
    return report(s, "compare");
  }
  if (!out.empty()) {
    if (iwp_status s = iwp_comparison_write(cmp.ptr, out.c_str()); s != IWP_OK) {
      return report(s, "writing comparison");
    }
  }
  if (!quiet) std::fputs(iwp_comparison_csv(cmp.ptr), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance-weighted gradient pruning on a simulated ring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", iwp_version());

  std::string out;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config;
  std::optional<std::uint64_t> seed;
  run->add_option("config", config, "Experiment config (JSON)")->required();
  run->add_option("--seed", seed, "Override training.seed");
  run->add_option("--out", out, "Override output_dir");
  run->add_flag("--quiet", quiet, "Print nothing on success");

  auto* compare = app.add_subcommand("compare", "Compare two run directories");
  std::string dir_a, dir_b;
  compare->add_option("dir_a", dir_a, "First run directory")->required();
  compare->add_option("dir_b", dir_b, "Second run directory")->required();
  compare->add_option("--out", out, "Also write comparison.csv here");
  compare->add_flag("--quiet", quiet, "Do not print the comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (run->parsed()) return cmd_run(config, seed, out, quiet);
  return cmd_compare(dir_a, dir_b, out, quiet);
}
