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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iwp/importance.hpp"
#include "iwp/ring_sim.hpp"
#include "iwp/sparse_codec.hpp"
#include "iwp/tasks.hpp"

namespace iwp {

struct TrainingConfig {
  double momentum = 0.9;
  double learning_rate = 0.1;
  /// Step decay: lr(epoch) = learning_rate * factor^(epoch / every).
  double lr_decay_factor = 1.0;
  std::size_t lr_decay_every = 0;  // 0 disables decay
  std::size_t batch_size = 16;
  std::size_t n_nodes = 4;
  std::optional<double> clip_norm;  // per-node L2 clip of the local gradient
  std::uint64_t seed = 1;
  std::size_t epochs = 5;
  double importance_eps = kDefaultImportanceEps;
  /// Per-node top-k density used by the ring contrast mode.
  double dgc_density = 0.01;
  /// Zero the velocity of sent entries along with their residual.
  bool momentum_masking = true;
  WireFormat wire;

  double lr_at(std::size_t epoch) const;
  /// Throws kConfig naming the offending field.
  void validate() const;
};

/// One worker. `momentum` is the velocity v and `accum` the residual u of the
/// compressed pipeline; the dense baseline keeps its global momentum g_t in
/// `momentum` and leaves `accum` at zero.
struct NodeState {
  std::vector<double> weights;
  std::vector<double> momentum;
  std::vector<double> accum;
  std::vector<std::uint64_t> staleness;

  static NodeState fresh(std::vector<double> weights);
};

std::vector<NodeState> replicate(const std::vector<double>& weights,
                                 std::size_t n_nodes);

std::vector<double> clip_gradient(std::span<const double> g, double clip_norm);

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double mean_density = 0.0;
  std::vector<double> layer_density;
  std::vector<double> thresholds;  // node 0's per-layer thresholds
  double compression_ratio = 1.0;
  std::size_t nnz = 0;
  LinkStats stats;
  std::vector<std::size_t> selected_nodes;
};

/// Importance-weighted pruning step over all nodes. Per node: clip the local
/// gradient, v <- m v + g, u <- u + v, score |u / w|, per-layer thresholds,
/// local mask. Then the shared mask from the agreement round, split u by it,
/// zero the sent entries of u and v, ring-sum the sent entries and apply
/// w <- w - lr * sum. Staleness is incremented and reset where sent.
/// Throws kProtocol if replicas end up with different weights.
StepMetrics compressed_step(std::span<NodeState> nodes,
                            const GradientSource& source,
                            const LayerLayout& layout,
                            const ThresholdPolicy& policy,
                            const MaskAgreementConfig& mask_cfg,
                            const TrainingConfig& cfg, std::size_t step,
                            std::size_t epoch);

/// Dense momentum SGD: g_t = m g_{t-1} + ring-sum of local gradients,
/// w <- w - lr g_t.
StepMetrics baseline_dense_step(std::span<NodeState> nodes,
                                const GradientSource& source,
                                const LayerLayout& layout,
                                const TrainingConfig& cfg, std::size_t step,
                                std::size_t epoch);

/// Top-k (by |u|) per node without agreement; the union ring reduce shows how
/// independent selections densify.
StepMetrics dgc_contrast_step(std::span<NodeState> nodes,
                              const GradientSource& source,
                              const LayerLayout& layout,
                              const TrainingConfig& cfg, std::size_t step,
                              std::size_t epoch);

/// Weight change after T dense momentum steps starting from zero momentum:
/// -lr * sum_j (sum_{tau=0}^{T-1-j} m^tau) * grad_history[j].
std::vector<double> closed_form_weight_change(
    std::span<const std::vector<double>> grad_history, double momentum,
    double learning_rate);

enum class Mode { kDense, kCompressed, kDgcContrast };

const char* to_string(Mode mode);

struct MetricsRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  Mode mode = Mode::kDense;
  double loss = 0.0;
  double accuracy = 0.0;
  double mean_density = 0.0;
  std::vector<double> layer_density;
  double compression_ratio = 0.0;
  std::size_t bytes_total = 0;
  std::uint64_t staleness_p50 = 0;
  std::uint64_t staleness_p90 = 0;
  std::uint64_t staleness_max = 0;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;  // rows[0] evaluates the initial weights
  LinkStats stats;
  std::vector<double> final_weights;
};

/// Runs cfg.epochs epochs. Throws kDivergence on a non-finite loss.
ExperimentResult run_experiment(const ToyTask& task, const TrainingConfig& cfg,
                                const ThresholdPolicy& policy,
                                const MaskAgreementConfig& mask_cfg, Mode mode);

/// Nearest-rank percentile of staleness counters, q in (0, 1].
std::uint64_t staleness_percentile(std::span<const std::uint64_t> staleness,
                                   double q);

}  // namespace iwp
