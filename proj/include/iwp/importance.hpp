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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "iwp/sparse_codec.hpp"

namespace iwp {

struct Layer {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Partition of a flat parameter vector into contiguous, non-empty layers.
class LayerLayout {
 public:
  LayerLayout() = default;
  /// Throws kStructural unless layers are contiguous from 0 and non-empty.
  explicit LayerLayout(std::vector<Layer> layers);

  static LayerLayout from_lengths(
      const std::vector<std::pair<std::string, std::size_t>>& lengths);
  /// One layer named "all" spanning `total` parameters.
  static LayerLayout single(std::size_t total);

  std::size_t size() const { return layers_.size(); }
  std::size_t total() const { return total_; }
  const Layer& operator[](std::size_t i) const { return layers_[i]; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Index of the layer containing parameter `param`.
  std::size_t layer_of(std::size_t param) const;

  friend bool operator==(const LayerLayout&, const LayerLayout&) = default;

 private:
  std::vector<Layer> layers_;
  std::size_t total_ = 0;
};

inline constexpr double kDefaultImportanceEps = 1e-8;
inline constexpr double kStatEps = 1e-12;

/// Per-parameter |accumulated gradient / weight|; all entries finite, >= 0.
class ImportanceVector {
 public:
  ImportanceVector() = default;
  /// Throws kInput if any score is negative or non-finite.
  explicit ImportanceVector(std::vector<double> scores);

  std::size_t size() const { return scores_.size(); }
  double operator[](std::size_t i) const { return scores_[i]; }
  std::span<const double> scores() const { return scores_; }

 private:
  std::vector<double> scores_;
};

/// score_i = |g_i| / max(|w_i|, eps).
ImportanceVector compute_importance(std::span<const double> accumulated_grad,
                                    std::span<const double> weights,
                                    double eps = kDefaultImportanceEps);

struct LayerStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double ratio = 0.0;     // variance / max(mean, kStatEps)
};

LayerStats layer_stats(std::span<const double> scores);
LayerStats layer_stats(const ImportanceVector& imp, const LayerLayout& layout,
                       std::size_t layer);

/// Piecewise-constant value over inclusive epoch ranges.
struct EpochValue {
  std::size_t first_epoch = 0;
  std::size_t last_epoch = 0;
  double value = 0.0;

  friend bool operator==(const EpochValue&, const EpochValue&) = default;
};

using EpochSchedule = std::vector<EpochValue>;

/// Value in force at `epoch`, or nullptr if no range covers it. The first
/// matching range wins.
const double* schedule_lookup(const EpochSchedule& schedule,
                              std::size_t epoch);

inline EpochSchedule constant_schedule(double value) {
  return {{0, std::numeric_limits<std::size_t>::max(), value}};
}

struct ThresholdPolicy {
  EpochSchedule alpha;
  EpochSchedule beta;
  double ratio_cutoff = 1.0;  // C: var/mean above it raises the threshold
  double thr_min = 1e-6;
  double thr_max = std::numeric_limits<double>::infinity();
  std::size_t warmup_epochs = 1;
  /// Optional multiplier applied before clamping; empty means 1.
  EpochSchedule scale;
  /// Sub-threshold parameters are sent with probability score/threshold.
  bool probabilistic = true;

  /// Throws kConfig naming the offending field; `epochs` is the number of
  /// epochs the schedules must cover.
  void validate(std::size_t epochs) const;
};

/// Layer threshold for `epoch`: 0 during warm-up, otherwise
/// alpha + beta*r for r > C and alpha - beta*r for r <= C, clamped to
/// [thr_min, thr_max]. Throws kConfig for an epoch no schedule covers.
double layer_threshold(const ThresholdPolicy& policy, std::size_t epoch,
                       const LayerStats& stats);

/// Random-stream position for one node's mask at one step. Each layer draws
/// from its own stream keyed by (seed, node, step, layer), one uniform per
/// parameter in index order.
struct MaskStream {
  std::uint64_t seed = 0;
  std::uint64_t node = 0;
  std::uint64_t step = 0;
};

/// bit_i = 1 when score_i >= thr(layer of i); otherwise 1 with probability
/// score_i / thr (only if `probabilistic`). thr = 0 sets every bit.
BitMask build_local_mask(const ImportanceVector& imp,
                         const LayerLayout& layout,
                         std::span<const double> thr_by_layer,
                         const MaskStream& stream, bool probabilistic = true);

}  // namespace iwp
