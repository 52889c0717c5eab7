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

#include "iwp/importance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iwp/error.hpp"
#include "iwp/rng.hpp"

namespace iwp {

LayerLayout::LayerLayout(std::vector<Layer> layers) : layers_(std::move(layers)) {
  std::size_t next = 0;
  for (const Layer& l : layers_) {
    if (l.offset != next) {
      fail(ErrorKind::kStructural, "layer '" + l.name + "' starts at " +
                                       std::to_string(l.offset) +
                                       ", expected " + std::to_string(next));
    }
    if (l.length == 0) {
      fail(ErrorKind::kStructural, "layer '" + l.name + "' is empty");
    }
    next += l.length;
  }
  total_ = next;
}

LayerLayout LayerLayout::from_lengths(
    const std::vector<std::pair<std::string, std::size_t>>& lengths) {
  std::vector<Layer> layers;
  std::size_t offset = 0;
  for (const auto& [name, length] : lengths) {
    layers.push_back({name, offset, length});
    offset += length;
  }
  return LayerLayout(std::move(layers));
}

LayerLayout LayerLayout::single(std::size_t total) {
  return LayerLayout({{"all", 0, total}});
}

std::size_t LayerLayout::layer_of(std::size_t param) const {
  if (param >= total_) {
    fail(ErrorKind::kStructural,
         "parameter index " + std::to_string(param) + " out of range");
  }
  auto it = std::upper_bound(
      layers_.begin(), layers_.end(), param,
      [](std::size_t p, const Layer& l) { return p < l.offset; });
  return static_cast<std::size_t>(it - layers_.begin()) - 1;
}

ImportanceVector::ImportanceVector(std::vector<double> scores)
    : scores_(std::move(scores)) {
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!std::isfinite(scores_[i]) || scores_[i] < 0.0) {
      fail(ErrorKind::kInput,
           "importance score at index " + std::to_string(i) +
               " is not a finite non-negative value");
    }
  }
}

ImportanceVector compute_importance(std::span<const double> accumulated_grad,
                                    std::span<const double> weights,
                                    double eps) {
  if (accumulated_grad.size() != weights.size()) {
    fail(ErrorKind::kStructural,
         "compute_importance: gradient length " +
             std::to_string(accumulated_grad.size()) + " != weight length " +
             std::to_string(weights.size()));
  }
  if (!(eps > 0.0)) fail(ErrorKind::kInput, "compute_importance: eps must be > 0");
  std::vector<double> scores(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = accumulated_grad[i];
    const double w = weights[i];
    if (!std::isfinite(g)) {
      fail(ErrorKind::kInput,
           "non-finite gradient at index " + std::to_string(i));
    }
    if (!std::isfinite(w)) {
      fail(ErrorKind::kInput, "non-finite weight at index " + std::to_string(i));
    }
    scores[i] = std::abs(g) / std::max(std::abs(w), eps);
  }
  return ImportanceVector(std::move(scores));
}

LayerStats layer_stats(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorKind::kStructural, "layer_stats: empty layer");
  const auto n = static_cast<double>(scores.size());
  double sum = 0.0;
  for (double s : scores) sum += s;
  LayerStats out;
  out.mean = sum / n;
  // Two-pass: sum of squared deviations from the mean.
  double sq = 0.0;
  for (double s : scores) {
    const double d = s - out.mean;
    sq += d * d;
  }
  out.variance = sq / n;
  out.ratio = out.variance / std::max(out.mean, kStatEps);
  return out;
}

LayerStats layer_stats(const ImportanceVector& imp, const LayerLayout& layout,
                       std::size_t layer) {
  if (layer >= layout.size()) {
    fail(ErrorKind::kStructural, "layer_stats: layer " + std::to_string(layer) +
                                     " out of range (M = " +
                                     std::to_string(layout.size()) + ")");
  }
  if (imp.size() != layout.total()) {
    fail(ErrorKind::kStructural,
         "layer_stats: importance length does not match layout");
  }
  const Layer& l = layout[layer];
  return layer_stats(imp.scores().subspan(l.offset, l.length));
}

const double* schedule_lookup(const EpochSchedule& schedule,
                              std::size_t epoch) {
  for (const EpochValue& ev : schedule) {
    if (epoch >= ev.first_epoch && epoch <= ev.last_epoch) return &ev.value;
  }
  return nullptr;
}

namespace {

void check_schedule(const EpochSchedule& schedule, const char* field,
                    std::size_t first, std::size_t epochs, bool required) {
  for (const EpochValue& ev : schedule) {
    if (ev.first_epoch > ev.last_epoch) {
      fail(ErrorKind::kConfig, std::string(field) + ": range [" +
                                   std::to_string(ev.first_epoch) + ", " +
                                   std::to_string(ev.last_epoch) +
                                   "] is inverted");
    }
    if (std::isnan(ev.value)) {
      fail(ErrorKind::kConfig, std::string(field) + ": value is NaN");
    }
  }
  if (!required) return;
  for (std::size_t e = first; e < epochs; ++e) {
    if (schedule_lookup(schedule, e) == nullptr) {
      fail(ErrorKind::kConfig, std::string(field) + ": no value for epoch " +
                                   std::to_string(e));
    }
  }
}

}  // namespace

void ThresholdPolicy::validate(std::size_t epochs) const {
  check_schedule(alpha, "threshold.alpha", warmup_epochs, epochs, true);
  check_schedule(beta, "threshold.beta", warmup_epochs, epochs, true);
  check_schedule(scale, "threshold.scale", warmup_epochs, epochs, false);
  if (!(ratio_cutoff > 0.0)) {
    fail(ErrorKind::kConfig, "threshold.ratio_cutoff: must be > 0");
  }
  if (!(thr_min > 0.0)) fail(ErrorKind::kConfig, "threshold.thr_min: must be > 0");
  if (!(thr_max >= thr_min)) {
    fail(ErrorKind::kConfig, "threshold.thr_max: must be >= thr_min");
  }
}

double layer_threshold(const ThresholdPolicy& policy, std::size_t epoch,
                       const LayerStats& stats) {
  if (epoch < policy.warmup_epochs) return 0.0;
  const double* alpha = schedule_lookup(policy.alpha, epoch);
  const double* beta = schedule_lookup(policy.beta, epoch);
  if (alpha == nullptr || beta == nullptr) {
    fail(ErrorKind::kConfig, "threshold schedule does not cover epoch " +
                                 std::to_string(epoch));
  }
  const double r = stats.ratio;
  double thr = r > policy.ratio_cutoff ? *alpha + *beta * r : *alpha - *beta * r;
  if (const double* s = schedule_lookup(policy.scale, epoch)) thr *= *s;
  return std::clamp(thr, policy.thr_min, policy.thr_max);
}

BitMask build_local_mask(const ImportanceVector& imp,
                         const LayerLayout& layout,
                         std::span<const double> thr_by_layer,
                         const MaskStream& stream, bool probabilistic) {
  if (imp.size() != layout.total()) {
    fail(ErrorKind::kStructural,
         "build_local_mask: importance length does not match layout");
  }
  if (thr_by_layer.size() != layout.size()) {
    fail(ErrorKind::kStructural,
         "build_local_mask: need one threshold per layer");
  }
  BitMask mask(imp.size());
  for (std::size_t j = 0; j < layout.size(); ++j) {
    const double thr = thr_by_layer[j];
    if (!(thr >= 0.0)) {
      fail(ErrorKind::kInput, "build_local_mask: negative threshold for layer " +
                                  layout[j].name);
    }
    Stream rng(stream.seed, StreamDomain::kLocalMask,
               {stream.node, stream.step, j});
    const Layer& l = layout[j];
    for (std::size_t i = l.offset; i < l.offset + l.length; ++i) {
      const double u = rng.uniform();
      const double score = imp[i];
      if (score >= thr) {
        mask.set(i);
      } else if (probabilistic && u < score / thr) {
        mask.set(i);
      }
    }
  }
  return mask;
}

}  // namespace iwp
