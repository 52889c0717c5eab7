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
#include <vector>

#include "iwp/importance.hpp"
#include "iwp/rng.hpp"

namespace iwp {

struct NodeState;

/// Supplies each node's per-step gradient, already scaled by 1/(N*B).
class GradientSource {
 public:
  virtual ~GradientSource() = default;
  virtual std::vector<double> local_gradient(const NodeState& state,
                                             std::size_t node,
                                             std::size_t step) const = 0;
};

enum class TaskKind { kLinearRegression, kMlpClassification };

const char* to_string(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::kMlpClassification;
  std::size_t n_samples = 2048;
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 32;  // MLP only
  std::size_t n_classes = 4;    // MLP only
  bool bias = true;
  /// Regression: std-dev of label noise. Classification: std-dev of the
  /// samples around their class centroid (centroids are unit normal).
  double noise = 0.1;
  std::uint64_t seed = 7;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

/// Synthetic dataset plus model, sharded across nodes.
///
/// linear_regression: y = w*.x + b* + noise, loss 1/2 (w.x + b - y)^2, layers
/// "weight" and "bias". mlp_classification: Gaussian class clusters, one tanh
/// hidden layer and softmax cross-entropy, layers fc1.weight, fc1.bias,
/// fc2.weight, fc2.bias.
///
/// The dataset is permuted once and split into N equal contiguous shards
/// (remainder dropped). Each epoch a node walks its shard in an order keyed
/// by (training seed, node, epoch), B samples per step.
class ToyTask : public GradientSource {
 public:
  ToyTask(const TaskSpec& spec, std::size_t n_nodes, std::size_t batch_size,
          std::uint64_t training_seed);

  /// Linear regression over caller-supplied rows (features is row-major,
  /// targets.size() rows of input_dim values).
  static ToyTask from_regression_data(std::vector<double> features,
                                      std::vector<double> targets,
                                      std::size_t input_dim, bool bias,
                                      std::size_t n_nodes,
                                      std::size_t batch_size,
                                      std::uint64_t training_seed);

  const TaskSpec& spec() const { return spec_; }
  const LayerLayout& layout() const { return layout_; }
  std::size_t n_params() const { return layout_.total(); }
  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t shard_size() const { return shards_.front().size(); }
  std::size_t steps_per_epoch() const { return shard_size() / batch_size_; }

  std::vector<double> initial_weights() const;
  /// Regression only: the generating parameters (w*, b*).
  const std::vector<double>& true_weights() const { return true_weights_; }

  /// Samples node `node` uses at zero-based global step `step`.
  std::vector<std::size_t> batch_indices(std::size_t node,
                                         std::size_t step) const;
  const std::vector<std::size_t>& shard(std::size_t node) const {
    return shards_[node];
  }

  /// scale * sum over `samples` of the per-sample loss gradient.
  std::vector<double> gradient(std::span<const std::size_t> samples,
                               std::span<const double> weights,
                               double scale) const;
  /// Mean per-sample loss over `samples`.
  double loss(std::span<const std::size_t> samples,
              std::span<const double> weights) const;
  /// Mean loss (and accuracy for classification) over the whole dataset.
  Evaluation evaluate(std::span<const double> weights) const;

  /// Gradient of node `node`'s batch at zero-based `step`, scaled 1/(N*B).
  std::vector<double> local_gradient(const NodeState& state, std::size_t node,
                                     std::size_t step) const override;

 private:
  ToyTask() = default;
  void make_shards(Stream& rng);
  double sample_loss(std::size_t s, std::span<const double> w,
                     std::span<double> grad, double scale,
                     bool* correct) const;
  double linear_sample(std::size_t s, std::span<const double> w,
                       std::span<double> grad, double scale) const;
  double mlp_sample(std::size_t s, std::span<const double> w,
                    std::span<double> grad, double scale, bool* correct) const;

  TaskSpec spec_;
  std::size_t n_nodes_ = 0;
  std::size_t batch_size_ = 0;
  std::uint64_t training_seed_ = 0;
  LayerLayout layout_;
  std::vector<double> features_;  // n_samples x input_dim
  std::vector<double> targets_;   // regression
  std::vector<std::size_t> labels_;
  std::vector<double> true_weights_;
  std::vector<std::vector<std::size_t>> shards_;
};

}  // namespace iwp
