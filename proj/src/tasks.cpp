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

#include "iwp/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "iwp/error.hpp"
#include "iwp/rng.hpp"
#include "iwp/trainer.hpp"

namespace iwp {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kLinearRegression:
      return "linear_regression";
    case TaskKind::kMlpClassification:
      return "mlp_classification";
  }
  return "unknown";
}

namespace {

LayerLayout make_layout(const TaskSpec& spec) {
  std::vector<std::pair<std::string, std::size_t>> layers;
  if (spec.kind == TaskKind::kLinearRegression) {
    layers.emplace_back("weight", spec.input_dim);
    if (spec.bias) layers.emplace_back("bias", 1);
  } else {
    layers.emplace_back("fc1.weight", spec.hidden_dim * spec.input_dim);
    if (spec.bias) layers.emplace_back("fc1.bias", spec.hidden_dim);
    layers.emplace_back("fc2.weight", spec.n_classes * spec.hidden_dim);
    if (spec.bias) layers.emplace_back("fc2.bias", spec.n_classes);
  }
  return LayerLayout::from_lengths(layers);
}

void shuffle(std::vector<std::size_t>& v, Stream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

struct MlpOffsets {
  std::size_t w1, b1, w2, b2;
};

MlpOffsets mlp_offsets(const TaskSpec& s) {
  MlpOffsets o{};
  o.w1 = 0;
  o.b1 = s.hidden_dim * s.input_dim;
  o.w2 = o.b1 + (s.bias ? s.hidden_dim : 0);
  o.b2 = o.w2 + s.n_classes * s.hidden_dim;
  return o;
}

}  // namespace

ToyTask::ToyTask(const TaskSpec& spec, std::size_t n_nodes,
                 std::size_t batch_size, std::uint64_t training_seed)
    : spec_(spec),
      n_nodes_(n_nodes),
      batch_size_(batch_size),
      training_seed_(training_seed) {
  if (spec.input_dim == 0) fail(ErrorKind::kConfig, "task.input_dim: must be > 0");
  if (spec.kind == TaskKind::kMlpClassification) {
    if (spec.hidden_dim == 0) {
      fail(ErrorKind::kConfig, "task.hidden_dim: must be > 0");
    }
    if (spec.n_classes < 2) fail(ErrorKind::kConfig, "task.n_classes: must be >= 2");
  }
  if (n_nodes == 0) fail(ErrorKind::kConfig, "training.n_nodes: must be > 0");
  if (batch_size == 0) fail(ErrorKind::kConfig, "training.batch_size: must be > 0");
  if (spec.n_samples / n_nodes < batch_size) {
    fail(ErrorKind::kConfig,
         "task.n_samples: each of the " + std::to_string(n_nodes) +
             " shards needs at least batch_size = " +
             std::to_string(batch_size) + " samples");
  }
  if (!(spec.noise >= 0.0)) fail(ErrorKind::kConfig, "task.noise: must be >= 0");
  layout_ = make_layout(spec);

  const std::size_t d = spec.input_dim;
  Stream rng(spec.seed, StreamDomain::kData, {});
  features_.resize(spec.n_samples * d);
  if (spec.kind == TaskKind::kLinearRegression) {
    true_weights_.resize(layout_.total());
    for (std::size_t j = 0; j < d; ++j) true_weights_[j] = rng.normal();
    if (spec.bias) true_weights_[d] = 0.5;
    targets_.resize(spec.n_samples);
    for (std::size_t s = 0; s < spec.n_samples; ++s) {
      for (std::size_t j = 0; j < d; ++j) features_[s * d + j] = rng.normal();
      // Same expression as the model's prediction, so with zero noise the
      // generating weights are an exact stationary point.
      double pred = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        pred += true_weights_[j] * features_[s * d + j];
      }
      if (spec.bias) pred += true_weights_[d];
      targets_[s] = pred + spec.noise * rng.normal();
    }
  } else {
    std::vector<double> centroids(spec.n_classes * d);
    for (double& c : centroids) c = rng.normal();
    labels_.resize(spec.n_samples);
    for (std::size_t s = 0; s < spec.n_samples; ++s) {
      const std::size_t y = rng.below(spec.n_classes);
      labels_[s] = y;
      for (std::size_t j = 0; j < d; ++j) {
        features_[s * d + j] = centroids[y * d + j] + spec.noise * rng.normal();
      }
    }
  }

  make_shards(rng);
}

ToyTask ToyTask::from_regression_data(std::vector<double> features,
                                      std::vector<double> targets,
                                      std::size_t input_dim, bool bias,
                                      std::size_t n_nodes,
                                      std::size_t batch_size,
                                      std::uint64_t training_seed) {
  if (input_dim == 0 || features.size() != targets.size() * input_dim) {
    fail(ErrorKind::kStructural,
         "from_regression_data: features must hold targets.size() rows");
  }
  if (n_nodes == 0 || batch_size == 0 ||
      targets.size() / n_nodes < batch_size) {
    fail(ErrorKind::kConfig,
         "from_regression_data: too few rows for the node/batch layout");
  }
  ToyTask t;
  t.spec_.kind = TaskKind::kLinearRegression;
  t.spec_.n_samples = targets.size();
  t.spec_.input_dim = input_dim;
  t.spec_.bias = bias;
  t.spec_.noise = 0.0;
  t.n_nodes_ = n_nodes;
  t.batch_size_ = batch_size;
  t.training_seed_ = training_seed;
  t.layout_ = make_layout(t.spec_);
  t.features_ = std::move(features);
  t.targets_ = std::move(targets);
  Stream rng(t.spec_.seed, StreamDomain::kData, {});
  t.make_shards(rng);
  return t;
}

void ToyTask::make_shards(Stream& rng) {
  std::vector<std::size_t> perm(spec_.n_samples);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);
  const std::size_t per_shard = spec_.n_samples / n_nodes_;
  shards_.resize(n_nodes_);
  for (std::size_t k = 0; k < n_nodes_; ++k) {
    shards_[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(k * per_shard),
                      perm.begin() +
                          static_cast<std::ptrdiff_t>((k + 1) * per_shard));
  }
}

std::vector<double> ToyTask::initial_weights() const {
  std::vector<double> w(layout_.total());
  Stream rng(training_seed_, StreamDomain::kInit, {});
  if (spec_.kind == TaskKind::kLinearRegression) {
    for (double& x : w) x = rng.uniform() - 0.5;
    return w;
  }
  const std::size_t d = spec_.input_dim, h = spec_.hidden_dim,
                    c = spec_.n_classes;
  const MlpOffsets o = mlp_offsets(spec_);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(d + h));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(h + c));
  for (std::size_t i = 0; i < h * d; ++i) {
    w[o.w1 + i] = (2.0 * rng.uniform() - 1.0) * lim1;
  }
  for (std::size_t i = 0; i < c * h; ++i) {
    w[o.w2 + i] = (2.0 * rng.uniform() - 1.0) * lim2;
  }
  // Biases start small but nonzero so |g / w| is not dominated by the eps
  // guard on the first steps.
  if (spec_.bias) {
    for (std::size_t i = 0; i < h; ++i) w[o.b1 + i] = 0.2 * rng.uniform() - 0.1;
    for (std::size_t i = 0; i < c; ++i) w[o.b2 + i] = 0.2 * rng.uniform() - 0.1;
  }
  return w;
}

std::vector<std::size_t> ToyTask::batch_indices(std::size_t node,
                                                std::size_t step) const {
  const std::size_t spe = steps_per_epoch();
  const std::size_t epoch = step / spe;
  const std::size_t within = step % spe;
  std::vector<std::size_t> order = shards_.at(node);
  Stream rng(training_seed_, StreamDomain::kBatch, {node, epoch});
  shuffle(order, rng);
  return {order.begin() + static_cast<std::ptrdiff_t>(within * batch_size_),
          order.begin() +
              static_cast<std::ptrdiff_t>((within + 1) * batch_size_)};
}

double ToyTask::linear_sample(std::size_t s, std::span<const double> w,
                              std::span<double> grad, double scale) const {
  const std::size_t d = spec_.input_dim;
  const double* x = &features_[s * d];
  double pred = 0.0;
  for (std::size_t j = 0; j < d; ++j) pred += w[j] * x[j];
  if (spec_.bias) pred += w[d];
  const double r = pred - targets_[s];
  if (!grad.empty()) {
    for (std::size_t j = 0; j < d; ++j) grad[j] += scale * r * x[j];
    if (spec_.bias) grad[d] += scale * r;
  }
  return 0.5 * r * r;
}

double ToyTask::mlp_sample(std::size_t s, std::span<const double> w,
                           std::span<double> grad, double scale,
                           bool* correct) const {
  const std::size_t d = spec_.input_dim, h = spec_.hidden_dim,
                    c = spec_.n_classes;
  const MlpOffsets o = mlp_offsets(spec_);
  const double* x = &features_[s * d];

  std::vector<double> hidden(h);
  for (std::size_t i = 0; i < h; ++i) {
    double a = spec_.bias ? w[o.b1 + i] : 0.0;
    for (std::size_t j = 0; j < d; ++j) a += w[o.w1 + i * d + j] * x[j];
    hidden[i] = std::tanh(a);
  }
  std::vector<double> logits(c);
  for (std::size_t k = 0; k < c; ++k) {
    double z = spec_.bias ? w[o.b2 + k] : 0.0;
    for (std::size_t i = 0; i < h; ++i) z += w[o.w2 + k * h + i] * hidden[i];
    logits[k] = z;
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - zmax);
  const double log_denom = std::log(denom) + zmax;
  const std::size_t y = labels_[s];
  if (correct != nullptr) {
    *correct = static_cast<std::size_t>(
                   std::max_element(logits.begin(), logits.end()) -
                   logits.begin()) == y;
  }
  const double loss = log_denom - logits[y];
  if (grad.empty()) return loss;

  std::vector<double> dz(c);
  for (std::size_t k = 0; k < c; ++k) {
    dz[k] = std::exp(logits[k] - log_denom) - (k == y ? 1.0 : 0.0);
  }
  std::vector<double> dh(h, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < h; ++i) {
      grad[o.w2 + k * h + i] += scale * dz[k] * hidden[i];
      dh[i] += w[o.w2 + k * h + i] * dz[k];
    }
    if (spec_.bias) grad[o.b2 + k] += scale * dz[k];
  }
  for (std::size_t i = 0; i < h; ++i) {
    const double da = dh[i] * (1.0 - hidden[i] * hidden[i]);
    for (std::size_t j = 0; j < d; ++j) {
      grad[o.w1 + i * d + j] += scale * da * x[j];
    }
    if (spec_.bias) grad[o.b1 + i] += scale * da;
  }
  return loss;
}

double ToyTask::sample_loss(std::size_t s, std::span<const double> w,
                            std::span<double> grad, double scale,
                            bool* correct) const {
  if (spec_.kind == TaskKind::kLinearRegression) {
    return linear_sample(s, w, grad, scale);
  }
  return mlp_sample(s, w, grad, scale, correct);
}

std::vector<double> ToyTask::gradient(std::span<const std::size_t> samples,
                                      std::span<const double> weights,
                                      double scale) const {
  if (weights.size() != n_params()) {
    fail(ErrorKind::kStructural, "gradient: weight vector has wrong length");
  }
  std::vector<double> grad(n_params(), 0.0);
  for (std::size_t s : samples) sample_loss(s, weights, grad, scale, nullptr);
  return grad;
}

double ToyTask::loss(std::span<const std::size_t> samples,
                     std::span<const double> weights) const {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t s : samples) sum += sample_loss(s, weights, {}, 0.0, nullptr);
  return sum / static_cast<double>(samples.size());
}

Evaluation ToyTask::evaluate(std::span<const double> weights) const {
  Evaluation ev;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < spec_.n_samples; ++s) {
    bool correct = false;
    sum += sample_loss(s, weights, {}, 0.0, &correct);
    hits += correct ? 1 : 0;
  }
  ev.loss = sum / static_cast<double>(spec_.n_samples);
  if (spec_.kind == TaskKind::kMlpClassification) {
    ev.accuracy =
        static_cast<double>(hits) / static_cast<double>(spec_.n_samples);
  }
  return ev;
}

std::vector<double> ToyTask::local_gradient(const NodeState& state,
                                            std::size_t node,
                                            std::size_t step) const {
  if (step == 0) fail(ErrorKind::kStructural, "local_gradient: steps start at 1");
  const auto batch = batch_indices(node, step - 1);
  const double scale =
      1.0 / (static_cast<double>(n_nodes_) * static_cast<double>(batch_size_));
  return gradient(batch, state.weights, scale);
}

}  // namespace iwp
