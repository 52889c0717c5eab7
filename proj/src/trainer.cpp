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

#include "iwp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "iwp/error.hpp"

namespace iwp {

double TrainingConfig::lr_at(std::size_t epoch) const {
  if (lr_decay_every == 0) return learning_rate;
  return learning_rate *
         std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
}

void TrainingConfig::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    fail(ErrorKind::kConfig, "training.momentum: must be in [0, 1)");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::kConfig, "training.learning_rate: must be > 0");
  }
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    fail(ErrorKind::kConfig, "training.lr_decay_factor: must be in (0, 1]");
  }
  if (batch_size == 0) fail(ErrorKind::kConfig, "training.batch_size: must be > 0");
  if (n_nodes < 2) fail(ErrorKind::kConfig, "training.n_nodes: must be >= 2");
  if (clip_norm && !(*clip_norm > 0.0)) {
    fail(ErrorKind::kConfig, "training.clip_norm: must be > 0 or null");
  }
  if (!(importance_eps > 0.0)) {
    fail(ErrorKind::kConfig, "training.importance_eps: must be > 0");
  }
  if (!(dgc_density > 0.0 && dgc_density <= 1.0)) {
    fail(ErrorKind::kConfig, "training.dgc_density: must be in (0, 1]");
  }
  if (wire.value_bytes == 0) fail(ErrorKind::kConfig, "wire.value_bytes: must be > 0");
}

NodeState NodeState::fresh(std::vector<double> weights) {
  NodeState s;
  const std::size_t n = weights.size();
  s.weights = std::move(weights);
  s.momentum.assign(n, 0.0);
  s.accum.assign(n, 0.0);
  s.staleness.assign(n, 0);
  return s;
}

std::vector<NodeState> replicate(const std::vector<double>& weights,
                                 std::size_t n_nodes) {
  return std::vector<NodeState>(n_nodes, NodeState::fresh(weights));
}

std::vector<double> clip_gradient(std::span<const double> g, double clip_norm) {
  if (!(clip_norm > 0.0)) fail(ErrorKind::kInput, "clip_norm must be > 0");
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  std::vector<double> out(g.begin(), g.end());
  if (norm > clip_norm) {
    const double s = clip_norm / norm;
    for (double& x : out) x *= s;
  }
  return out;
}

namespace {

void check_nodes(std::span<const NodeState> nodes, const LayerLayout& layout) {
  if (nodes.size() < 2) fail(ErrorKind::kStructural, "need at least 2 nodes");
  for (const NodeState& s : nodes) {
    const std::size_t l = layout.total();
    if (s.weights.size() != l || s.momentum.size() != l ||
        s.accum.size() != l || s.staleness.size() != l) {
      fail(ErrorKind::kStructural, "node state length does not match layout");
    }
  }
}

std::vector<double> node_gradient(const NodeState& state,
                                  const GradientSource& source,
                                  const TrainingConfig& cfg, std::size_t node,
                                  std::size_t step) {
  std::vector<double> g = source.local_gradient(state, node, step);
  if (g.size() != state.weights.size()) {
    fail(ErrorKind::kStructural, "gradient source returned wrong length");
  }
  if (cfg.clip_norm) g = clip_gradient(g, *cfg.clip_norm);
  return g;
}

void check_replicas(std::span<const NodeState> nodes) {
  const auto& w0 = nodes.front().weights;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    if (std::memcmp(nodes[k].weights.data(), w0.data(),
                    w0.size() * sizeof(double)) != 0) {
      fail(ErrorKind::kProtocol,
           "replica " + std::to_string(k) + " weights diverged from node 0");
    }
  }
}

std::vector<double> layer_densities(const BitMask& mask,
                                    const LayerLayout& layout) {
  std::vector<double> out(layout.size(), 0.0);
  for (std::size_t j = 0; j < layout.size(); ++j) {
    const Layer& l = layout[j];
    std::size_t hits = 0;
    for (std::size_t i = l.offset; i < l.offset + l.length; ++i) {
      hits += mask.test(i) ? 1 : 0;
    }
    out[j] = static_cast<double>(hits) / static_cast<double>(l.length);
  }
  return out;
}

// Applies w <- w - lr * value at the reduced indices on every node and resets
// their staleness.
void apply_sparse_update(std::span<NodeState> nodes,
                         const SparseGradient& reduced, double lr) {
  for (NodeState& s : nodes) {
    for (auto& c : s.staleness) ++c;
    for (std::size_t e = 0; e < reduced.nnz(); ++e) {
      const std::size_t i = reduced.indices[e];
      s.weights[i] -= lr * reduced.values[e];
      s.staleness[i] = 0;
    }
  }
}

}  // namespace

StepMetrics compressed_step(std::span<NodeState> nodes,
                            const GradientSource& source,
                            const LayerLayout& layout,
                            const ThresholdPolicy& policy,
                            const MaskAgreementConfig& mask_cfg,
                            const TrainingConfig& cfg, std::size_t step,
                            std::size_t epoch) {
  check_nodes(nodes, layout);
  const std::size_t n = nodes.size();
  const std::size_t len = layout.total();
  StepMetrics m;
  m.step = step;
  m.epoch = epoch;

  std::vector<BitMask> local(n);
  for (std::size_t k = 0; k < n; ++k) {
    NodeState& s = nodes[k];
    const std::vector<double> g = node_gradient(s, source, cfg, k, step);
    for (std::size_t i = 0; i < len; ++i) {
      s.momentum[i] = cfg.momentum * s.momentum[i] + g[i];
      s.accum[i] += s.momentum[i];
    }
    const ImportanceVector imp =
        compute_importance(s.accum, s.weights, cfg.importance_eps);
    std::vector<double> thr(layout.size());
    for (std::size_t j = 0; j < layout.size(); ++j) {
      thr[j] = layer_threshold(policy, epoch, layer_stats(imp, layout, j));
    }
    local[k] = build_local_mask(imp, layout, thr, {cfg.seed, k, step},
                                policy.probabilistic);
    if (k == 0) m.thresholds = thr;
  }

  MaskAgreementResult agreement = mask_agreement_round(local, mask_cfg, step);
  const BitMask& shared = agreement.shared;
  m.selected_nodes = agreement.selected;
  m.stats.merge(agreement.stats);

  std::vector<SparseGradient> sent;
  sent.reserve(n);
  for (NodeState& s : nodes) {
    SplitResult split = split_by_mask(s.accum, shared);
    s.accum = std::move(split.kept);
    if (cfg.momentum_masking) {
      for (std::size_t i : split.sent.indices) s.momentum[i] = 0.0;
    }
    sent.push_back(std::move(split.sent));
  }

  const RingTopology topo(n, len);
  SparseAllReduceResult reduced =
      sparse_allreduce(sent, topo, step, Reduction::kSum, cfg.wire);
  m.stats.merge(reduced.stats);
  apply_sparse_update(nodes, reduced.reduced, cfg.lr_at(epoch));
  check_replicas(nodes);

  m.nnz = shared.popcount();
  m.mean_density = shared.density();
  m.layer_density = layer_densities(shared, layout);
  m.compression_ratio =
      compression_ratio(m.nnz, 0, cfg.wire, len * cfg.wire.value_bytes);
  return m;
}

StepMetrics baseline_dense_step(std::span<NodeState> nodes,
                                const GradientSource& source,
                                const LayerLayout& layout,
                                const TrainingConfig& cfg, std::size_t step,
                                std::size_t epoch) {
  check_nodes(nodes, layout);
  const std::size_t n = nodes.size();
  const std::size_t len = layout.total();
  StepMetrics m;
  m.step = step;
  m.epoch = epoch;

  std::vector<std::vector<double>> grads;
  grads.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    grads.push_back(node_gradient(nodes[k], source, cfg, k, step));
  }
  const RingTopology topo(n, len);
  DenseAllReduceResult reduced =
      dense_allreduce(grads, topo, step, cfg.wire.value_bytes);
  const double lr = cfg.lr_at(epoch);
  for (std::size_t k = 0; k < n; ++k) {
    NodeState& s = nodes[k];
    const std::vector<double>& sum = reduced.node_results[k];
    for (std::size_t i = 0; i < len; ++i) {
      s.momentum[i] = cfg.momentum * s.momentum[i] + sum[i];
      s.weights[i] -= lr * s.momentum[i];
    }
    std::fill(s.staleness.begin(), s.staleness.end(), 0);
  }
  check_replicas(nodes);

  m.stats = std::move(reduced.stats);
  m.nnz = len;
  m.mean_density = 1.0;
  m.layer_density.assign(layout.size(), 1.0);
  m.compression_ratio = 1.0;
  return m;
}

StepMetrics dgc_contrast_step(std::span<NodeState> nodes,
                              const GradientSource& source,
                              const LayerLayout& layout,
                              const TrainingConfig& cfg, std::size_t step,
                              std::size_t epoch) {
  check_nodes(nodes, layout);
  const std::size_t n = nodes.size();
  const std::size_t len = layout.total();
  const auto k_top = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.dgc_density * static_cast<double>(len))));
  StepMetrics m;
  m.step = step;
  m.epoch = epoch;

  std::vector<SparseGradient> sent;
  sent.reserve(n);
  std::vector<std::size_t> order(len);
  for (std::size_t k = 0; k < n; ++k) {
    NodeState& s = nodes[k];
    const std::vector<double> g = node_gradient(s, source, cfg, k, step);
    for (std::size_t i = 0; i < len; ++i) {
      s.momentum[i] = cfg.momentum * s.momentum[i] + g[i];
      s.accum[i] += s.momentum[i];
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::nth_element(order.begin(),
                     order.begin() + static_cast<std::ptrdiff_t>(k_top - 1),
                     order.end(), [&](std::size_t a, std::size_t b) {
                       const double fa = std::abs(s.accum[a]);
                       const double fb = std::abs(s.accum[b]);
                       return fa != fb ? fa > fb : a < b;
                     });
    BitMask mask(len);
    for (std::size_t r = 0; r < k_top; ++r) mask.set(order[r]);
    SplitResult split = split_by_mask(s.accum, mask);
    s.accum = std::move(split.kept);
    if (cfg.momentum_masking) {
      for (std::size_t i : split.sent.indices) s.momentum[i] = 0.0;
    }
    sent.push_back(std::move(split.sent));
  }

  const RingTopology topo(n, len);
  SparseAllReduceResult reduced = union_allreduce(sent, topo, step, cfg.wire);
  apply_sparse_update(nodes, reduced.reduced, cfg.lr_at(epoch));
  check_replicas(nodes);

  BitMask union_mask(len);
  for (std::size_t i : reduced.reduced.indices) union_mask.set(i);
  m.nnz = reduced.reduced.nnz();
  m.mean_density = union_mask.density();
  m.layer_density = layer_densities(union_mask, layout);
  // Ring-level ratio: what a dense ring would move over what this one moved.
  const std::size_t dense_ring_bytes =
      2 * (n - 1) * topo.padded_length() * cfg.wire.value_bytes;
  const std::size_t moved = reduced.stats.total_bytes();
  m.compression_ratio =
      moved == 0 ? std::numeric_limits<double>::infinity()
                 : static_cast<double>(dense_ring_bytes) /
                       static_cast<double>(moved);
  m.stats = std::move(reduced.stats);
  return m;
}

std::vector<double> closed_form_weight_change(
    std::span<const std::vector<double>> grad_history, double momentum,
    double learning_rate) {
  if (grad_history.empty()) {
    fail(ErrorKind::kStructural, "closed_form_weight_change: empty history");
  }
  const std::size_t t_steps = grad_history.size();
  const std::size_t len = grad_history.front().size();
  std::vector<double> delta(len, 0.0);
  for (std::size_t j = 0; j < t_steps; ++j) {
    if (grad_history[j].size() != len) {
      fail(ErrorKind::kStructural, "closed_form_weight_change: ragged history");
    }
    double coef = 0.0;
    double power = 1.0;
    for (std::size_t tau = 0; tau + j < t_steps; ++tau) {
      coef += power;
      power *= momentum;
    }
    for (std::size_t i = 0; i < len; ++i) {
      delta[i] -= learning_rate * coef * grad_history[j][i];
    }
  }
  return delta;
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kDense:
      return "dense";
    case Mode::kCompressed:
      return "compressed";
    case Mode::kDgcContrast:
      return "dgc_contrast";
  }
  return "unknown";
}

std::uint64_t staleness_percentile(std::span<const std::uint64_t> staleness,
                                   double q) {
  if (staleness.empty()) return 0;
  std::vector<std::uint64_t> sorted(staleness.begin(), staleness.end());
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

ExperimentResult run_experiment(const ToyTask& task, const TrainingConfig& cfg,
                                const ThresholdPolicy& policy,
                                const MaskAgreementConfig& mask_cfg,
                                Mode mode) {
  cfg.validate();
  if (task.n_nodes() != cfg.n_nodes || task.batch_size() != cfg.batch_size) {
    fail(ErrorKind::kConfig, "task sharding does not match training config");
  }
  if (mode == Mode::kCompressed) {
    policy.validate(cfg.epochs);
    if (mask_cfg.n_selected < 1 || mask_cfg.n_selected > cfg.n_nodes) {
      fail(ErrorKind::kConfig, "mask_agreement.n_selected: must be in [1, " +
                                   std::to_string(cfg.n_nodes) + "]");
    }
  }
  const LayerLayout& layout = task.layout();
  std::vector<NodeState> nodes = replicate(task.initial_weights(), cfg.n_nodes);
  ExperimentResult result;
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

  const Evaluation initial = task.evaluate(nodes.front().weights);
  MetricsRow first;
  first.mode = mode;
  first.loss = initial.loss;
  first.accuracy = initial.accuracy;
  first.mean_density = kNaN;
  first.compression_ratio = kNaN;
  result.rows.push_back(first);

  const std::size_t spe = task.steps_per_epoch();
  const std::size_t total_steps = cfg.epochs * spe;
  for (std::size_t step = 1; step <= total_steps; ++step) {
    const std::size_t epoch = (step - 1) / spe;
    StepMetrics sm;
    try {
      switch (mode) {
        case Mode::kDense:
          sm = baseline_dense_step(nodes, task, layout, cfg, step, epoch);
          break;
        case Mode::kCompressed:
          sm = compressed_step(nodes, task, layout, policy, mask_cfg, cfg, step,
                               epoch);
          break;
        case Mode::kDgcContrast:
          sm = dgc_contrast_step(nodes, task, layout, cfg, step, epoch);
          break;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kInput) throw;
      fail(ErrorKind::kDivergence, "step " + std::to_string(step) + ": " +
                                       e.what());
    }
    const Evaluation ev = task.evaluate(nodes.front().weights);
    if (!std::isfinite(ev.loss)) {
      fail(ErrorKind::kDivergence, "loss became non-finite at step " +
                                       std::to_string(step) + " (epoch " +
                                       std::to_string(epoch) + ")");
    }
    MetricsRow row;
    row.step = step;
    row.epoch = epoch;
    row.mode = mode;
    row.loss = ev.loss;
    row.accuracy = ev.accuracy;
    row.mean_density = sm.mean_density;
    row.layer_density = sm.layer_density;
    row.compression_ratio = sm.compression_ratio;
    row.bytes_total = sm.stats.total_bytes();
    const auto& st = nodes.front().staleness;
    row.staleness_p50 = staleness_percentile(st, 0.5);
    row.staleness_p90 = staleness_percentile(st, 0.9);
    row.staleness_max = *std::max_element(st.begin(), st.end());
    result.rows.push_back(std::move(row));
    result.stats.merge(sm.stats);
  }
  result.final_weights = nodes.front().weights;
  return result;
}

}  // namespace iwp
