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

#include "iwp/ring_sim.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "iwp/error.hpp"
#include "iwp/rng.hpp"

namespace iwp {

RingTopology::RingTopology(std::size_t n_nodes, std::size_t length)
    : n_nodes_(n_nodes), length_(length) {
  if (n_nodes < 2) {
    fail(ErrorKind::kConfig, "ring needs at least 2 nodes, got " +
                                 std::to_string(n_nodes));
  }
  chunks_ = partition(length, n_nodes);
}

std::vector<RingTopology::Chunk> RingTopology::partition(std::size_t length,
                                                         std::size_t n) {
  const std::size_t padded = std::max(length, n);
  const std::size_t base = padded / n;
  const std::size_t extra = padded % n;
  std::vector<Chunk> chunks(n);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    chunks[c] = {offset, offset + len};
    offset += len;
  }
  return chunks;
}

std::size_t RingTopology::chunk_of(std::size_t index) const {
  auto it = std::upper_bound(
      chunks_.begin(), chunks_.end(), index,
      [](std::size_t i, const Chunk& c) { return i < c.end; });
  if (it == chunks_.end()) {
    fail(ErrorKind::kStructural, "index " + std::to_string(index) +
                                     " outside the ring's chunks");
  }
  return static_cast<std::size_t>(it - chunks_.begin());
}

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::kScatterReduce:
      return "scatter_reduce";
    case Phase::kAllgather:
      return "allgather";
    case Phase::kMaskRound:
      return "mask_round";
  }
  return "unknown";
}

void LinkStats::record(std::size_t step, std::size_t node, Phase phase,
                       std::size_t bytes) {
  Totals& t = entries_[{step, node, phase}];
  t.bytes += bytes;
  t.messages += 1;
}

void LinkStats::merge(const LinkStats& other) {
  for (const auto& [key, totals] : other.entries_) {
    Totals& t = entries_[key];
    t.bytes += totals.bytes;
    t.messages += totals.messages;
  }
}

std::size_t LinkStats::total_bytes() const {
  std::size_t sum = 0;
  for (const auto& [key, t] : entries_) sum += t.bytes;
  return sum;
}

std::size_t LinkStats::total_bytes(Phase phase) const {
  std::size_t sum = 0;
  for (const auto& [key, t] : entries_) {
    if (std::get<2>(key) == phase) sum += t.bytes;
  }
  return sum;
}

std::size_t LinkStats::messages(std::size_t node, Phase phase) const {
  std::size_t sum = 0;
  for (const auto& [key, t] : entries_) {
    if (std::get<1>(key) == node && std::get<2>(key) == phase) {
      sum += t.messages;
    }
  }
  return sum;
}

std::size_t LinkStats::messages_by_node(std::size_t node) const {
  std::size_t sum = 0;
  for (const auto& [key, t] : entries_) {
    if (std::get<1>(key) == node) sum += t.messages;
  }
  return sum;
}

BandwidthReport bandwidth_report(const LinkStats& stats, std::size_t n_nodes) {
  BandwidthReport report;
  report.per_node.assign(n_nodes, 0);
  for (const auto& [key, t] : stats.entries()) {
    const auto& [step, node, phase] = key;
    report.rows.push_back({step, node, phase, t.bytes});
    report.per_step[step] += t.bytes;
    if (node >= report.per_node.size()) report.per_node.resize(node + 1, 0);
    report.per_node[node] += t.bytes;
    report.total += t.bytes;
  }
  return report;
}

void write_bandwidth_csv(std::ostream& out, const BandwidthReport& report) {
  out << "step,node,phase,bytes\n";
  for (const BandwidthRow& r : report.rows) {
    out << r.step << ',' << r.node << ',' << to_string(r.phase) << ','
        << r.bytes << '\n';
  }
}

namespace {

// In-place ring all-reduce (sum) over per-node buffers already padded to
// topo.padded_length(). During scatter-reduce step s, node k sends chunk
// (k - s) mod N; the receiver adds its own entries to the incoming partial
// sum, so chunk c accumulates in the order c, c+1, ..., c+N-1. Node k then
// holds the finished chunk (k + 1) mod N and the allgather circulates it.
void ring_reduce_inplace(std::vector<std::vector<double>>& bufs,
                         const RingTopology& topo, std::size_t step,
                         std::size_t entry_bytes, LinkStats& stats) {
  const std::size_t n = topo.n_nodes();
  const auto& chunks = topo.chunk_boundaries();
  for (std::size_t s = 0; s + 1 < n; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = (k + n - s % n) % n;
      const std::size_t dst = topo.successor(k);
      const auto& ch = chunks[c];
      for (std::size_t i = ch.begin; i < ch.end; ++i) {
        bufs[dst][i] = bufs[k][i] + bufs[dst][i];
      }
      stats.record(step, k, Phase::kScatterReduce, ch.size() * entry_bytes);
    }
  }
  for (std::size_t s = 0; s + 1 < n; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = (k + 1 + n - s % n) % n;
      const std::size_t dst = topo.successor(k);
      const auto& ch = chunks[c];
      std::copy(bufs[k].begin() + static_cast<std::ptrdiff_t>(ch.begin),
                bufs[k].begin() + static_cast<std::ptrdiff_t>(ch.end),
                bufs[dst].begin() + static_cast<std::ptrdiff_t>(ch.begin));
      stats.record(step, k, Phase::kAllgather, ch.size() * entry_bytes);
    }
  }
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

DenseAllReduceResult dense_allreduce(
    const std::vector<std::vector<double>>& contributions,
    const RingTopology& topo, std::size_t step, std::size_t value_bytes) {
  if (contributions.size() != topo.n_nodes()) {
    fail(ErrorKind::kStructural,
         "dense_allreduce: expected " + std::to_string(topo.n_nodes()) +
             " contributions, got " + std::to_string(contributions.size()));
  }
  const std::size_t len = topo.length();
  DenseAllReduceResult out;
  out.node_results.reserve(contributions.size());
  for (const auto& c : contributions) {
    if (c.size() != len) {
      fail(ErrorKind::kStructural, "dense_allreduce: contribution length " +
                                       std::to_string(c.size()) +
                                       " != ring length " + std::to_string(len));
    }
    auto& buf = out.node_results.emplace_back(c);
    buf.resize(topo.padded_length(), 0.0);
  }
  ring_reduce_inplace(out.node_results, topo, step, value_bytes, out.stats);
  for (auto& buf : out.node_results) buf.resize(len);
  return out;
}

std::vector<std::size_t> select_nodes(std::size_t n_nodes,
                                      const MaskAgreementConfig& cfg,
                                      std::size_t step) {
  if (cfg.n_selected < 1 || cfg.n_selected > n_nodes) {
    fail(ErrorKind::kConfig, "mask_agreement.n_selected must be in [1, " +
                                 std::to_string(n_nodes) + "], got " +
                                 std::to_string(cfg.n_selected));
  }
  // Partial Fisher-Yates: position i swaps with a uniform pick from [i, N).
  std::vector<std::size_t> order(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) order[i] = i;
  Stream rng(cfg.shared_seed, StreamDomain::kNodeSelection, {step});
  for (std::size_t i = 0; i < cfg.n_selected; ++i) {
    const std::size_t j = i + rng.below(n_nodes - i);
    std::swap(order[i], order[j]);
  }
  order.resize(cfg.n_selected);
  return order;
}

MaskAgreementResult mask_agreement_round(std::span<const BitMask> local_masks,
                                         const MaskAgreementConfig& cfg,
                                         std::size_t step) {
  const std::size_t n = local_masks.size();
  if (n == 0) fail(ErrorKind::kStructural, "mask_agreement_round: no nodes");
  for (const BitMask& m : local_masks) {
    if (m.size() != local_masks.front().size()) {
      fail(ErrorKind::kStructural, "mask_agreement_round: mask lengths differ");
    }
  }
  MaskAgreementResult out;
  out.selected = select_nodes(n, cfg, step);

  // inbox[k] collects the payloads node k has seen, starting with its own
  // when it is a broadcaster.
  std::vector<std::vector<EncodedMask>> inbox(n);
  std::vector<EncodedMask> in_flight;  // parallel to out.selected
  for (std::size_t r : out.selected) {
    in_flight.push_back(encode_mask(local_masks[r]));
    inbox[r].push_back(in_flight.back());
  }
  for (std::size_t hop = 0; hop + 1 < n; ++hop) {
    for (std::size_t s = 0; s < out.selected.size(); ++s) {
      const std::size_t sender = (out.selected[s] + hop) % n;
      const std::size_t receiver = (sender + 1) % n;
      out.stats.record(step, sender, Phase::kMaskRound,
                       in_flight[s].payload.size());
      inbox[receiver].push_back(in_flight[s]);
    }
  }

  std::vector<BitMask> per_node;
  per_node.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<BitMask> decoded;
    decoded.reserve(inbox[k].size());
    for (const EncodedMask& e : inbox[k]) decoded.push_back(decode_mask(e));
    per_node.push_back(or_masks(decoded));
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (!(per_node[k] == per_node[0])) {
      fail(ErrorKind::kProtocol, "mask agreement: node " + std::to_string(k) +
                                     " disagrees with node 0");
    }
  }
  out.shared = std::move(per_node.front());
  return out;
}

SparseAllReduceResult sparse_allreduce(std::span<const SparseGradient> sent,
                                       const RingTopology& topo,
                                       std::size_t step, Reduction reduction,
                                       const WireFormat& wire) {
  const std::size_t n = topo.n_nodes();
  if (sent.size() != n) {
    fail(ErrorKind::kStructural,
         "sparse_allreduce: expected " + std::to_string(n) +
             " inputs, got " + std::to_string(sent.size()));
  }
  const SparseGradient& first = sent.front();
  first.validate();
  for (std::size_t k = 1; k < n; ++k) {
    if (sent[k].indices != first.indices ||
        sent[k].total_length != first.total_length) {
      fail(ErrorKind::kProtocol, "sparse_allreduce: node " + std::to_string(k) +
                                     " has a different index set");
    }
    if (sent[k].values.size() != sent[k].indices.size()) {
      fail(ErrorKind::kStructural, "sparse_allreduce: indices/values differ");
    }
  }
  // Entries travel as (index, value) pairs over the shared index list.
  const RingTopology value_ring(n, first.nnz());
  std::vector<std::vector<double>> bufs;
  bufs.reserve(n);
  for (const SparseGradient& g : sent) {
    auto& b = bufs.emplace_back(g.values);
    b.resize(value_ring.padded_length(), 0.0);
  }
  SparseAllReduceResult out;
  ring_reduce_inplace(bufs, value_ring, step, wire.entry_bytes(), out.stats);
  for (std::size_t k = 1; k < n; ++k) {
    if (!bitwise_equal(bufs[k], bufs[0])) {
      fail(ErrorKind::kProtocol, "sparse_allreduce: replicas diverged");
    }
  }
  out.reduced.indices = first.indices;
  out.reduced.total_length = first.total_length;
  out.reduced.values.assign(bufs[0].begin(),
                            bufs[0].begin() +
                                static_cast<std::ptrdiff_t>(first.nnz()));
  if (reduction == Reduction::kMean) {
    for (double& v : out.reduced.values) v /= static_cast<double>(n);
  }
  return out;
}

namespace {

// Sorted (index, value) partial sum for one chunk of the index space.
struct Partial {
  std::vector<std::size_t> indices;
  std::vector<double> values;
};

// incoming + own, merged by index. Values at shared indices are summed as
// incoming + own, matching the dense ring's order.
Partial merge_partials(const Partial& incoming, const Partial& own) {
  Partial out;
  std::size_t a = 0, b = 0;
  while (a < incoming.indices.size() || b < own.indices.size()) {
    if (b == own.indices.size() ||
        (a < incoming.indices.size() && incoming.indices[a] < own.indices[b])) {
      out.indices.push_back(incoming.indices[a]);
      out.values.push_back(incoming.values[a++]);
    } else if (a == incoming.indices.size() ||
               own.indices[b] < incoming.indices[a]) {
      out.indices.push_back(own.indices[b]);
      out.values.push_back(own.values[b++]);
    } else {
      out.indices.push_back(own.indices[b]);
      out.values.push_back(incoming.values[a++] + own.values[b++]);
    }
  }
  return out;
}

}  // namespace

SparseAllReduceResult union_allreduce(std::span<const SparseGradient> sent,
                                      const RingTopology& topo,
                                      std::size_t step,
                                      const WireFormat& wire) {
  const std::size_t n = topo.n_nodes();
  if (sent.size() != n) {
    fail(ErrorKind::kStructural, "union_allreduce: expected " +
                                     std::to_string(n) + " inputs");
  }
  const std::size_t len = topo.length();
  // node_chunks[k][c]: node k's current view of chunk c.
  std::vector<std::vector<Partial>> node_chunks(n, std::vector<Partial>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const SparseGradient& g = sent[k];
    g.validate();
    if (g.total_length != len) {
      fail(ErrorKind::kStructural, "union_allreduce: length mismatch at node " +
                                       std::to_string(k));
    }
    for (std::size_t e = 0; e < g.nnz(); ++e) {
      Partial& p = node_chunks[k][topo.chunk_of(g.indices[e])];
      p.indices.push_back(g.indices[e]);
      p.values.push_back(g.values[e]);
    }
  }
  SparseAllReduceResult out;
  for (std::size_t s = 0; s + 1 < n; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = (k + n - s % n) % n;
      const std::size_t dst = topo.successor(k);
      const Partial& msg = node_chunks[k][c];
      out.stats.record(step, k, Phase::kScatterReduce,
                       msg.indices.size() * wire.entry_bytes());
      node_chunks[dst][c] = merge_partials(msg, node_chunks[dst][c]);
    }
  }
  for (std::size_t s = 0; s + 1 < n; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = (k + 1 + n - s % n) % n;
      const std::size_t dst = topo.successor(k);
      out.stats.record(step, k, Phase::kAllgather,
                       node_chunks[k][c].indices.size() * wire.entry_bytes());
      node_chunks[dst][c] = node_chunks[k][c];
    }
  }
  out.reduced.total_length = len;
  for (const Partial& p : node_chunks[0]) {
    out.reduced.indices.insert(out.reduced.indices.end(), p.indices.begin(),
                               p.indices.end());
    out.reduced.values.insert(out.reduced.values.end(), p.values.begin(),
                              p.values.end());
  }
  return out;
}

double dgc_union_contrast(std::span<const BitMask> per_node_masks,
                          const RingTopology& topo) {
  std::vector<SparseGradient> sent;
  sent.reserve(per_node_masks.size());
  for (const BitMask& m : per_node_masks) {
    const std::vector<double> ones(m.size(), 1.0);
    sent.push_back(sparsify(ones, m));
  }
  return union_allreduce(sent, topo).reduced.density();
}

double dgc_union_contrast(std::span<const BitMask> per_node_masks) {
  if (per_node_masks.empty()) {
    fail(ErrorKind::kStructural, "dgc_union_contrast: no masks");
  }
  if (per_node_masks.size() == 1) return per_node_masks.front().density();
  return dgc_union_contrast(
      per_node_masks,
      RingTopology(per_node_masks.size(), per_node_masks.front().size()));
}

}  // namespace iwp
