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
#include <map>
#include <ostream>
#include <span>
#include <tuple>
#include <vector>

#include "iwp/sparse_codec.hpp"

namespace iwp {

/// N nodes on a ring; node k sends to (k+1) mod N.
class RingTopology {
 public:
  struct Chunk {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
  };

  /// Throws kConfig unless n_nodes >= 2. `length` is the vector length the
  /// chunk boundaries describe.
  RingTopology(std::size_t n_nodes, std::size_t length);

  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t length() const { return length_; }
  /// max(length, N): shorter vectors are zero-padded so no chunk is empty.
  std::size_t padded_length() const { return chunks_.back().end; }
  std::size_t successor(std::size_t k) const { return (k + 1) % n_nodes_; }
  std::size_t predecessor(std::size_t k) const {
    return (k + n_nodes_ - 1) % n_nodes_;
  }
  const std::vector<Chunk>& chunk_boundaries() const { return chunks_; }
  std::size_t chunk_of(std::size_t index) const;

  /// Balanced split of max(length, n) entries into n chunks; the first
  /// (padded % n) chunks are one entry longer.
  static std::vector<Chunk> partition(std::size_t length, std::size_t n);

 private:
  std::size_t n_nodes_;
  std::size_t length_;
  std::vector<Chunk> chunks_;
};

enum class Phase { kScatterReduce, kAllgather, kMaskRound };

const char* to_string(Phase phase);

/// Bytes and message counts per (step, sending node, phase).
class LinkStats {
 public:
  struct Totals {
    std::size_t bytes = 0;
    std::size_t messages = 0;

    friend bool operator==(const Totals&, const Totals&) = default;
  };
  using Key = std::tuple<std::size_t, std::size_t, Phase>;  // step, node, phase

  void record(std::size_t step, std::size_t node, Phase phase,
              std::size_t bytes);
  void merge(const LinkStats& other);

  std::size_t total_bytes() const;
  std::size_t total_bytes(Phase phase) const;
  std::size_t messages(std::size_t node, Phase phase) const;
  std::size_t messages_by_node(std::size_t node) const;
  const std::map<Key, Totals>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  friend bool operator==(const LinkStats&, const LinkStats&) = default;

 private:
  std::map<Key, Totals> entries_;
};

struct BandwidthRow {
  std::size_t step = 0;
  std::size_t node = 0;
  Phase phase = Phase::kScatterReduce;
  std::size_t bytes = 0;
};

struct BandwidthReport {
  std::vector<BandwidthRow> rows;                // ordered by (step, node, phase)
  std::map<std::size_t, std::size_t> per_step;   // step -> bytes, all nodes
  std::vector<std::size_t> per_node;             // cumulative bytes per node
  std::size_t total = 0;
};

BandwidthReport bandwidth_report(const LinkStats& stats, std::size_t n_nodes);

/// Header `step,node,phase,bytes`, one row per report row.
void write_bandwidth_csv(std::ostream& out, const BandwidthReport& report);

struct DenseAllReduceResult {
  std::vector<std::vector<double>> node_results;  // one per node, identical
  LinkStats stats;

  const std::vector<double>& result() const { return node_results.front(); }
};

/// Ring scatter-reduce followed by allgather. Chunk c is summed starting at
/// node c and walking successors. Each node sends 2(N-1) messages.
DenseAllReduceResult dense_allreduce(
    const std::vector<std::vector<double>>& contributions,
    const RingTopology& topo, std::size_t step = 0,
    std::size_t value_bytes = 4);

struct MaskAgreementConfig {
  std::size_t n_selected = 2;
  std::uint64_t shared_seed = 0;
};

/// Nodes whose masks are broadcast at `step`, drawn without replacement
/// from a stream keyed by (shared_seed, step). Every node computes the same
/// list without coordination.
std::vector<std::size_t> select_nodes(std::size_t n_nodes,
                                      const MaskAgreementConfig& cfg,
                                      std::size_t step);

struct MaskAgreementResult {
  BitMask shared;
  std::vector<std::size_t> selected;
  LinkStats stats;
};

/// Selected nodes' masks are encoded, allgathered around the ring, decoded
/// and OR-combined on every node. Throws kProtocol if nodes disagree.
MaskAgreementResult mask_agreement_round(std::span<const BitMask> local_masks,
                                         const MaskAgreementConfig& cfg,
                                         std::size_t step);

enum class Reduction { kMean, kSum };

struct SparseAllReduceResult {
  SparseGradient reduced;
  LinkStats stats;
};

/// Ring all-reduce over gradients that share one index set. The result keeps
/// that index set exactly. Throws kProtocol if index sets differ.
SparseAllReduceResult sparse_allreduce(std::span<const SparseGradient> sent,
                                       const RingTopology& topo,
                                       std::size_t step = 0,
                                       Reduction reduction = Reduction::kMean,
                                       const WireFormat& wire = {});

/// Ring all-reduce where every node picked its own index set. Partial chunks
/// are merged (union of indices, sum of values) at each hop, so messages grow
/// as they travel. Values are summed, not averaged.
SparseAllReduceResult union_allreduce(std::span<const SparseGradient> sent,
                                      const RingTopology& topo,
                                      std::size_t step = 0,
                                      const WireFormat& wire = {});

/// Density after reducing independent per-node masks through the ring.
double dgc_union_contrast(std::span<const BitMask> per_node_masks,
                          const RingTopology& topo);
/// Same, building the ring from the masks; a single node has nothing to
/// reduce and keeps its own density.
double dgc_union_contrast(std::span<const BitMask> per_node_masks);

}  // namespace iwp
