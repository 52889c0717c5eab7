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

namespace iwp {

/// Per-parameter send/keep decisions. One byte per bit in memory; the wire
/// form is EncodedMask.
class BitMask {
 public:
  BitMask() = default;
  explicit BitMask(std::size_t length, bool value = false)
      : bits_(length, value ? 1 : 0) {}
  static BitMask from_bits(std::span<const std::uint8_t> bits);

  std::size_t size() const { return bits_.size(); }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool value = true) { bits_[i] = value ? 1 : 0; }

  std::size_t popcount() const;
  /// popcount / size; an empty mask has density 0.
  double density() const;

  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Byte-packed mask: bit i lives in byte i/8 at position i%8 (LSB first),
/// padding bits in the final byte are zero.
struct EncodedMask {
  std::vector<std::uint8_t> payload;
  std::size_t bit_length = 0;

  friend bool operator==(const EncodedMask&, const EncodedMask&) = default;
};

inline std::size_t encoded_size(std::size_t bit_length) {
  return (bit_length + 7) / 8;
}

EncodedMask encode_mask(const BitMask& mask);

/// Throws ErrorKind::kCodec on size mismatch or nonzero padding.
BitMask decode_mask(const EncodedMask& encoded);

/// Elementwise OR. Throws kStructural on an empty list or length mismatch.
BitMask or_masks(std::span<const BitMask> masks);

/// Sorted coordinate list over a dense vector of `total_length` entries.
struct SparseGradient {
  std::vector<std::size_t> indices;  // strictly increasing, < total_length
  std::vector<double> values;
  std::size_t total_length = 0;

  std::size_t nnz() const { return indices.size(); }
  double density() const;
  /// Throws kStructural if the invariants do not hold.
  void validate() const;

  friend bool operator==(const SparseGradient&,
                         const SparseGradient&) = default;
};

std::vector<double> densify(const SparseGradient& sparse);

/// Entries of `dense` where mask is set.
SparseGradient sparsify(std::span<const double> dense, const BitMask& mask);

struct SplitResult {
  SparseGradient sent;
  std::vector<double> kept;
};

/// sent = grad at masked positions, kept = grad with masked positions zeroed.
/// Values are copied, never combined, so densify(sent) + kept == grad.
SplitResult split_by_mask(std::span<const double> grad, const BitMask& mask);

struct WireFormat {
  std::size_t value_bytes = 4;
  std::size_t index_bytes = 4;

  std::size_t entry_bytes() const { return value_bytes + index_bytes; }
};

/// dense_bytes / (nnz * entry_bytes + mask_bytes). Larger means more
/// compression. Returns +inf when the sparse side is empty.
double compression_ratio(std::size_t nnz, std::size_t mask_bytes,
                         const WireFormat& wire, std::size_t dense_bytes);

inline double compression_ratio(const SparseGradient& sent,
                                std::size_t mask_bytes, const WireFormat& wire,
                                std::size_t dense_bytes) {
  return compression_ratio(sent.nnz(), mask_bytes, wire, dense_bytes);
}

/// A ratio below 1 means the sparse encoding costs more than sending dense.
inline bool is_densified(double ratio) { return ratio < 1.0; }

}  // namespace iwp
