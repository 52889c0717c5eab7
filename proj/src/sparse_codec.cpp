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

#include "iwp/sparse_codec.hpp"

#include <algorithm>
#include <string>

#include "iwp/error.hpp"

namespace iwp {

BitMask BitMask::from_bits(std::span<const std::uint8_t> bits) {
  BitMask mask(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) mask.set(i, bits[i] != 0);
  return mask;
}

std::size_t BitMask::popcount() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(), [](auto b) { return b != 0; }));
}

double BitMask::density() const {
  if (bits_.empty()) return 0.0;
  return static_cast<double>(popcount()) / static_cast<double>(bits_.size());
}

EncodedMask encode_mask(const BitMask& mask) {
  EncodedMask out;
  out.bit_length = mask.size();
  out.payload.assign(encoded_size(mask.size()), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.test(i)) {
      out.payload[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
  }
  return out;
}

BitMask decode_mask(const EncodedMask& encoded) {
  const std::size_t expected = encoded_size(encoded.bit_length);
  if (encoded.payload.size() != expected) {
    fail(ErrorKind::kCodec,
         "mask payload is " + std::to_string(encoded.payload.size()) +
             " bytes, expected " + std::to_string(expected) + " for " +
             std::to_string(encoded.bit_length) + " bits");
  }
  const std::size_t tail = encoded.bit_length % 8;
  if (tail != 0) {
    const auto padding = static_cast<std::uint8_t>(0xFFu << tail);
    if ((encoded.payload.back() & padding) != 0) {
      fail(ErrorKind::kCodec, "mask payload has nonzero padding bits");
    }
  }
  BitMask mask(encoded.bit_length);
  for (std::size_t i = 0; i < encoded.bit_length; ++i) {
    mask.set(i, (encoded.payload[i / 8] >> (i % 8)) & 1u);
  }
  return mask;
}

BitMask or_masks(std::span<const BitMask> masks) {
  if (masks.empty()) fail(ErrorKind::kStructural, "or_masks: empty mask list");
  BitMask out = masks.front();
  for (const BitMask& m : masks.subspan(1)) {
    if (m.size() != out.size()) {
      fail(ErrorKind::kStructural,
           "or_masks: length mismatch (" + std::to_string(m.size()) + " vs " +
               std::to_string(out.size()) + ")");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.test(i)) out.set(i);
    }
  }
  return out;
}

double SparseGradient::density() const {
  if (total_length == 0) return 0.0;
  return static_cast<double>(nnz()) / static_cast<double>(total_length);
}

void SparseGradient::validate() const {
  if (indices.size() != values.size()) {
    fail(ErrorKind::kStructural, "sparse gradient: indices/values size differ");
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= total_length) {
      fail(ErrorKind::kStructural, "sparse gradient: index " +
                                       std::to_string(indices[k]) +
                                       " out of range");
    }
    if (k > 0 && indices[k] <= indices[k - 1]) {
      fail(ErrorKind::kStructural,
           "sparse gradient: indices not strictly increasing at position " +
               std::to_string(k));
    }
  }
}

std::vector<double> densify(const SparseGradient& sparse) {
  sparse.validate();
  std::vector<double> dense(sparse.total_length, 0.0);
  for (std::size_t k = 0; k < sparse.nnz(); ++k) {
    dense[sparse.indices[k]] = sparse.values[k];
  }
  return dense;
}

SparseGradient sparsify(std::span<const double> dense, const BitMask& mask) {
  if (dense.size() != mask.size()) {
    fail(ErrorKind::kStructural, "sparsify: vector length " +
                                     std::to_string(dense.size()) +
                                     " != mask length " +
                                     std::to_string(mask.size()));
  }
  SparseGradient out;
  out.total_length = dense.size();
  const std::size_t nnz = mask.popcount();
  out.indices.reserve(nnz);
  out.values.reserve(nnz);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (mask.test(i)) {
      out.indices.push_back(i);
      out.values.push_back(dense[i]);
    }
  }
  return out;
}

SplitResult split_by_mask(std::span<const double> grad, const BitMask& mask) {
  SplitResult out;
  out.sent = sparsify(grad, mask);
  out.kept.assign(grad.begin(), grad.end());
  for (std::size_t i : out.sent.indices) out.kept[i] = 0.0;
  return out;
}

double compression_ratio(std::size_t nnz, std::size_t mask_bytes,
                         const WireFormat& wire, std::size_t dense_bytes) {
  if (dense_bytes == 0) {
    fail(ErrorKind::kStructural, "compression_ratio: dense_bytes must be > 0");
  }
  const std::size_t sparse_bytes = nnz * wire.entry_bytes() + mask_bytes;
  if (sparse_bytes == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(dense_bytes) / static_cast<double>(sparse_bytes);
}

}  // namespace iwp
