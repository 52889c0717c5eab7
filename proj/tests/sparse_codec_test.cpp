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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "iwp/error.hpp"
#include "iwp/rng.hpp"

namespace iwp {
namespace {

BitMask mask_of(std::vector<std::uint8_t> bits) { return BitMask::from_bits(bits); }

BitMask random_mask(Stream& rng, std::size_t n, double p) {
  BitMask m(n);
  for (std::size_t i = 0; i < n; ++i) m.set(i, rng.uniform() < p);
  return m;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

TEST(EncodeMask, LsbFirstExample) {
  const EncodedMask enc = encode_mask(mask_of({1, 0, 1, 1, 0, 0, 0, 0, 1}));
  EXPECT_EQ(enc.payload, (std::vector<std::uint8_t>{0x0D, 0x01}));
  EXPECT_EQ(enc.bit_length, 9u);
}

TEST(EncodeMask, AllZero16) {
  const EncodedMask enc = encode_mask(BitMask(16));
  EXPECT_EQ(enc.payload, (std::vector<std::uint8_t>{0x00, 0x00}));
}

TEST(EncodeMask, EmptyMask) {
  const EncodedMask enc = encode_mask(BitMask());
  EXPECT_TRUE(enc.payload.empty());
  EXPECT_EQ(decode_mask(enc).size(), 0u);
}

TEST(DecodeMask, InverseOfExample) {
  const BitMask m = decode_mask({{0x0D, 0x01}, 9});
  EXPECT_EQ(m, mask_of({1, 0, 1, 1, 0, 0, 0, 0, 1}));
  EXPECT_EQ(decode_mask({{0x00}, 8}), BitMask(8));
}

TEST(DecodeMask, RejectsPaddingAndSize) {
  EXPECT_EQ(kind_of([] { decode_mask({{0x80}, 4}); }), ErrorKind::kCodec);
  EXPECT_EQ(kind_of([] { decode_mask({{0x00, 0x00}, 8}); }), ErrorKind::kCodec);
  EXPECT_EQ(kind_of([] { decode_mask({{}, 1}); }), ErrorKind::kCodec);
}

// Reference packer: one bit at a time, independent of the library loop.
std::vector<std::uint8_t> pack_oracle(const BitMask& m) {
  std::vector<std::uint8_t> out((m.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m.test(i)) out[i / 8] = static_cast<std::uint8_t>(out[i / 8] | (1u << (i % 8)));
  }
  return out;
}

TEST(EncodeMask, RoundtripRandomLengths) {
  Stream rng(11, StreamDomain::kTest, {1});
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = rng.below(10001);
    if (trial < 16) n = static_cast<std::size_t>(trial);
    const BitMask m = random_mask(rng, n, rng.uniform());
    const EncodedMask enc = encode_mask(m);
    ASSERT_EQ(enc.payload.size(), encoded_size(n));
    ASSERT_EQ(enc.payload, pack_oracle(m));
    ASSERT_EQ(decode_mask(enc), m);
  }
}

TEST(OrMasks, Basics) {
  const BitMask a = mask_of({1, 0, 0});
  const BitMask b = mask_of({0, 0, 1});
  std::vector<BitMask> ab{a, b};
  EXPECT_EQ(or_masks(ab), mask_of({1, 0, 1}));
  std::vector<BitMask> az{a, BitMask(3)};
  EXPECT_EQ(or_masks(az), a);
}

TEST(OrMasks, Errors) {
  EXPECT_EQ(kind_of([] { or_masks({}); }), ErrorKind::kStructural);
  std::vector<BitMask> bad{BitMask(3), BitMask(4)};
  EXPECT_EQ(kind_of([&] { or_masks(bad); }), ErrorKind::kStructural);
}

TEST(OrMasks, UnionBoundAndAlgebra) {
  Stream rng(12, StreamDomain::kTest, {2});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.below(8);
    const double d = 0.2 * rng.uniform();
    std::vector<BitMask> ms;
    double max_d = 0.0;
    double sum_d = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      ms.push_back(random_mask(rng, 2000, d));
      max_d = std::max(max_d, ms.back().density());
      sum_d += ms.back().density();
    }
    const BitMask u = or_masks(ms);
    EXPECT_LE(u.density(), std::min(1.0, sum_d) + 1e-15);
    EXPECT_GE(u.density(), max_d);

    std::vector<BitMask> rev(ms.rbegin(), ms.rend());
    EXPECT_EQ(or_masks(rev), u);
    std::vector<BitMask> twice{u, u};
    EXPECT_EQ(or_masks(twice), u);
    if (r >= 3) {
      std::vector<BitMask> head{ms[0], ms[1]};
      std::vector<BitMask> grouped{or_masks(head)};
      grouped.insert(grouped.end(), ms.begin() + 2, ms.end());
      EXPECT_EQ(or_masks(grouped), u);
    }
  }
}

TEST(SplitByMask, Example) {
  const std::vector<double> g{1, 2, 3};
  const SplitResult s = split_by_mask(g, mask_of({1, 0, 1}));
  EXPECT_EQ(s.sent.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(s.sent.values, (std::vector<double>{1, 3}));
  EXPECT_EQ(s.kept, (std::vector<double>{0, 2, 0}));

  const SplitResult all = split_by_mask(g, BitMask(3, true));
  EXPECT_EQ(all.kept, (std::vector<double>{0, 0, 0}));
}

TEST(SplitByMask, LengthMismatch) {
  const std::vector<double> g{1, 2};
  EXPECT_EQ(kind_of([&] { split_by_mask(g, BitMask(3)); }), ErrorKind::kStructural);
}

TEST(SplitByMask, ReconstructionIsExact) {
  Stream rng(13, StreamDomain::kTest, {3});
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = rng.below(200);
    std::vector<double> g(n);
    for (double& v : g) v = rng.normal() * std::exp(10.0 * rng.normal());
    const BitMask m = random_mask(rng, n, rng.uniform());
    const SplitResult s = split_by_mask(g, m);
    ASSERT_NO_THROW(s.sent.validate());
    std::vector<double> back = densify(s.sent);
    for (std::size_t i = 0; i < n; ++i) back[i] += s.kept[i];
    ASSERT_EQ(back, g);
    ASSERT_EQ(sparsify(densify(s.sent), m), s.sent);
  }
}

TEST(SparseGradient, ValidateRejects) {
  SparseGradient unsorted{{2, 1}, {1.0, 1.0}, 4};
  EXPECT_EQ(kind_of([&] { unsorted.validate(); }), ErrorKind::kStructural);
  SparseGradient out_of_range{{4}, {1.0}, 4};
  EXPECT_EQ(kind_of([&] { out_of_range.validate(); }), ErrorKind::kStructural);
  SparseGradient ragged{{0, 1}, {1.0}, 4};
  EXPECT_EQ(kind_of([&] { ragged.validate(); }), ErrorKind::kStructural);
}

TEST(CompressionRatio, Examples) {
  const WireFormat wire;
  EXPECT_DOUBLE_EQ(compression_ratio(25, 0, wire, 4000), 20.0);
  const double full = compression_ratio(1000, 0, wire, 4000);
  EXPECT_LT(full, 1.0);
  EXPECT_TRUE(is_densified(full));
  EXPECT_FALSE(is_densified(20.0));
  EXPECT_EQ(compression_ratio(0, 0, wire, 4000),
            std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(compression_ratio(0, 125, wire, 4000), 32.0);
  EXPECT_EQ(kind_of([&] { compression_ratio(1, 0, wire, 0); }), ErrorKind::kStructural);
}

TEST(CompressionRatio, StrictlyDecreasingInNnz) {
  const WireFormat wire{4, 4};
  double prev = compression_ratio(0, 13, wire, 40000);
  for (std::size_t nnz = 1; nnz <= 10000; ++nnz) {
    const double r = compression_ratio(nnz, 13, wire, 40000);
    ASSERT_LT(r, prev);
    prev = r;
  }
}

}  // namespace
}  // namespace iwp
