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

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace iwp {

// Every random decision in the simulator draws from a stream keyed by
// (seed, domain, ...). Keys are independent of evaluation order, so nodes and
// layers can be processed in any order without changing results.
enum class StreamDomain : std::uint64_t {
  kLocalMask = 1,
  kNodeSelection = 2,
  kBatch = 3,
  kData = 4,
  kInit = 5,
  kTopK = 6,
  kTest = 99,
};

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, StreamDomain domain,
                                std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(domain)));
  for (std::uint64_t p : parts) h = mix64(h ^ p);
  return h;
}

/// Seeded random stream. Only the raw 64-bit engine output is used, so the
/// sequence is identical across standard library implementations.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : engine_(key) {}
  Stream(std::uint64_t seed, StreamDomain domain,
         std::initializer_list<std::uint64_t> parts)
      : engine_(stream_key(seed, domain, parts)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased (rejection). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace iwp
