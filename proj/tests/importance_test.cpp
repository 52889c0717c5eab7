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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "iwp/error.hpp"
#include "iwp/rng.hpp"

namespace iwp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

ThresholdPolicy policy(double alpha, double beta, double c = 1.0) {
  ThresholdPolicy p;
  p.alpha = constant_schedule(alpha);
  p.beta = constant_schedule(beta);
  p.ratio_cutoff = c;
  p.warmup_epochs = 0;
  return p;
}

LayerStats with_ratio(double r) { return {1.0, r, r}; }

TEST(LayerLayout, ContiguityAndLookup) {
  const LayerLayout l = LayerLayout::from_lengths({{"a", 3}, {"b", 1}, {"c", 4}});
  EXPECT_EQ(l.size(), 3u);
  EXPECT_EQ(l.total(), 8u);
  const std::vector<std::size_t> want{0, 0, 0, 1, 2, 2, 2, 2};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(l.layer_of(i), want[i]);

  EXPECT_EQ(kind_of([] { LayerLayout({{"a", 0, 2}, {"b", 3, 1}}); }),
            ErrorKind::kStructural);
  EXPECT_EQ(kind_of([] { LayerLayout({{"a", 1, 2}}); }), ErrorKind::kStructural);
  EXPECT_EQ(kind_of([] { LayerLayout({{"a", 0, 2}, {"b", 2, 0}}); }),
            ErrorKind::kStructural);
}

TEST(ComputeImportance, Examples) {
  const std::vector<double> g{0.2, -0.1, 0.0};
  const std::vector<double> w{2.0, 0.5, 1.0};
  const ImportanceVector imp = compute_importance(g, w, 1e-8);
  EXPECT_DOUBLE_EQ(imp[0], 0.1);
  EXPECT_DOUBLE_EQ(imp[1], 0.2);
  EXPECT_EQ(imp[2], 0.0);

  const std::vector<double> g1{0.3};
  const std::vector<double> w1{0.0};
  EXPECT_DOUBLE_EQ(compute_importance(g1, w1)[0], 3.0e7);
}

TEST(ComputeImportance, Errors) {
  const std::vector<double> two{1.0, 2.0};
  const std::vector<double> three{1.0, 2.0, 3.0};
  EXPECT_EQ(kind_of([&] { compute_importance(two, three); }), ErrorKind::kStructural);

  const std::vector<double> bad{1.0, std::nan(""), 3.0};
  try {
    compute_importance(bad, three);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInput);
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
  const std::vector<double> winf{1.0, 1.0, kInf};
  EXPECT_EQ(kind_of([&] { compute_importance(three, winf); }), ErrorKind::kInput);
}

TEST(ComputeImportance, MatchesScalarOracle) {
  Stream rng(21, StreamDomain::kTest, {1});
  std::vector<double> g(1000), w(1000);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = rng.normal();
    do {
      w[i] = rng.normal();
    } while (w[i] == 0.0);
  }
  const ImportanceVector imp = compute_importance(g, w);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double aw = w[i] < 0 ? -w[i] : w[i];
    const double ag = g[i] < 0 ? -g[i] : g[i];
    EXPECT_EQ(imp[i], ag / (aw > 1e-8 ? aw : 1e-8)) << i;
  }
}

TEST(ComputeImportance, ScaleCovariant) {
  Stream rng(22, StreamDomain::kTest, {1});
  std::vector<double> g(200), w(200);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = rng.normal();
    w[i] = 0.1 + rng.uniform();
  }
  const ImportanceVector base = compute_importance(g, w);
  for (double c : {0.5, 2.0, 4.0, 0.125}) {
    std::vector<double> gc(g);
    for (double& v : gc) v *= c;
    const ImportanceVector scaled = compute_importance(gc, w);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(scaled[i], c * base[i]);
  }
}

TEST(LayerStats, Examples) {
  const std::vector<double> flat{0.1, 0.1, 0.1};
  LayerStats s = layer_stats(flat);
  EXPECT_DOUBLE_EQ(s.mean, 0.1);
  EXPECT_NEAR(s.variance, 0.0, 1e-18);
  EXPECT_NEAR(s.ratio, 0.0, 1e-15);

  const std::vector<double> two{0.0, 0.2};
  s = layer_stats(two);
  EXPECT_DOUBLE_EQ(s.mean, 0.1);
  EXPECT_DOUBLE_EQ(s.variance, 0.01);
  EXPECT_DOUBLE_EQ(s.ratio, 0.1);

  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_EQ(layer_stats(zeros).ratio, 0.0);
  EXPECT_EQ(kind_of([] { layer_stats(std::vector<double>{}); }), ErrorKind::kStructural);
}

TEST(LayerStats, TwoPassOracle) {
  Stream rng(23, StreamDomain::kTest, {1});
  std::vector<double> scores(500);
  for (double& v : scores) v = std::exp(rng.normal());
  long double sum = 0;
  for (double v : scores) sum += v;
  const long double mean = sum / scores.size();
  long double ss = 0;
  for (double v : scores) ss += (v - mean) * (v - mean);
  const long double var = ss / scores.size();

  const LayerStats s = layer_stats(scores);
  EXPECT_NEAR(s.mean, static_cast<double>(mean), 1e-12 * static_cast<double>(mean));
  EXPECT_NEAR(s.variance, static_cast<double>(var), 1e-12 * static_cast<double>(var));
  EXPECT_DOUBLE_EQ(s.ratio, s.variance / s.mean);
}

TEST(LayerStats, PerLayerView) {
  const LayerLayout l = LayerLayout::from_lengths({{"a", 2}, {"b", 2}});
  const ImportanceVector imp({0.0, 0.2, 0.1, 0.1});
  EXPECT_DOUBLE_EQ(layer_stats(imp, l, 0).variance, 0.01);
  EXPECT_NEAR(layer_stats(imp, l, 1).variance, 0.0, 1e-18);
  EXPECT_EQ(kind_of([&] { layer_stats(imp, l, 2); }), ErrorKind::kStructural);
}

TEST(LayerThreshold, Branches) {
  EXPECT_NEAR(layer_threshold(policy(0.01, 0.002), 0, with_ratio(2.0)), 0.014, 1e-15);
  EXPECT_NEAR(layer_threshold(policy(0.01, 0.002), 0, with_ratio(0.5)), 0.009, 1e-15);
  // r == C takes the minus branch.
  EXPECT_NEAR(layer_threshold(policy(0.01, 0.002), 0, with_ratio(1.0)), 0.008, 1e-15);
  EXPECT_EQ(layer_threshold(policy(0.001, 0.1), 0, with_ratio(0.5)), 1e-6);
}

TEST(LayerThreshold, WarmupAndClamp) {
  ThresholdPolicy p = policy(0.05, 0.01);
  p.warmup_epochs = 2;
  EXPECT_EQ(layer_threshold(p, 0, with_ratio(3.0)), 0.0);
  EXPECT_EQ(layer_threshold(p, 1, with_ratio(3.0)), 0.0);
  EXPECT_NEAR(layer_threshold(p, 2, with_ratio(3.0)), 0.08, 1e-15);
  p.thr_max = 0.06;
  EXPECT_EQ(layer_threshold(p, 2, with_ratio(3.0)), 0.06);
}

TEST(LayerThreshold, ScheduleAndScale) {
  ThresholdPolicy p = policy(0.0, 0.0);
  p.alpha = {{0, 1, 0.01}, {2, 4, 0.05}};
  p.scale = {{3, 4, 0.5}};
  EXPECT_DOUBLE_EQ(layer_threshold(p, 1, with_ratio(0)), 0.01);
  EXPECT_DOUBLE_EQ(layer_threshold(p, 2, with_ratio(0)), 0.05);
  EXPECT_DOUBLE_EQ(layer_threshold(p, 3, with_ratio(0)), 0.025);
  EXPECT_EQ(kind_of([&] { layer_threshold(p, 5, with_ratio(0)); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { p.validate(6); }), ErrorKind::kConfig);
  EXPECT_NO_THROW(p.validate(5));
}

TEST(LayerThreshold, PiecewiseMonotoneAndBounded) {
  ThresholdPolicy p = policy(0.02, 0.004, 1.5);
  p.thr_max = 0.05;
  double prev_hi = -kInf;
  double prev_lo = kInf;
  for (int k = 0; k <= 3000; ++k) {
    const double r = k * 0.005;
    const double thr = layer_threshold(p, 0, with_ratio(r));
    ASSERT_GE(thr, p.thr_min);
    ASSERT_LE(thr, p.thr_max);
    if (r > 1.5) {
      ASSERT_GE(thr, prev_hi);
      prev_hi = thr;
    } else {
      ASSERT_LE(thr, prev_lo);
      prev_lo = thr;
    }
  }
}

TEST(ThresholdPolicy, ValidateFields) {
  ThresholdPolicy p = policy(0.01, 0.0);
  p.thr_min = 0.0;
  EXPECT_EQ(kind_of([&] { p.validate(1); }), ErrorKind::kConfig);
  p = policy(0.01, 0.0);
  p.thr_max = 1e-7;
  EXPECT_EQ(kind_of([&] { p.validate(1); }), ErrorKind::kConfig);
  p = policy(0.01, 0.0);
  p.ratio_cutoff = 0.0;
  EXPECT_EQ(kind_of([&] { p.validate(1); }), ErrorKind::kConfig);
}

BitMask single_mask(double score, double thr, std::uint64_t step, bool prob = true) {
  const LayerLayout l = LayerLayout::single(1);
  const std::vector<double> thrs{thr};
  return build_local_mask(ImportanceVector({score}), l, thrs, {5, 0, step}, prob);
}

TEST(BuildLocalMask, DeterministicCases) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    EXPECT_TRUE(single_mask(0.02, 0.01, s).test(0));
    EXPECT_TRUE(single_mask(0.01, 0.01, s).test(0));
    EXPECT_FALSE(single_mask(0.0, 0.01, s).test(0));
    EXPECT_FALSE(single_mask(0.009, 0.01, s, false).test(0));
  }
}

TEST(BuildLocalMask, ZeroAndInfiniteThreshold) {
  const LayerLayout l = LayerLayout::from_lengths({{"a", 50}, {"b", 70}});
  std::vector<double> scores(120);
  Stream rng(31, StreamDomain::kTest, {1});
  for (double& v : scores) v = rng.uniform();
  scores[3] = 0.0;
  const ImportanceVector imp(scores);
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_EQ(build_local_mask(imp, l, zero, {1, 2, 3}).popcount(), 120u);
  const std::vector<double> inf{kInf, kInf};
  EXPECT_EQ(build_local_mask(imp, l, inf, {1, 2, 3}).popcount(), 0u);
}

TEST(BuildLocalMask, InclusionFrequency) {
  // Each trial uses a fresh (node, step) stream, as in training.
  for (double p : {0.1, 0.5, 0.7, 0.9}) {
    const LayerLayout l = LayerLayout::single(1);
    const std::vector<double> thrs{0.01};
    const ImportanceVector imp({p * 0.01});
    int hits = 0;
    constexpr int kTrials = 10000;
    for (int t = 0; t < kTrials; ++t) {
      hits += build_local_mask(imp, l, thrs, {77, static_cast<std::uint64_t>(t % 8),
                                              static_cast<std::uint64_t>(t / 8)})
                  .test(0);
    }
    const double sigma = std::sqrt(p * (1 - p) / kTrials);
    EXPECT_NEAR(hits / double(kTrials), p, 3 * sigma) << p;
  }
}

TEST(BuildLocalMask, Reproducible) {
  const LayerLayout l = LayerLayout::from_lengths({{"a", 300}, {"b", 700}});
  std::vector<double> scores(1000);
  Stream rng(32, StreamDomain::kTest, {1});
  for (double& v : scores) v = 0.02 * rng.uniform();
  const ImportanceVector imp(scores);
  const std::vector<double> thrs{0.01, 0.015};
  const BitMask a = build_local_mask(imp, l, thrs, {9, 1, 4});
  EXPECT_EQ(a, build_local_mask(imp, l, thrs, {9, 1, 4}));
  EXPECT_NE(a, build_local_mask(imp, l, thrs, {9, 2, 4}));
  EXPECT_NE(a, build_local_mask(imp, l, thrs, {9, 1, 5}));
}

TEST(BuildLocalMask, Errors) {
  const LayerLayout l = LayerLayout::single(2);
  const ImportanceVector imp({0.1, 0.2});
  const std::vector<double> neg{-0.1};
  EXPECT_EQ(kind_of([&] { build_local_mask(imp, l, neg, {}); }), ErrorKind::kInput);
  const std::vector<double> two{0.1, 0.1};
  EXPECT_EQ(kind_of([&] { build_local_mask(imp, l, two, {}); }), ErrorKind::kStructural);
}

TEST(ImportanceVector, RejectsBadScores) {
  EXPECT_EQ(kind_of([] { ImportanceVector({-1.0}); }), ErrorKind::kInput);
  EXPECT_EQ(kind_of([] { ImportanceVector({kInf}); }), ErrorKind::kInput);
}

}  // namespace
}  // namespace iwp
