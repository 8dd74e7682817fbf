// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "rdp_oracle.hpp"
#include "test_util.hpp"

namespace psg {
namespace {

LayerGradients<double> flat(std::vector<double> v) {
  const std::size_t n = v.size();
  return {Tensor<double>({n}, std::move(v))};
}

TEST(Clip, ScalesOnlyLargeGradients) {
  const auto c = clip_per_example(flat({0.3, 0.4}), 0.1);
  EXPECT_NEAR(c[0][0], 0.06, 1e-15);
  EXPECT_NEAR(c[0][1], 0.08, 1e-15);
  const auto small = flat({0.03, 0.04});
  EXPECT_EQ(clip_per_example(small, 0.1)[0], small[0]);
  const auto zero = flat({0.0, 0.0});
  EXPECT_EQ(clip_per_example(zero, 0.1)[0], zero[0]);
  EXPECT_THROW(clip_per_example(zero, 0.0), InvalidArgument);
}

TEST(Clip, UsesGlobalNormAcrossLayers) {
  LayerGradients<double> g = {Tensor<double>({1}, {3.0}), Tensor<double>({1}, {4.0})};
  const auto c = clip_per_example(g, 1.0);
  EXPECT_NEAR(c[0][0], 0.6, 1e-15);
  EXPECT_NEAR(c[1][0], 0.8, 1e-15);
}

TEST(Sanitize, NoiselessMeanAndEmptyBatch) {
  const auto like = flat({0, 0});
  std::vector<LayerGradients<double>> per = {flat({0.01, 0.02}), flat({0.01, 0.02}),
                                             flat({0.01, 0.02})};
  Rng rng(1);
  const auto m = sanitize_mean<double>(per, like, 0.1, 0.0, 3, rng);
  EXPECT_NEAR(m[0][0], 0.01, 1e-17);
  EXPECT_NEAR(m[0][1], 0.02, 1e-17);
  const auto e = sanitize_mean<double>({}, like, 0.1, 0.0, 256, rng);
  EXPECT_EQ(e[0][0], 0.0);
  EXPECT_EQ(e[0][1], 0.0);
  EXPECT_THROW(sanitize_mean<double>(per, like, 0.1, 1.0, 0, rng), InvalidArgument);
}

TEST(Sanitize, SeededAndNoiseVarianceMatches) {
  const std::size_t n = 100000;
  const LayerGradients<double> like = {Tensor<double>({n})};
  Rng a(42), b(42);
  const auto x = sanitize_mean<double>({}, like, 0.5, 2.0, 1, a);
  const auto y = sanitize_mean<double>({}, like, 0.5, 2.0, 1, b);
  EXPECT_EQ(x[0], y[0]);
  double s = 0, ss = 0;
  for (double v : x[0].data()) {
    s += v;
    ss += v * v;
  }
  const double mean = s / n, var = ss / n - mean * mean;
  EXPECT_NEAR(var, 1.0, 0.05);  // sigma^2 C^2 = 4 * 0.25
  // lag-1 correlation of the draws is near zero
  double c = 0;
  for (std::size_t i = 1; i < n; ++i) c += (x[0][i] - mean) * (x[0][i - 1] - mean);
  EXPECT_LT(std::abs(c / (n - 1) / var), 5.0 / std::sqrt(double(n)));
}

TEST(Sanitizer, CountsStepsAndFeedsAccountant) {
  AccountantState acc;
  GaussianSanitizer san(0.1, 1.0, 4, 0.01, false, &acc);
  Rng rng(3);
  const auto like = flat({0, 0});
  for (int i = 0; i < 5; ++i) san.sanitize_sum(zeros_like(like), 0, rng);
  EXPECT_EQ(san.events(), 5);
  EXPECT_EQ(acc.steps_consumed, 5);
  EXPECT_EQ(acc, accumulate(AccountantState{}, 0.01, 1.0, 5));
  EXPECT_THROW(GaussianSanitizer(0.1, 1.0, 4, 0.01, false, nullptr), InvalidArgument);
}

TEST(ClassicalGaussian, FormulaAndScaling) {
  const double s = classical_gaussian_sigma(1e-5, 1.0, 1.0);
  EXPECT_NEAR(s, std::sqrt(2.0 * std::log(125000.0)), 1e-12);
  EXPECT_NEAR(s, 4.8448, 1e-4);
  EXPECT_NEAR(classical_gaussian_sigma(1e-5, 2.0, 1.0), 2 * s, 1e-12);
  EXPECT_NEAR(classical_gaussian_sigma(1e-5, 1.0, 2.0), s / 2, 1e-12);
  EXPECT_THROW(classical_gaussian_sigma(0.0, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(classical_gaussian_sigma(1e-5, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(classical_gaussian_sigma(1e-5, 1.0, -1.0), InvalidArgument);
}

TEST(SgmRdp, FullBatchIsGaussian) {
  EXPECT_NEAR(sgm_rdp(1.0, 2.0, 8), 1.0, 1e-15);
  for (double s : {0.5, 1.0, 2.0, 5.0}) {
    for (int a = 2; a <= 64; ++a) EXPECT_NEAR(sgm_rdp(1.0, s, a), a / (2 * s * s), 1e-9);
  }
}

TEST(SgmRdp, EdgeCases) {
  EXPECT_EQ(sgm_rdp(0.0, 1.0, 8), 0.0);
  EXPECT_EQ(sgm_rdp(0.0, 0.0, 8), 0.0);
  EXPECT_THROW(sgm_rdp(0.1, 0.0, 8), InfinitePrivacyCost);
  EXPECT_THROW(sgm_rdp(1.5, 1.0, 8), InvalidArgument);
  EXPECT_THROW(sgm_rdp(0.1, 1.0, 1), InvalidArgument);
}

TEST(SgmRdp, MatchesQuadratureOracle) {
  for (int a : {2, 4, 8, 16, 32, 64}) {
    const double ref = testing::rdp_oracle(0.01, 2.0, a);
    EXPECT_NEAR(sgm_rdp(0.01, 2.0, a) / ref, 1.0, 1e-6) << "alpha " << a;
  }
}

TEST(SgmRdp, Monotone) {
  for (int a = 2; a < 64; ++a) {
    EXPECT_LE(sgm_rdp(0.02, 1.5, a), sgm_rdp(0.02, 1.5, a + 1));
    EXPECT_LE(sgm_rdp(0.02, 1.5, a), sgm_rdp(0.03, 1.5, a));
    EXPECT_GE(sgm_rdp(0.02, 1.5, a), sgm_rdp(0.02, 1.6, a));
  }
}

TEST(Accountant, AdditiveAndExactCounts) {
  const auto a = accumulate(accumulate(AccountantState{}, 0.01, 1.1, 50), 0.01, 1.1, 50);
  const auto b = accumulate(AccountantState{}, 0.01, 1.1, 100);
  for (std::size_t k = 0; k < a.orders.size(); ++k) {
    EXPECT_NEAR(a.rdp_eps[k], b.rdp_eps[k], 1e-12 * b.rdp_eps[k]);
  }
  EXPECT_EQ(a.steps_consumed, 100);
  EXPECT_EQ(accumulate(b, 0.01, 1.1, 0), b);
  EXPECT_EQ(accumulate(AccountantState{}, 256.0 / 60000, 1.0, 1000L * 20 * 10).steps_consumed,
            200000);
  EXPECT_THROW(AccountantState::with_orders({}), InvalidArgument);
  EXPECT_THROW(AccountantState::with_orders({3, 2}), InvalidArgument);
}

TEST(RdpToDp, ArithmeticCases) {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  auto s = AccountantState::with_orders(orders);
  const auto dp = rdp_to_dp(s, 1e-5);
  EXPECT_NEAR(dp.epsilon, std::log(1e5) / 63, 1e-12);
  EXPECT_NEAR(dp.epsilon, 0.18275, 1e-5);
  EXPECT_EQ(dp.best_order, 64);

  auto one = AccountantState::with_orders({2});
  one.rdp_eps = {1.0};
  EXPECT_NEAR(rdp_to_dp(one, 1e-5).epsilon, 1 + std::log(1e5), 1e-12);
  EXPECT_NEAR(rdp_to_dp(one, 1e-5).epsilon, 12.5129, 1e-4);

  auto big = accumulate(s, 0.01, 1.0, 100);
  auto bigger = big;
  for (auto& e : bigger.rdp_eps) e *= 1.5;
  EXPECT_GT(rdp_to_dp(bigger, 1e-5).epsilon, rdp_to_dp(big, 1e-5).epsilon);
  EXPECT_THROW(rdp_to_dp(s, 1.0), InvalidArgument);
}

TEST(Calibrate, RoundtripAndMonotonicity) {
  const double q = 256.0 / 60000;
  for (double eps : {1.0, 10.0}) {
    const double sigma = calibrate_noise(eps, 1e-5, q, 20000);
    const double back = composed_epsilon(sigma, q, 20000, 1e-5, default_orders());
    EXPECT_LE(back, eps);
    EXPECT_LE(eps - back, 1e-3);
  }
  EXPECT_GE(calibrate_noise(1.0, 1e-5, q, 20000), calibrate_noise(2.0, 1e-5, q, 20000));
  EXPECT_GE(calibrate_noise(1.0, 1e-5, q, 20000), calibrate_noise(1.0, 1e-5, q, 10000));
  EXPECT_THROW(calibrate_noise(1.0, 1e-5, q, 0), InvalidArgument);
  EXPECT_THROW(calibrate_noise(1e-6, 1e-5, 1.0, 1000000), PrivacyInfeasible);
}

TEST(Sensitivity, ReplacementAndAddRemoveBounds) {
  Rng rng(8);
  const double C = 0.1;
  const LayerGradients<double> like = {Tensor<double>({3}), Tensor<double>({2, 2})};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LayerGradients<double>> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(testing::random_like(like, rng, 0.2));
    const auto base = clipped_sum<double>(batch, like, C);
    auto other = batch;
    other[trial % 8] = testing::random_like(like, rng, 5.0);
    auto diff = clipped_sum<double>(other, like, C);
    list_axpy(diff, base, -1.0);
    EXPECT_LE(global_norm(diff), 2 * C + 1e-12);
    auto fewer = batch;
    fewer.pop_back();
    auto d2 = clipped_sum<double>(fewer, like, C);
    list_axpy(d2, base, -1.0);
    EXPECT_LE(global_norm(d2), C + 1e-12);
  }
}

TEST(AccountantJson, Roundtrip) {
  const auto s = accumulate(AccountantState{}, 0.01, 1.3, 1234);
  const auto j = accountant_to_json(s, 1e-5, 0.01, 1.3);
  const auto back = accountant_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back, s);
  EXPECT_EQ(j["steps"], 1234);
  EXPECT_NEAR(j["epsilon"].get<double>(), rdp_to_dp(s, 1e-5).epsilon, 1e-15);
  EXPECT_THROW(accountant_from_json(nlohmann::json::object()), FormatError);
}

}  // namespace
}  // namespace psg
