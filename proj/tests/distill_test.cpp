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

#include "test_util.hpp"

namespace psg {
namespace {

using testing::blobs;
using testing::small_distill;

bool same_list(const TensorList<float>& a, const TensorList<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape() || a[i].data() != b[i].data()) return false;
  }
  return true;
}

nlohmann::json without_timing(const DistillReport& r) {
  auto j = r.to_json();
  j.erase("wall_time_s");
  return j;
}

TEST(DefaultSchedule, TableAndFallback) {
  using P = std::pair<std::size_t, std::size_t>;
  EXPECT_EQ(default_outer_inner(1), P(1, 1));
  EXPECT_EQ(default_outer_inner(10), P(10, 50));
  EXPECT_EQ(default_outer_inner(20), P(20, 25));
  EXPECT_EQ(default_outer_inner(50), P(50, 10));
  EXPECT_EQ(default_outer_inner(5), P(10, 50));
  EXPECT_EQ(default_outer_inner(100), P(50, 10));
}

TEST(Distill, SingleStepSchedule) {
  const auto data = blobs("blobs3", true);
  auto cfg = small_distill(true);
  cfg.runs = cfg.outer_iters = cfg.batches_per_iter = 1;
  cfg.inner_iters = 0;
  const auto r = psg_train(data, cfg);
  EXPECT_EQ(r.report.steps, 1);
  EXPECT_EQ(r.report.loss_curve.size(), 1u);
  EXPECT_EQ(r.set.size(), cfg.spc * data.num_classes);
}

TEST(Distill, PhasesFreezeTheOtherSide) {
  const auto data = blobs("blobs3", true);
  const auto cfg = small_distill(false);
  NetworkParams<float> theta_before;
  Tensor<float> s_before;
  int matches = 0, inners = 0, moved_s = 0, moved_theta = 0;
  DistillObserver obs;
  obs.on_phase = [&](DistillPhase ph, const NetworkParams<float>& theta,
                     const Tensor<float>& s) {
    switch (ph) {
      case DistillPhase::kBeforeMatch:
        theta_before = theta;
        s_before = s;
        break;
      case DistillPhase::kAfterMatch:
        ++matches;
        EXPECT_TRUE(same_list(theta, theta_before));
        moved_s += s.data() != s_before.data();
        break;
      case DistillPhase::kBeforeInner:
        theta_before = theta;
        s_before = s;
        break;
      case DistillPhase::kAfterInner:
        ++inners;
        EXPECT_EQ(s.data(), s_before.data());
        moved_theta += !same_list(theta, theta_before);
        break;
    }
  };
  psg_train(data, cfg, &obs);
  const int expected = static_cast<int>(cfg.runs * cfg.outer_iters);
  EXPECT_EQ(matches, expected);
  EXPECT_EQ(inners, expected);
  EXPECT_EQ(moved_s, expected);
  EXPECT_EQ(moved_theta, expected);
}

TEST(Distill, LabelsFixedAndSeedDeterministic) {
  const auto data = blobs("blobs3", true);
  const auto cfg = small_distill(false);
  const auto a = psg_train(data, cfg);
  const auto b = psg_train(data, cfg);
  EXPECT_EQ(a.set.labels, balanced_labels(cfg.spc, data.num_classes));
  EXPECT_EQ(a.set.features.data(), b.set.features.data());
  EXPECT_EQ(a.accountant, b.accountant);
  EXPECT_EQ(without_timing(a.report), without_timing(b.report));
  auto other = cfg;
  other.seed = 12;
  EXPECT_NE(psg_train(data, other).set.features.data(), a.set.features.data());
}

TEST(Distill, ThreadCountDoesNotChangeOutput) {
  const auto data = blobs("blobs3", true);
  const auto cfg = small_distill(false);
  const int saved = max_threads();
  set_max_threads(1);
  const auto a = psg_train(data, cfg);
  set_max_threads(4);
  const auto b = psg_train(data, cfg);
  set_max_threads(saved);
  EXPECT_EQ(a.set.features.data(), b.set.features.data());
}

TEST(Distill, PrivateRunStaysWithinTarget) {
  const auto data = blobs("blobs3", true);
  const auto cfg = small_distill(false);
  const auto r = psg_train(data, cfg);
  ASSERT_TRUE(r.report.epsilon.has_value());
  EXPECT_LE(*r.report.epsilon, *cfg.privacy.epsilon_target + kCalibrationTol);
  EXPECT_EQ(r.report.steps, cfg.total_steps());
  EXPECT_EQ(r.accountant.steps_consumed, cfg.total_steps());
  EXPECT_DOUBLE_EQ(r.report.q, 64.0 / 600.0);
  ASSERT_EQ(r.report.epsilon_curve.size(), cfg.runs * cfg.outer_iters);
  for (std::size_t i = 1; i < r.report.epsilon_curve.size(); ++i) {
    EXPECT_GT(r.report.epsilon_curve[i], r.report.epsilon_curve[i - 1]);
  }
  EXPECT_NEAR(r.report.epsilon_curve.back(), *r.report.epsilon, 1e-12);
  const auto accounted =
      accumulate(AccountantState{}, r.report.q, r.report.sigma, cfg.total_steps());
  EXPECT_NEAR(rdp_to_dp(accounted, cfg.privacy.delta).epsilon, *r.report.epsilon,
              1e-9);
}

TEST(Distill, NonPrivateReportsNoEpsilon) {
  const auto data = blobs("blobs3", true);
  const auto r = psg_train(data, small_distill(true));
  EXPECT_FALSE(r.report.epsilon.has_value());
  EXPECT_TRUE(r.report.epsilon_curve.empty());
  EXPECT_EQ(r.accountant.steps_consumed, 0);
  const auto j = r.report.to_json();
  EXPECT_TRUE(j["epsilon"].is_null());
  EXPECT_TRUE(j["non_private"].get<bool>());
  EXPECT_EQ(j["steps"].get<long>(), small_distill(true).total_steps());
}

TEST(Distill, ExplicitSigmaOverTargetIsRefused) {
  const auto data = blobs("blobs3", true);
  auto cfg = small_distill(false);
  cfg.privacy.sigma = 0.3;
  cfg.privacy.epsilon_target = 0.5;
  EXPECT_THROW(psg_train(data, cfg), BudgetExhausted);
  cfg.privacy.sigma = 50.0;
  EXPECT_NO_THROW(psg_train(data, cfg));
}

TEST(Distill, RejectsSyntheticInputAndBadConfig) {
  auto data = blobs("blobs3", true);
  auto cfg = small_distill(true);
  auto bad = cfg;
  bad.runs = 0;
  EXPECT_THROW(psg_train(data, bad), InvalidArgument);
  bad = small_distill(false);
  bad.privacy.epsilon_target.reset();
  EXPECT_THROW(psg_train(data, bad), InvalidArgument);
  data.provenance = Provenance::kSynthetic;
  EXPECT_THROW(psg_train(data, cfg), ProvenanceError);
}

TEST(PerExampleSum, MatchesIndividualClippedGradients) {
  const auto data = blobs("blobs3", true);
  const Network net(classifier_spec(ArchTag::kMlp, {16}, 3, 0, {8}));
  const auto theta = init_params<float>(net, 2);
  std::vector<std::size_t> idx = {0, 5, 17, 300, 599, 42, 43, 44, 45, 46, 100};
  const double C = 0.05;
  const auto sum = per_example_gradient_sum(net, theta, data, idx, C, true);
  auto ref = zeros_like(theta);
  for (auto i : idx) {
    Tensor<float> x({1, 16});
    std::copy(data.features.row(i).begin(), data.features.row(i).end(),
              x.data().begin());
    const std::vector<int> y = {data.labels[i]};
    auto g = loss_and_grad(theta, net, x, y).grads;
    const double n = global_norm(g);
    list_axpy(ref, g, static_cast<float>(n > C ? C / n : 1.0));
  }
  for (std::size_t t = 0; t < ref.size(); ++t) {
    for (std::size_t k = 0; k < ref[t].size(); ++k) {
      EXPECT_NEAR(sum[t][k], ref[t][k], 1e-6);
    }
  }
}

}  // namespace
}  // namespace psg
