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

#include "test_util.hpp"

namespace psg {
namespace {

using testing::random_like;
using testing::random_tensor;
using testing::relative_error;

TEST(Cosine, SingleRowCases) {
  const Tensor<double> e1({2}, {1, 0}), e2({2}, {0, 1}), m1({2}, {-1, 0});
  EXPECT_NEAR(layer_cosine_distance(e1, e2), 1.0, 1e-15);
  EXPECT_NEAR(layer_cosine_distance(e1, m1), 2.0, 1e-15);
  EXPECT_NEAR(layer_cosine_distance(e1, e1), 0.0, 1e-15);
}

TEST(Cosine, RowsFollowLeadingAxis) {
  EXPECT_EQ(cosine_rows({7, 3, 3, 3}), 7u);
  EXPECT_EQ(cosine_rows({5, 4}), 5u);
  EXPECT_EQ(cosine_rows({9}), 1u);
  const Tensor<double> a({2, 2}, {1, 0, 0, 1}), b({2, 2}, {1, 0, 0, -1});
  EXPECT_NEAR(layer_cosine_distance(a, b), 2.0, 1e-15);
}

TEST(Cosine, ZeroRowContributesOneWithNoGradient) {
  const Tensor<double> a({2, 2}, {0, 0, 1, 1}), b({2, 2}, {1, 2, 1, 1});
  Tensor<double> d;
  EXPECT_NEAR(layer_cosine_distance(a, b, &d), 1.0, 1e-15);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.0);
  EXPECT_THROW(layer_cosine_distance(a, Tensor<double>({4})), ShapeError);
}

TEST(Cosine, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  const auto a = random_tensor<double>({3, 5}, rng), b = random_tensor<double>({3, 5}, rng);
  Tensor<double> d;
  layer_cosine_distance(a, b, &d);
  const auto num = testing::numeric_gradient(
      {a}, [&](const TensorList<double>& x) { return layer_cosine_distance(x[0], b); });
  EXPECT_LE(relative_error({d}, num), 1e-8);
}

TEST(MatchingLoss, IdentityNegationAndScale) {
  Rng rng(1);
  const TensorList<double> like = {Tensor<double>({4, 3}), Tensor<double>({4}),
                                   Tensor<double>({2, 2, 3, 3})};
  for (int t = 0; t < 100; ++t) {
    const auto g = random_like(like, rng);
    auto neg = g;
    list_scale(neg, -1.0);
    auto scaled = g;
    list_scale(scaled, 3.7);
    const auto h = random_like(like, rng);
    EXPECT_NEAR(matching_loss(g, g), 0.0, 1e-6);
    EXPECT_NEAR(matching_loss(g, neg), 2.0 * total_cosine_rows(like), 1e-6);
    EXPECT_NEAR(matching_loss(scaled, h), matching_loss(g, h), 1e-6);
    EXPECT_NEAR(matching_loss(h, scaled), matching_loss(h, g), 1e-6);
    EXPECT_LE(matching_loss(g, h), 2.0 * total_cosine_rows(like));
  }
  EXPECT_THROW(matching_loss(like, TensorList<double>{Tensor<double>({4, 3})}), ShapeError);
}

class FeatureGradient : public ::testing::TestWithParam<ArchTag> {};

TEST_P(FeatureGradient, MatchesFiniteDifferencesThroughFullChain) {
  const Network net(testing::tiny_spec(GetParam()));
  for (uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(100 + seed);
    const auto theta = init_params<double>(net, seed);
    Shape shape{6};
    shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
    const auto x = random_tensor<double>(shape, rng);
    const std::vector<int> y = {0, 0, 1, 1, 2, 2};
    const auto real = random_like(theta, rng);
    const auto mg = matching_feature_grad(net, theta, x, y, real);
    EXPECT_NEAR(mg.loss, testing::matching_objective(net, theta, x, y, real), 1e-12);
    const auto num = testing::numeric_gradient({x}, [&](const TensorList<double>& v) {
      return testing::matching_objective(net, theta, v[0], y, real);
    });
    EXPECT_LE(relative_error({mg.features_grad}, num), 1e-5) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Archs, FeatureGradient,
                         ::testing::Values(ArchTag::kConvNet, ArchTag::kLeNet, ArchTag::kMlp),
                         [](const auto& info) { return arch_name(info.param); });

TEST(FeatureGradient, RealGradientScaleDoesNotChangeUpdate) {
  const Network net(testing::tiny_spec(ArchTag::kMlp));
  Rng rng(3);
  const auto theta = init_params<double>(net, 1);
  const auto x = random_tensor<double>({4, 6}, rng);
  const std::vector<int> y = {0, 1, 2, 0};
  const auto real = random_like(theta, rng);
  auto scaled = real;
  list_scale(scaled, 250.0);
  const auto a = matching_feature_grad(net, theta, x, y, real);
  const auto b = matching_feature_grad(net, theta, x, y, scaled);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  EXPECT_LE(relative_error({a.features_grad}, {b.features_grad}), 1e-12);
}

}  // namespace
}  // namespace psg
