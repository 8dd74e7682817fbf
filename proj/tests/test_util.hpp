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

#ifndef PSG_TESTS_TEST_UTIL_HPP_
#define PSG_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "psg/psg.hpp"

namespace psg::testing {

inline std::string data_path(const std::string& name) {
  return std::string(PSG_TEST_DATA) + "/" + name;
}

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(shape);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.data()) v = T(n(rng));
  return t;
}

template <typename T>
TensorList<T> random_like(const TensorList<T>& like, Rng& rng,
                          double scale = 1.0) {
  TensorList<T> out;
  for (const auto& t : like) out.push_back(random_tensor<T>(t.shape(), rng, scale));
  return out;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t L, Rng& rng) {
  std::uniform_int_distribution<int> u(0, static_cast<int>(L) - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

// Central differences of f with respect to every entry of `params`.
inline TensorList<double> numeric_gradient(
    TensorList<double> params, const std::function<double(const TensorList<double>&)>& f,
    double h = 1e-6) {
  TensorList<double> g = zeros_like(params);
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (std::size_t i = 0; i < params[l].size(); ++i) {
      const double keep = params[l][i];
      params[l][i] = keep + h;
      const double up = f(params);
      params[l][i] = keep - h;
      const double down = f(params);
      params[l][i] = keep;
      g[l][i] = (up - down) / (2 * h);
    }
  }
  return g;
}

// Central differences of f at up to `per_tensor` randomly chosen entries of
// each tensor; returns the relative error (as below) of `analytic` against
// them over the chosen entries only. Tensors at or under the cap are covered
// completely.
// Coordinates where the one-sided slopes disagree straddle a ReLU or max-pool
// kink; those are skipped and counted in `kinks` when it is given.
inline double sampled_gradient_error(
    TensorList<double> params, const TensorList<double>& analytic,
    const std::function<double(const TensorList<double>&)>& f,
    std::size_t per_tensor, Rng& rng, double h = 1e-6, std::size_t* kinks = nullptr) {
  double diff = 0, na = 0, nn = 0;
  const double mid = kinks ? f(params) : 0.0;
  for (std::size_t l = 0; l < params.size(); ++l) {
    std::vector<std::size_t> idx(params[l].size());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_tensor);
    }
    for (std::size_t i : idx) {
      const double keep = params[l][i];
      params[l][i] = keep + h;
      const double up = f(params);
      params[l][i] = keep - h;
      const double down = f(params);
      params[l][i] = keep;
      if (kinks) {
        const double right = (up - mid) / h, left = (mid - down) / h;
        if (std::abs(right - left) > 1e-4 * std::max(1.0, std::abs(right))) {
          ++*kinks;
          continue;
        }
      }
      const double num = (up - down) / (2 * h), a = analytic[l][i];
      diff += (a - num) * (a - num);
      na += a * a;
      nn += num * num;
    }
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom == 0 ? 0.0 : std::sqrt(diff) / denom;
}

// ||a - b|| / max(||a||, ||b||) over all entries; 0 when both vanish.
inline double relative_error(const TensorList<double>& a, const TensorList<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    for (std::size_t i = 0; i < a[l].size(); ++i) {
      diff += (a[l][i] - b[l][i]) * (a[l][i] - b[l][i]);
      na += a[l][i] * a[l][i];
      nb += b[l][i] * b[l][i];
    }
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0 ? 0.0 : std::sqrt(diff) / denom;
}

// Loss of the gradient-matching objective at synthetic features `x`.
inline double matching_objective(const Network& net, const NetworkParams<double>& theta,
                                 const Tensor<double>& x, const std::vector<int>& y,
                                 const LayerGradients<double>& real_grad) {
  auto lg = loss_and_grad(theta, net, x, y);
  return matching_loss(lg.grads, real_grad);
}

// Specs small enough for exhaustive finite differences.
inline NetworkSpec tiny_spec(ArchTag arch) {
  NetworkSpec s;
  s.arch = arch;
  s.num_classes = 3;
  switch (arch) {
    case ArchTag::kConvNet:
      s.input_shape = {2, 8, 8};
      s.width = 3;
      break;
    case ArchTag::kLeNet:
      s.input_shape = {1, 12, 12};
      break;
    case ArchTag::kMlp:
    case ArchTag::kGenerator:
      s.input_shape = {6};
      s.hidden = {5, 4};
      break;
  }
  return s;
}

// Linearly separable check by the perceptron algorithm: returns true when
// an epoch passes with no mistakes (one-vs-rest weight vectors with bias).
inline bool perceptron_separable(const LabeledDataset& ds, int max_epochs = 1000) {
  const std::size_t d = ds.features.row_size(), L = ds.num_classes;
  std::vector<double> w(L * (d + 1), 0.0);
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    std::size_t mistakes = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto x = ds.features.row(i);
      std::size_t best = 0;
      double best_s = -1e300;
      for (std::size_t c = 0; c < L; ++c) {
        double s = w[c * (d + 1) + d];
        for (std::size_t k = 0; k < d; ++k) s += w[c * (d + 1) + k] * x[k];
        if (s > best_s) {
          best_s = s;
          best = c;
        }
      }
      const auto y = static_cast<std::size_t>(ds.labels[i]);
      if (best != y) {
        ++mistakes;
        for (std::size_t k = 0; k < d; ++k) {
          w[y * (d + 1) + k] += x[k];
          w[best * (d + 1) + k] -= x[k];
        }
        w[y * (d + 1) + d] += 1;
        w[best * (d + 1) + d] -= 1;
      }
    }
    if (mistakes == 0) return true;
  }
  return false;
}

inline LabeledDataset blobs(const std::string& name, bool train) {
  return load_csv(data_path(name + (train ? "-train.csv" : "-test.csv")),
                  train ? Provenance::kRealTrain : Provenance::kRealTest);
}

// A few hundred matching steps on a small MLP; runs in well under a second.
inline DistillConfig small_distill(bool non_private) {
  DistillConfig c;
  c.runs = 2;
  c.outer_iters = 2;
  c.inner_iters = 3;
  c.batches_per_iter = 2;
  c.batch_size = 64;
  c.spc = 2;
  c.arch = ArchTag::kMlp;
  c.hidden = {16};
  c.seed = 11;
  c.privacy.non_private = non_private;
  if (!non_private) c.privacy.epsilon_target = 5.0;
  return c;
}

}  // namespace psg::testing

#endif  // PSG_TESTS_TEST_UTIL_HPP_
