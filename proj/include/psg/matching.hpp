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

#ifndef PSG_MATCHING_HPP_
#define PSG_MATCHING_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "psg/dual.hpp"
#include "psg/error.hpp"
#include "psg/network.hpp"
#include "psg/tensor.hpp"

namespace psg {

// Rows with a norm below this contribute the constant 1 and no gradient.
inline constexpr double kZeroRowNorm = 1e-12;

// Number of rows a gradient tensor is split into for the cosine distance:
// the leading (output) axis for weights, one row for vectors.
inline std::size_t cosine_rows(const Shape& shape) {
  return shape.size() >= 2 ? shape[0] : 1;
}

// Layer-wise cosine distance sum_i (1 - <A_i, B_i> / (|A_i| |B_i|)) over the
// output rows of two same-shaped gradient tensors. When `dA` is non-null it
// receives d(distance)/dA.
template <typename T>
double layer_cosine_distance(const Tensor<T>& A, const Tensor<T>& B,
                             Tensor<T>* dA = nullptr) {
  if (A.shape() != B.shape()) {
    throw ShapeError("cosine distance: shape mismatch " +
                     shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  }
  const std::size_t rows = cosine_rows(A.shape());
  const std::size_t len = A.size() / rows;
  if (dA) *dA = Tensor<T>(A.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* a = A.data().data() + r * len;
    const T* b = B.data().data() + r * len;
    double aa = 0, bb = 0, ab = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
      aa += x * x;
      bb += y * y;
      ab += x * y;
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    if (na < kZeroRowNorm || nb < kZeroRowNorm) {
      total += 1.0;
      continue;
    }
    const double cos = ab / (na * nb);
    total += 1.0 - cos;
    if (dA) {
      // d(1 - cos)/da = -(b / (|a||b|) - cos * a / |a|^2)
      T* g = dA->data().data() + r * len;
      const double inv_ab = 1.0 / (na * nb), c_aa = cos / aa;
      for (std::size_t i = 0; i < len; ++i) {
        g[i] = static_cast<T>(-(static_cast<double>(b[i]) * inv_ab -
                                c_aa * static_cast<double>(a[i])));
      }
    }
  }
  return total;
}

// Sum of layer_cosine_distance over every parameter tensor.
template <typename T>
double matching_loss(const LayerGradients<T>& gS, const LayerGradients<T>& gD,
                     LayerGradients<T>* dgS = nullptr) {
  check_same_shapes(gS, gD, "matching_loss");
  if (dgS) dgS->resize(gS.size());
  double total = 0.0;
  for (std::size_t l = 0; l < gS.size(); ++l) {
    total += layer_cosine_distance(gS[l], gD[l], dgS ? &(*dgS)[l] : nullptr);
  }
  return total;
}

template <typename T>
std::size_t total_cosine_rows(const TensorList<T>& list) {
  std::size_t n = 0;
  for (const auto& t : list) n += cosine_rows(t.shape());
  return n;
}

template <typename T>
struct MatchingGrad {
  double loss = 0.0;
  Tensor<T> features_grad;  // d loss / d synthetic features, shaped like them
  LayerGradients<T> synthetic_grads;  // g^S at the current parameters
};

// Matching loss between the classifier gradient on the synthetic batch and
// `real_grad`, plus its exact gradient w.r.t. the synthetic features.
//
// With v = dL/dg^S, the feature gradient is the mixed second derivative
// d/dx <v, grad_theta CE(x, theta)>, which equals the derivative of
// grad_x CE(x, theta) along theta + t v. It is obtained by running the same
// forward/backward code on dual numbers whose parameter tangents are v.
template <typename T>
MatchingGrad<T> matching_feature_grad(const Network& net,
                                      const NetworkParams<T>& params,
                                      const Tensor<T>& features,
                                      std::span<const int> labels,
                                      const LayerGradients<T>& real_grad) {
  MatchingGrad<T> out;
  auto lg = loss_and_grad(params, net, features, labels);
  LayerGradients<T> v;
  out.loss = matching_loss(lg.grads, real_grad, &v);
  out.synthetic_grads = std::move(lg.grads);

  using D = Dual<T>;
  NetworkParams<D> dparams;
  dparams.reserve(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    std::vector<D> data(params[l].size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = D(params[l][i], v[l][i]);
    }
    dparams.emplace_back(params[l].shape(), std::move(data));
  }
  std::vector<D> xdata(features.size());
  for (std::size_t i = 0; i < xdata.size(); ++i) xdata[i] = D(features[i]);
  Tensor<D> dx(features.shape(), std::move(xdata));
  Tensor<D> gx = input_grad(dparams, net, dx, labels);
  out.features_grad = Tensor<T>(features.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) {
    out.features_grad[i] = gx[i].tan;
  }
  return out;
}

}  // namespace psg

#endif  // PSG_MATCHING_HPP_
