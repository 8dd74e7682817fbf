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

#ifndef PSG_OPTIM_HPP_
#define PSG_OPTIM_HPP_

#include <cmath>
#include <cstddef>

#include "psg/tensor.hpp"

namespace psg {

// Velocity buffers for momentum SGD; created lazily on the first step.
template <typename T>
struct SgdState {
  TensorList<T> velocity;
};

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

// v <- momentum * v + (g + wd * p);  p <- p - lr * v
template <typename T>
void sgd_update(TensorList<T>& params, const TensorList<T>& grads,
                const SgdOptions& opt, SgdState<T>& state) {
  check_same_shapes(params, grads, "sgd_update");
  if (state.velocity.empty()) state.velocity = zeros_like(params);
  check_same_shapes(params, state.velocity, "sgd_update state");
  const T lr(opt.lr), mu(opt.momentum), wd(opt.weight_decay);
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto& p = params[l].data();
    auto& v = state.velocity[l].data();
    const auto& g = grads[l].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * p[i]);
      p[i] -= lr * v[i];
    }
  }
}

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  TensorList<T> m;
  TensorList<T> v;
  long step = 0;
};

// Adam with bias-corrected moment estimates.
template <typename T>
void adam_update(TensorList<T>& params, const TensorList<T>& grads,
                 const AdamOptions& opt, AdamState<T>& state) {
  check_same_shapes(params, grads, "adam_update");
  if (state.m.empty()) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  check_same_shapes(params, state.m, "adam_update state");
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const T b1(opt.beta1), b2(opt.beta2);
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto& p = params[l].data();
    auto& m = state.m[l].data();
    auto& v = state.v[l].data();
    const auto& g = grads[l].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / c1;
      const double vhat = static_cast<double>(v[i]) / c2;
      p[i] -= static_cast<T>(opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
  }
}

}  // namespace psg

#endif  // PSG_OPTIM_HPP_
