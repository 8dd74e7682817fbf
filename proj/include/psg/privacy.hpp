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

#ifndef PSG_PRIVACY_HPP_
#define PSG_PRIVACY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "psg/error.hpp"
#include "psg/rng.hpp"
#include "psg/tensor.hpp"

namespace psg {

// ---------------------------------------------------------------------------
// Gaussian mechanism on per-example gradients.

// Rescales g so that its global L2 norm (all layers concatenated) is at most
// C. Gradients already inside the ball are returned unchanged.
template <typename T>
LayerGradients<T> clip_per_example(const LayerGradients<T>& g, double C) {
  if (!(C > 0)) throw InvalidArgument("clip bound must be positive");
  LayerGradients<T> out = g;
  const double norm = global_norm(g);
  if (norm > C) list_scale(out, static_cast<T>(C / norm));
  return out;
}

// Sum of clipped per-example gradients, reduced in list order. `like`
// supplies the shapes for an empty list.
template <typename T>
LayerGradients<T> clipped_sum(std::span<const LayerGradients<T>> per_example,
                              const TensorList<T>& like, double C) {
  LayerGradients<T> sum = zeros_like(like);
  for (const auto& g : per_example) {
    check_same_shapes(sum, g, "clipped_sum");
    const double norm = global_norm(g);
    const double scale = norm > C ? C / norm : 1.0;
    list_axpy(sum, g, static_cast<T>(scale));
  }
  return sum;
}

// (sum + N(0, sigma^2 C^2 I)) / B_nominal, one noise draw per coordinate in
// parameter order.
template <typename T>
LayerGradients<T> noisy_mean(LayerGradients<T> sum, double C, double sigma,
                             std::size_t B_nominal, Rng& rng) {
  if (B_nominal == 0) throw InvalidArgument("nominal batch size must be >= 1");
  if (sigma < 0) throw InvalidArgument("noise multiplier must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_std = sigma * C;
  const double inv_b = 1.0 / static_cast<double>(B_nominal);
  for (auto& t : sum) {
    for (auto& v : t.data()) {
      const double noisy = static_cast<double>(v) + noise_std * normal(rng);
      v = static_cast<T>(noisy * inv_b);
    }
  }
  return sum;
}

// (sum_i clip(g_i) + N(0, sigma^2 C^2 I)) / B_nominal. Poisson batches may be
// empty, in which case only noise remains.
template <typename T>
LayerGradients<T> sanitize_mean(
    std::span<const LayerGradients<T>> per_example, const TensorList<T>& like,
    double C, double sigma, std::size_t B_nominal, Rng& rng) {
  if (B_nominal == 0) throw InvalidArgument("nominal batch size must be >= 1");
  return noisy_mean(clipped_sum(per_example, like, C), C, sigma, B_nominal,
                    rng);
}

// Smallest sigma satisfying sigma >= sqrt(2 ln(1.25/delta)) * sensitivity /
// epsilon for the classical Gaussian mechanism.
inline double classical_gaussian_sigma(double delta, double sensitivity,
                                       double epsilon) {
  if (!(delta > 0 && delta < 1)) throw InvalidArgument("delta must be in (0,1)");
  if (!(sensitivity > 0)) throw InvalidArgument("sensitivity must be > 0");
  if (!(epsilon > 0)) throw InvalidArgument("epsilon must be > 0");
  return std::sqrt(2.0 * std::log(1.25 / delta)) * sensitivity / epsilon;
}

// ---------------------------------------------------------------------------
// Renyi DP accounting for the sampled Gaussian mechanism.

inline std::vector<int> default_orders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  return orders;
}

namespace internal {
inline double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}
}  // namespace internal

// RDP of one step of the sampled Gaussian mechanism (Poisson rate q, noise
// multiplier sigma) at integer order alpha, via the binomial expansion
//   A = sum_i C(a,i) (1-q)^(a-i) q^i exp((i^2 - i) / (2 sigma^2)),
//   eps = log(A) / (a - 1),
// evaluated in log space.
inline double sgm_rdp(double q, double sigma, int alpha) {
  if (!(q >= 0 && q <= 1)) throw InvalidArgument("sampling rate must be in [0,1]");
  if (alpha < 2) throw InvalidArgument("RDP order must be an integer >= 2");
  if (sigma < 0 || std::isnan(sigma)) {
    throw InvalidArgument("noise multiplier must be >= 0");
  }
  if (q == 0) return 0.0;
  if (sigma == 0) {
    throw InfinitePrivacyCost("sampled Gaussian with sigma=0 and q>0 has "
                              "unbounded RDP");
  }
  const double a = alpha;
  if (q == 1) return a / (2.0 * sigma * sigma);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> terms(static_cast<std::size_t>(alpha) + 1);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= alpha; ++i) {
    const double di = i;
    terms[i] = internal::log_binom(alpha, i) + di * log_q +
               (a - di) * log_1mq + (di * di - di) * inv_2s2;
    mx = std::max(mx, terms[i]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  const double log_a = mx + std::log(s);
  return std::max(0.0, log_a / (a - 1.0));
}

struct AccountantState {
  std::vector<int> orders = default_orders();
  std::vector<double> rdp_eps = std::vector<double>(orders.size(), 0.0);
  long steps_consumed = 0;

  static AccountantState with_orders(std::vector<int> orders) {
    if (orders.empty()) throw InvalidArgument("RDP order grid is empty");
    if (!std::is_sorted(orders.begin(), orders.end()) ||
        std::adjacent_find(orders.begin(), orders.end()) != orders.end() ||
        orders.front() < 2) {
      throw InvalidArgument("RDP orders must be strictly ascending and >= 2");
    }
    AccountantState s;
    s.rdp_eps.assign(orders.size(), 0.0);
    s.orders = std::move(orders);
    return s;
  }

  bool operator==(const AccountantState&) const = default;
};

// Composes n_steps identical sampled-Gaussian steps onto `state`.
inline AccountantState accumulate(AccountantState state, double q,
                                  double sigma, long n_steps) {
  if (n_steps < 0) throw InvalidArgument("n_steps must be >= 0");
  if (n_steps == 0) return state;
  for (std::size_t k = 0; k < state.orders.size(); ++k) {
    state.rdp_eps[k] +=
        static_cast<double>(n_steps) * sgm_rdp(q, sigma, state.orders[k]);
  }
  state.steps_consumed += n_steps;
  return state;
}

struct DpGuarantee {
  double epsilon;
  int best_order;
};

// Converts accumulated RDP to (epsilon, delta)-DP:
//   epsilon = min_a rdp(a) + log(1/delta) / (a - 1).
inline DpGuarantee rdp_to_dp(const AccountantState& state, double delta) {
  if (!(delta > 0 && delta < 1)) throw InvalidArgument("delta must be in (0,1)");
  if (state.orders.empty()) throw InvalidArgument("RDP order grid is empty");
  const double log_inv_delta = std::log(1.0 / delta);
  DpGuarantee best{std::numeric_limits<double>::infinity(), state.orders[0]};
  for (std::size_t k = 0; k < state.orders.size(); ++k) {
    const double eps =
        state.rdp_eps[k] + log_inv_delta / (state.orders[k] - 1.0);
    if (eps < best.epsilon) best = {eps, state.orders[k]};
  }
  return best;
}

// Epsilon after `steps` sampled-Gaussian steps at (q, sigma).
inline double composed_epsilon(double sigma, double q, long steps,
                               double delta,
                               const std::vector<int>& orders) {
  auto s = accumulate(AccountantState::with_orders(orders), q, sigma, steps);
  return rdp_to_dp(s, delta).epsilon;
}

inline constexpr double kSigmaSearchMin = 1e-2;
inline constexpr double kSigmaSearchMax = 1e3;
inline constexpr double kCalibrationTol = 1e-3;
inline constexpr int kCalibrationMaxIter = 60;

// Smallest noise multiplier (to bisection resolution) whose composed epsilon
// over total_steps does not exceed epsilon_target.
inline double calibrate_noise(double epsilon_target, double delta, double q,
                              long total_steps,
                              const std::vector<int>& orders = default_orders()) {
  if (!(epsilon_target > 0)) throw InvalidArgument("target epsilon must be > 0");
  if (total_steps < 1) {
    throw InvalidArgument("total_steps must be >= 1 to calibrate noise");
  }
  if (!(q > 0 && q <= 1)) throw InvalidArgument("sampling rate must be in (0,1]");
  auto eps_at = [&](double sigma) {
    return composed_epsilon(sigma, q, total_steps, delta, orders);
  };
  double hi = kSigmaSearchMax;
  if (eps_at(hi) > epsilon_target) {
    throw PrivacyInfeasible("target epsilon " + std::to_string(epsilon_target) +
                            " unreachable with sigma <= 1e3");
  }
  double lo = kSigmaSearchMin;
  if (eps_at(lo) <= epsilon_target) return lo;
  double eps_hi = eps_at(hi);
  for (int it = 0; it < kCalibrationMaxIter; ++it) {
    if (epsilon_target - eps_hi <= kCalibrationTol) break;
    const double mid = 0.5 * (lo + hi);
    const double e = eps_at(mid);
    if (e <= epsilon_target) {
      hi = mid;
      eps_hi = e;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// ---------------------------------------------------------------------------
// Sanitizer bound to an accountant: every call is one sampled-Gaussian step.

struct PrivacySpec {
  std::optional<double> epsilon_target;
  double delta = 1e-5;
  double clip = 0.1;
  std::optional<double> sigma;
  double q = 1.0;
  long total_steps = 0;
  bool non_private = false;
};

class GaussianSanitizer {
 public:
  // `accountant` must outlive the sanitizer. In non-private mode gradients
  // are averaged over the sampled batch without clipping or noise, and the
  // accountant is left untouched (steps are still counted locally).
  GaussianSanitizer(double clip, double sigma, std::size_t nominal_batch,
                    double q, bool non_private, AccountantState* accountant)
      : clip_(clip),
        sigma_(sigma),
        nominal_batch_(nominal_batch),
        q_(q),
        non_private_(non_private),
        accountant_(accountant) {
    if (!non_private_ && !accountant_) {
      throw InvalidArgument("private sanitizer needs an accountant");
    }
  }

  template <typename T>
  LayerGradients<T> sanitize(std::span<const LayerGradients<T>> per_example,
                             const TensorList<T>& like, Rng& noise_rng) {
    if (non_private_) {
      LayerGradients<T> sum = zeros_like(like);
      for (const auto& g : per_example) list_axpy(sum, g, T(1));
      return sanitize_sum(std::move(sum), per_example.size(), noise_rng);
    }
    return sanitize_sum(clipped_sum(per_example, like, clip_),
                        per_example.size(), noise_rng);
  }

  // Same as sanitize() for callers that already reduced the batch: `sum` is
  // the clipped sum (or the raw sum in non-private mode) of `count` examples.
  template <typename T>
  LayerGradients<T> sanitize_sum(LayerGradients<T> sum, std::size_t count,
                                 Rng& noise_rng) {
    ++events_;
    if (non_private_) {
      if (count > 0) list_scale(sum, T(1) / T(static_cast<double>(count)));
      return sum;
    }
    *accountant_ = accumulate(std::move(*accountant_), q_, sigma_, 1);
    return noisy_mean(std::move(sum), clip_, sigma_, nominal_batch_, noise_rng);
  }

  double clip() const { return clip_; }
  long events() const { return events_; }
  bool non_private() const { return non_private_; }

 private:
  double clip_;
  double sigma_;
  std::size_t nominal_batch_;
  double q_;
  bool non_private_;
  AccountantState* accountant_;
  long events_ = 0;
};

// ---------------------------------------------------------------------------
// JSON report of an accountant.

inline nlohmann::json accountant_to_json(const AccountantState& s, double delta,
                                         std::optional<double> q = {},
                                         std::optional<double> sigma = {}) {
  nlohmann::json j;
  j["orders"] = s.orders;
  j["rdp_eps"] = s.rdp_eps;
  j["steps"] = s.steps_consumed;
  j["delta"] = delta;
  const auto dp = rdp_to_dp(s, delta);
  j["epsilon"] = dp.epsilon;
  j["best_order"] = dp.best_order;
  if (q) j["q"] = *q;
  if (sigma) j["sigma"] = *sigma;
  return j;
}

inline AccountantState accountant_from_json(const nlohmann::json& j) {
  try {
    auto s = AccountantState::with_orders(j.at("orders").get<std::vector<int>>());
    s.rdp_eps = j.at("rdp_eps").get<std::vector<double>>();
    s.steps_consumed = j.at("steps").get<long>();
    if (s.rdp_eps.size() != s.orders.size()) {
      throw FormatError("accountant: rdp_eps and orders differ in length");
    }
    for (double e : s.rdp_eps) {
      if (!(e >= 0) || !std::isfinite(e)) {
        throw FormatError("accountant: rdp_eps must be finite and >= 0");
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("accountant JSON: ") + e.what());
  }
}

}  // namespace psg

#endif  // PSG_PRIVACY_HPP_
