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

#ifndef PSG_DISTILL_HPP_
#define PSG_DISTILL_HPP_

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "psg/data.hpp"
#include "psg/error.hpp"
#include "psg/matching.hpp"
#include "psg/network.hpp"
#include "psg/optim.hpp"
#include "psg/parallel.hpp"
#include "psg/privacy.hpp"
#include "psg/rng.hpp"
#include "psg/synthetic.hpp"

namespace psg {

struct DistillConfig {
  std::size_t runs = 1000;           // R
  std::size_t outer_iters = 10;      // T
  std::size_t inner_iters = 50;      // J
  std::size_t batches_per_iter = 10; // K
  std::size_t batch_size = 256;      // nominal B
  double lr_theta = 0.01;
  double lr_synthetic = 0.1;
  double momentum_theta = 0.5;
  double momentum_synthetic = 0.5;
  std::size_t spc = 10;
  ArchTag arch = ArchTag::kConvNet;
  std::size_t width = 128;
  std::vector<std::size_t> hidden = {128, 128};
  PrivacySpec privacy;
  std::vector<int> orders = default_orders();
  uint64_t seed = 0;

  void validate() const {
    if (runs < 1 || outer_iters < 1 || batches_per_iter < 1 || batch_size < 1 ||
        spc < 1) {
      throw InvalidArgument("R, T, K, B and spc must all be >= 1");
    }
    if (!(lr_theta > 0) || !(lr_synthetic > 0)) {
      throw InvalidArgument("learning rates must be > 0");
    }
    if (!privacy.non_private) {
      if (!(privacy.clip > 0)) throw InvalidArgument("clip bound must be > 0");
      if (!(privacy.delta > 0 && privacy.delta < 1)) {
        throw InvalidArgument("delta must be in (0,1)");
      }
      if (!privacy.sigma && !privacy.epsilon_target) {
        throw InvalidArgument("need a noise multiplier or a target epsilon");
      }
    }
  }

  long total_steps() const {
    return static_cast<long>(runs * outer_iters * batches_per_iter);
  }
};

// Default (T, J) for a given samples-per-class count. The published table
// covers spc in {1, 10, 20, 50}; other values use the next larger entry.
inline std::pair<std::size_t, std::size_t> default_outer_inner(std::size_t spc) {
  if (spc <= 1) return {1, 1};
  if (spc <= 10) return {10, 50};
  if (spc <= 20) return {20, 25};
  return {50, 10};
}

inline NetworkSpec classifier_spec(ArchTag arch, const Shape& example_shape,
                                   std::size_t num_classes, std::size_t width,
                                   const std::vector<std::size_t>& hidden) {
  NetworkSpec s;
  s.arch = arch;
  s.input_shape = example_shape;
  s.num_classes = num_classes;
  s.width = width;
  s.hidden = hidden;
  return s;
}

struct DistillReport {
  bool prior = false;
  bool non_private = false;
  double sigma = 0.0;
  double q = 0.0;
  double delta = 0.0;
  std::optional<double> epsilon;
  std::optional<int> best_order;
  long steps = 0;
  std::vector<double> loss_curve;     // mean matching loss per outer iteration
  std::vector<double> epsilon_curve;  // epsilon spent after each outer iteration
  std::map<std::string, uint64_t> seeds;
  double wall_time_s = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["prior"] = prior;
    j["non_private"] = non_private;
    j["sigma"] = sigma;
    j["q"] = q;
    j["delta"] = delta;
    j["epsilon"] = epsilon ? nlohmann::json(*epsilon) : nlohmann::json();
    j["best_order"] = best_order ? nlohmann::json(*best_order) : nlohmann::json();
    j["steps"] = steps;
    j["loss_curve"] = loss_curve;
    j["epsilon_curve"] = epsilon_curve;
    j["seeds"] = seeds;
    j["wall_time_s"] = wall_time_s;
    return j;
  }
};

struct DistillResult {
  SyntheticSet set;
  AccountantState accountant;
  DistillReport report;
};

// Observation points inside the training loop, for tests and tooling.
enum class DistillPhase { kBeforeMatch, kAfterMatch, kBeforeInner, kAfterInner };

struct DistillObserver {
  std::function<void(DistillPhase, const NetworkParams<float>& theta,
                     const Tensor<float>& features)>
      on_phase;
};

// Sum over `indices` of each example's own loss gradient, clipped to global
// norm C when `clip` is set. Reduction order is fixed (see
// chunked_gradient_sum).
inline LayerGradients<float> per_example_gradient_sum(
    const Network& net, const NetworkParams<float>& theta,
    const LabeledDataset& data, std::span<const std::size_t> indices,
    double C, bool clip) {
  const std::size_t n = indices.size();
  const std::size_t chunks = std::min(kReductionChunks, std::max<std::size_t>(n, 1));
  const std::size_t per = (n + chunks - 1) / chunks;
  std::vector<LayerGradients<float>> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    partial[c] = zeros_like(theta);
    LayerGradients<float> g = zeros_like(theta);
    Workspace<float> ws(net);
    std::vector<float> dlogits(net.output_size());
    const std::size_t end = std::min(n, (c + 1) * per);
    for (std::size_t k = c * per; k < end; ++k) {
      const std::size_t i = indices[k];
      auto logits = forward_example(net, theta, data.features.row(i), ws);
      cross_entropy<float>(logits, data.labels[i], 1.0f, dlogits);
      backward_example<float>(net, theta, data.features.row(i), ws, dlogits, &g,
                              {}, true);
      double scale = 1.0;
      if (clip) {
        const double norm = global_norm(g);
        if (norm > C) scale = C / norm;
      }
      list_axpy(partial[c], g, static_cast<float>(scale));
    }
  });
  LayerGradients<float> total = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c) list_axpy(total, partial[c], 1.0f);
  return total;
}

// The synthetic samples are learned directly, by momentum SGD.
class DirectSynthetic {
 public:
  DirectSynthetic(SyntheticSet init, double lr, double momentum)
      : set_(std::move(init)), opt_{lr, momentum, 0.0} {
    params_.push_back(std::move(set_.features));
  }
  const Tensor<float>& features() const { return params_[0]; }
  void step(const Tensor<float>& grad) {
    TensorList<float> g{grad};
    sgd_update(params_, g, opt_, state_);
  }
  SyntheticSet materialize() const {
    SyntheticSet s = set_;
    s.features = params_[0];
    return s;
  }

 private:
  SyntheticSet set_;  // labels and metadata; features live in params_
  TensorList<float> params_;
  SgdOptions opt_;
  SgdState<float> state_;  // persists across runs
};

struct ResolvedNoise {
  double sigma = 0.0;
  double q = 1.0;
};

// Picks the noise multiplier for cfg on a dataset of size n: explicit sigma,
// or calibration to the target epsilon over R*T*K steps. Fails if an
// explicit sigma would overspend an explicit target.
inline ResolvedNoise resolve_noise(const DistillConfig& cfg, std::size_t n) {
  ResolvedNoise r;
  r.q = std::min(1.0, static_cast<double>(cfg.batch_size) /
                          static_cast<double>(n));
  if (cfg.privacy.non_private) return r;
  const long steps = cfg.total_steps();
  if (cfg.privacy.sigma) {
    r.sigma = *cfg.privacy.sigma;
    if (!(r.sigma > 0)) {
      throw InvalidArgument("private training needs sigma > 0 (use the "
                            "non-private flag for sigma = 0)");
    }
  } else {
    r.sigma = calibrate_noise(*cfg.privacy.epsilon_target, cfg.privacy.delta,
                              r.q, steps, cfg.orders);
  }
  if (cfg.privacy.epsilon_target) {
    const double projected =
        composed_epsilon(r.sigma, r.q, steps, cfg.privacy.delta, cfg.orders);
    if (projected > *cfg.privacy.epsilon_target + kCalibrationTol) {
      throw BudgetExhausted("planned " + std::to_string(steps) +
                            " steps spend epsilon " + std::to_string(projected) +
                            " > target " +
                            std::to_string(*cfg.privacy.epsilon_target));
    }
  }
  return r;
}

// Shared gradient-matching loop. `Synth` owns the learnable representation of
// the synthetic set and exposes features(), step(grad), materialize().
template <typename Synth>
DistillResult run_gradient_matching(const LabeledDataset& data,
                                    const DistillConfig& cfg, Synth& synth,
                                    const std::vector<int>& syn_labels,
                                    DistillReport report,
                                    const DistillObserver* observer = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw InvalidArgument("dataset is empty");
  if (data.provenance == Provenance::kSynthetic) {
    throw ProvenanceError("gradient matching needs real data");
  }
  const Network net(classifier_spec(cfg.arch, data.example_shape(),
                                    data.num_classes, cfg.width, cfg.hidden));
  const ResolvedNoise noise = resolve_noise(cfg, data.size());
  const long total_steps = cfg.total_steps();
  AccountantState accountant = AccountantState::with_orders(cfg.orders);
  GaussianSanitizer sanitizer(cfg.privacy.clip, noise.sigma, cfg.batch_size,
                              noise.q, cfg.privacy.non_private, &accountant);

  report.non_private = cfg.privacy.non_private;
  report.sigma = noise.sigma;
  report.q = noise.q;
  report.delta = cfg.privacy.delta;
  report.seeds["poisson"] = derive_seed(cfg.seed, "poisson");
  report.seeds["dp-noise"] = derive_seed(cfg.seed, "dp-noise");
  report.seeds["theta-init/0"] = derive_seed(cfg.seed, "theta-init", 0);
  Rng sample_rng(report.seeds["poisson"]);
  Rng noise_rng(report.seeds["dp-noise"]);

  auto notify = [&](DistillPhase phase, const NetworkParams<float>& theta) {
    if (observer && observer->on_phase) {
      observer->on_phase(phase, theta, synth.features());
    }
  };

  const SgdOptions theta_opt{cfg.lr_theta, cfg.momentum_theta, 0.0};
  for (std::size_t run = 0; run < cfg.runs; ++run) {
    auto theta = init_params<float>(net, derive_seed(cfg.seed, "theta-init", run));
    SgdState<float> theta_state;
    for (std::size_t t = 0; t < cfg.outer_iters; ++t) {
      double loss_sum = 0.0;
      notify(DistillPhase::kBeforeMatch, theta);
      for (std::size_t k = 0; k < cfg.batches_per_iter; ++k) {
        if (sanitizer.events() >= total_steps) {
          throw BudgetExhausted("sanitize step budget of " +
                                std::to_string(total_steps) + " exhausted");
        }
        const auto idx = poisson_batch(data.size(), noise.q, sample_rng);
        auto sum = per_example_gradient_sum(net, theta, data, idx,
                                            cfg.privacy.clip,
                                            !cfg.privacy.non_private);
        const auto real_grad =
            sanitizer.sanitize_sum(std::move(sum), idx.size(), noise_rng);
        auto mg = matching_feature_grad(net, theta, synth.features(),
                                        syn_labels, real_grad);
        if (!std::isfinite(mg.loss) || !mg.features_grad.all_finite()) {
          throw NonFiniteError("non-finite matching loss at run " +
                               std::to_string(run) + ", outer iteration " +
                               std::to_string(t) + ", batch " +
                               std::to_string(k));
        }
        synth.step(mg.features_grad);
        loss_sum += mg.loss;
      }
      notify(DistillPhase::kAfterMatch, theta);
      report.loss_curve.push_back(loss_sum /
                                  static_cast<double>(cfg.batches_per_iter));
      if (!cfg.privacy.non_private) {
        report.epsilon_curve.push_back(
            rdp_to_dp(accountant, cfg.privacy.delta).epsilon);
      }
      notify(DistillPhase::kBeforeInner, theta);
      for (std::size_t j = 0; j < cfg.inner_iters; ++j) {
        auto lg = loss_and_grad(theta, net, synth.features(), syn_labels);
        if (!std::isfinite(lg.loss)) {
          throw NonFiniteError("non-finite classifier loss at run " +
                               std::to_string(run) + ", outer iteration " +
                               std::to_string(t));
        }
        sgd_update(theta, lg.grads, theta_opt, theta_state);
      }
      notify(DistillPhase::kAfterInner, theta);
    }
  }

  DistillResult result;
  result.set = synth.materialize();
  result.accountant = accountant;
  report.steps = sanitizer.events();
  if (!cfg.privacy.non_private) {
    const auto dp = rdp_to_dp(accountant, cfg.privacy.delta);
    report.epsilon = dp.epsilon;
    report.best_order = dp.best_order;
  }
  report.wall_time_s = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  result.report = std::move(report);
  return result;
}

// Private set generation: learns spc synthetic samples per class whose
// classifier gradients match sanitized real-data gradients.
inline DistillResult psg_train(const LabeledDataset& data,
                               const DistillConfig& cfg,
                               const DistillObserver* observer = nullptr) {
  cfg.validate();
  DistillReport report;
  report.seeds["synthetic-init"] = derive_seed(cfg.seed, "synthetic-init");
  SyntheticSet init = init_synthetic(cfg.spc, data.num_classes,
                                     data.example_shape(),
                                     report.seeds["synthetic-init"]);
  const std::vector<int> labels = init.labels;
  DirectSynthetic synth(std::move(init), cfg.lr_synthetic,
                        cfg.momentum_synthetic);
  return run_gradient_matching(data, cfg, synth, labels, std::move(report),
                               observer);
}

}  // namespace psg

#endif  // PSG_DISTILL_HPP_
