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

#ifndef PSG_CONTINUAL_HPP_
#define PSG_CONTINUAL_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psg/data.hpp"
#include "psg/distill.hpp"
#include "psg/eval.hpp"
#include "psg/network.hpp"
#include "psg/optim.hpp"
#include "psg/privacy.hpp"
#include "psg/synthetic.hpp"

namespace psg {

enum class ContinualMethod { kDpsgd, kPsgReplay };

inline const char* continual_method_name(ContinualMethod m) {
  return m == ContinualMethod::kDpsgd ? "dpsgd" : "psg_replay";
}

inline ContinualMethod parse_continual_method(const std::string& s) {
  if (s == "dpsgd") return ContinualMethod::kDpsgd;
  if (s == "psg_replay") return ContinualMethod::kPsgReplay;
  throw InvalidArgument("unknown continual method '" + s + "'");
}

// Stage i trains on the classes in partitions[i]. `distill.privacy` is the
// per-stage budget; noise is calibrated to each partition separately.
struct StagePlan {
  std::vector<std::vector<int>> partitions;
  ContinualMethod method = ContinualMethod::kPsgReplay;
  DistillConfig distill;
  EvalConfig eval;
  std::size_t dpsgd_epochs = 10;
  double dpsgd_lr = 0.01;
  double dpsgd_momentum = 0.9;
  uint64_t seed = 0;

  void validate(std::size_t num_classes) const {
    if (partitions.empty()) throw InvalidArgument("plan has no stages");
    std::vector<bool> used(num_classes, false);
    for (const auto& part : partitions) {
      if (part.empty()) throw InvalidArgument("empty partition in plan");
      for (int c : part) {
        if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
          throw InvalidArgument("partition class " + std::to_string(c) +
                                " outside the dataset's label range");
        }
        if (used[c]) {
          throw InvalidArgument("class " + std::to_string(c) +
                                " appears in two partitions");
        }
        used[c] = true;
      }
    }
    distill.validate();
    eval.validate();
    if (method == ContinualMethod::kDpsgd && !(dpsgd_lr > 0)) {
      throw InvalidArgument("dpsgd lr must be > 0");
    }
  }
};

struct StageResult {
  double average_accuracy = 0.0;          // mean over seen stages
  std::vector<double> stage_accuracies;   // accuracy on each seen stage's classes
  std::optional<double> epsilon;          // this stage's own spend
  std::size_t transferred_bytes = 0;
  std::size_t steps = 0;
  double sigma = 0.0;
};

struct ContinualReport {
  ContinualMethod method = ContinualMethod::kPsgReplay;
  std::vector<StageResult> stages;

  std::vector<double> average_accuracy() const {
    std::vector<double> v;
    for (const auto& s : stages) v.push_back(s.average_accuracy);
    return v;
  }
  // Accuracy on the first stage's classes after each stage.
  std::vector<double> first_stage_accuracy() const {
    std::vector<double> v;
    for (const auto& s : stages) v.push_back(s.stage_accuracies.front());
    return v;
  }
  std::optional<double> epsilon_sum() const {
    double t = 0.0;
    for (const auto& s : stages) {
      if (!s.epsilon) return std::nullopt;
      t += *s.epsilon;
    }
    return t;
  }
  std::optional<double> epsilon_max() const {
    double t = 0.0;
    for (const auto& s : stages) {
      if (!s.epsilon) return std::nullopt;
      t = std::max(t, *s.epsilon);
    }
    return t;
  }

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json();
    };
    nlohmann::json j;
    j["method"] = continual_method_name(method);
    j["average_accuracy"] = average_accuracy();
    j["first_stage_accuracy"] = first_stage_accuracy();
    j["epsilon_per_stage_max"] = opt(epsilon_max());
    j["epsilon_summed_over_stages"] = opt(epsilon_sum());
    nlohmann::json stages_j = nlohmann::json::array();
    for (const auto& s : stages) {
      stages_j.push_back({{"average_accuracy", s.average_accuracy},
                          {"stage_accuracies", s.stage_accuracies},
                          {"epsilon", opt(s.epsilon)},
                          {"sigma", s.sigma},
                          {"steps", s.steps},
                          {"transferred_bytes", s.transferred_bytes}});
    }
    j["stages"] = stages_j;
    return j;
  }
};

namespace internal {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Relabels `ds` through `remap` (global label -> local index).
inline LabeledDataset relabel(LabeledDataset ds, const std::vector<int>& remap,
                              std::size_t num_classes) {
  for (int& y : ds.labels) y = remap[y];
  ds.num_classes = num_classes;
  return ds;
}

inline void append_pool(SyntheticSet& pool, const SyntheticSet& stage,
                        int label_offset) {
  if (pool.num_classes == 0) {
    pool = stage;
    for (int& y : pool.labels) y += label_offset;
    pool.num_classes = stage.num_classes + label_offset;
    return;
  }
  if (pool.spc != stage.spc) throw InvalidArgument("pool spc mismatch");
  Shape shape = pool.features.shape();
  shape[0] += stage.features.dim(0);
  Tensor<float> merged(shape);
  std::copy(pool.features.data().begin(), pool.features.data().end(),
            merged.data().begin());
  std::copy(stage.features.data().begin(), stage.features.data().end(),
            merged.data().begin() + pool.features.data().size());
  pool.features = std::move(merged);
  for (int y : stage.labels) pool.labels.push_back(y + label_offset);
  pool.num_classes += stage.num_classes;
}

}  // namespace internal

// Sequential class-incremental training over plan.partitions. Only model
// parameters (dpsgd) or synthetic sets (psg_replay) cross stage boundaries.
inline ContinualReport run_continual(const LabeledDataset& train,
                                     const LabeledDataset& test,
                                     const StagePlan& plan) {
  train.validate();
  test.validate();
  plan.validate(train.num_classes);
  if (test.num_classes != train.num_classes) {
    throw ShapeError("train and test label ranges differ");
  }
  const auto train_parts = class_split(train, plan.partitions);
  const auto test_parts = class_split(test, plan.partitions);
  ContinualReport report;
  report.method = plan.method;

  if (plan.method == ContinualMethod::kDpsgd) {
    const Network net(classifier_spec(plan.distill.arch, train.example_shape(),
                                      train.num_classes, plan.distill.width,
                                      plan.distill.hidden));
    auto theta = init_params<float>(net, derive_seed(plan.seed, "dpsgd-init"));
    const SgdOptions opt{plan.dpsgd_lr, plan.dpsgd_momentum, 0.0};
    for (std::size_t s = 0; s < train_parts.size(); ++s) {
      const LabeledDataset& part = train_parts[s];
      if (part.size() == 0) throw InvalidArgument("stage has no training data");
      const std::size_t per_epoch = std::max<std::size_t>(
          1, (part.size() + plan.distill.batch_size / 2) /
                 plan.distill.batch_size);
      // Reuse the distillation noise machinery with steps = epochs * batches.
      DistillConfig dc = plan.distill;
      dc.runs = 1;
      dc.outer_iters = plan.dpsgd_epochs * per_epoch;
      dc.batches_per_iter = 1;
      const ResolvedNoise noise = resolve_noise(dc, part.size());
      AccountantState acc = AccountantState::with_orders(dc.orders);
      GaussianSanitizer san(dc.privacy.clip, noise.sigma, dc.batch_size,
                            noise.q, dc.privacy.non_private, &acc);
      Rng sample_rng = make_stream(plan.seed, "dpsgd-poisson", s);
      Rng noise_rng = make_stream(plan.seed, "dpsgd-noise", s);
      SgdState<float> state;
      for (std::size_t step = 0; step < dc.outer_iters; ++step) {
        const auto idx = poisson_batch(part.size(), noise.q, sample_rng);
        auto sum = per_example_gradient_sum(net, theta, part, idx,
                                            dc.privacy.clip,
                                            !dc.privacy.non_private);
        auto g = san.sanitize_sum(std::move(sum), idx.size(), noise_rng);
        sgd_update(theta, g, opt, state);
      }
      if (!list_all_finite(theta)) {
        throw NonFiniteError("non-finite parameters after stage " +
                             std::to_string(s));
      }
      StageResult r;
      for (std::size_t k = 0; k <= s; ++k) {
        r.stage_accuracies.push_back(evaluate_accuracy(theta, net, test_parts[k]));
      }
      r.average_accuracy = internal::mean_of(r.stage_accuracies);
      if (!dc.privacy.non_private) r.epsilon = rdp_to_dp(acc, dc.privacy.delta).epsilon;
      r.transferred_bytes = net.num_params() * sizeof(float);
      r.steps = static_cast<std::size_t>(san.events());
      r.sigma = noise.sigma;
      report.stages.push_back(std::move(r));
    }
    return report;
  }

  SyntheticSet pool;
  std::vector<int> seen_remap(train.num_classes, -1);
  std::size_t seen = 0;
  for (std::size_t s = 0; s < plan.partitions.size(); ++s) {
    const auto& classes = plan.partitions[s];
    const LabeledDataset local = select_classes(train, classes);
    DistillConfig dc = plan.distill;
    dc.seed = derive_seed(plan.seed, "stage-distill", s);
    const DistillResult dr = psg_train(local, dc);
    internal::append_pool(pool, dr.set, static_cast<int>(seen));
    for (int c : classes) seen_remap[c] = static_cast<int>(seen++);

    EvalConfig ec = plan.eval;
    ec.seed = derive_seed(plan.seed, "stage-eval", s);
    const auto model = train_downstream(pool, ec);
    StageResult r;
    for (std::size_t k = 0; k <= s; ++k) {
      const auto t = internal::relabel(test_parts[k], seen_remap, seen);
      r.stage_accuracies.push_back(evaluate_accuracy(model.params, model.net, t));
    }
    r.average_accuracy = internal::mean_of(r.stage_accuracies);
    r.epsilon = dr.report.epsilon;
    r.transferred_bytes = encode_synthetic(dr.set).size();
    r.steps = static_cast<std::size_t>(dr.report.steps);
    r.sigma = dr.report.sigma;
    report.stages.push_back(std::move(r));
  }
  return report;
}

}  // namespace psg

#endif  // PSG_CONTINUAL_HPP_
