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

#ifndef PSG_EVAL_HPP_
#define PSG_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psg/data.hpp"
#include "psg/distill.hpp"
#include "psg/network.hpp"
#include "psg/optim.hpp"
#include "psg/rng.hpp"
#include "psg/synthetic.hpp"

namespace psg {

struct EvalConfig {
  ArchTag arch = ArchTag::kConvNet;
  std::size_t epochs = 300;
  double lr = 0.01;  // multiplied by 0.1 once half the epochs are done
  std::size_t batch_size = 256;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::optional<bool> augment;  // default: on for images, off for flat data
  uint64_t seed = 0;
  std::size_t repeats = 3;
  std::size_t width = 128;
  std::vector<std::size_t> hidden = {128, 128};

  void validate() const {
    if (repeats < 1) throw InvalidArgument("eval repeats must be >= 1");
    if (batch_size < 1) throw InvalidArgument("eval batch size must be >= 1");
    if (!(lr > 0)) throw InvalidArgument("eval lr must be > 0");
  }
};

struct TrainedClassifier {
  Network net;
  NetworkParams<float> params;
};

inline constexpr std::size_t kCropPad = 4;

// Pads an image by kCropPad on every side (with the image's minimum value)
// and crops a random window of the original size.
inline void random_crop(std::span<const float> src, std::span<float> dst,
                        const Shape& shape, Rng& rng) {
  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  std::uniform_int_distribution<int> off(0, 2 * static_cast<int>(kCropPad));
  const long oy = off(rng) - static_cast<long>(kCropPad);
  const long ox = off(rng) - static_cast<long>(kCropPad);
  const float fill = *std::min_element(src.begin(), src.end());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const long sy = static_cast<long>(y) + oy, sx = static_cast<long>(x) + ox;
        const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(H) &&
                            sx < static_cast<long>(W);
        dst[(c * H + y) * W + x] =
            inside ? src[(c * H + sy) * W + sx] : fill;
      }
    }
  }
}

// Supervised training of a fresh classifier on `train`, which must not be
// real training data. `repeat` selects the seed substream.
inline TrainedClassifier train_classifier(const LabeledDataset& train,
                                          const EvalConfig& cfg,
                                          std::size_t repeat = 0) {
  cfg.validate();
  if (train.provenance == Provenance::kRealTrain) {
    throw ProvenanceError("evaluation must not train on real training data");
  }
  if (train.size() == 0) throw InvalidArgument("training set is empty");
  if (cfg.arch == ArchTag::kGenerator) {
    throw InvalidArgument("generator is not a classifier architecture");
  }
  const Shape shape = train.example_shape();
  TrainedClassifier out{Network(classifier_spec(cfg.arch, shape,
                                                train.num_classes, cfg.width,
                                                cfg.hidden)),
                        {}};
  out.params = init_params<float>(out.net,
                                  derive_seed(cfg.seed, "eval-init", repeat));
  const bool augment = cfg.augment.value_or(shape.size() == 3);
  if (augment && shape.size() != 3) {
    throw InvalidArgument("augmentation needs image data");
  }
  Rng rng = make_stream(cfg.seed, "eval-shuffle", repeat);
  SgdState<float> state;
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch * 2 >= cfg.epochs ? cfg.lr * 0.1 : cfg.lr;
    const SgdOptions opt{lr, cfg.momentum, cfg.weight_decay};
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Shape bshape = train.features.shape();
      bshape[0] = end - start;
      Tensor<float> batch(bshape);
      std::vector<int> labels(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto src = train.features.row(order[k]);
        auto dst = batch.row(k - start);
        if (augment) {
          random_crop(src, dst, shape, rng);
        } else {
          std::copy(src.begin(), src.end(), dst.begin());
        }
        labels[k - start] = train.labels[order[k]];
      }
      auto lg = loss_and_grad(out.params, out.net, batch, labels);
      if (!std::isfinite(lg.loss)) {
        throw NonFiniteError("non-finite loss while training classifier");
      }
      sgd_update(out.params, lg.grads, opt, state);
    }
  }
  return out;
}

inline TrainedClassifier train_downstream(const SyntheticSet& set,
                                          const EvalConfig& cfg,
                                          std::size_t repeat = 0) {
  set.validate();
  return train_classifier(set.as_dataset(), cfg, repeat);
}

// Index of the largest logit; ties go to the lowest index.
inline int argmax_row(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

// Fraction of `test` rows whose argmax prediction equals the label.
inline double evaluate_accuracy(const NetworkParams<float>& params,
                                const Network& net,
                                const LabeledDataset& test) {
  if (test.provenance == Provenance::kRealTrain) {
    throw ProvenanceError("accuracy must be measured on held-out data");
  }
  if (test.size() == 0) return 0.0;
  const Tensor<float> logits = forward(params, net, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (argmax_row(logits.row(i)) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct ArchAccuracy {
  ArchTag arch;
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over repeats
};

// Trains cfg.repeats fresh classifiers per architecture on `set` and reports
// test accuracy mean and spread.
inline std::vector<ArchAccuracy> cross_arch_report(
    const SyntheticSet& set, const std::vector<ArchTag>& archs,
    const LabeledDataset& test, EvalConfig cfg) {
  cfg.validate();
  std::vector<ArchAccuracy> rows;
  for (ArchTag arch : archs) {
    if (arch == ArchTag::kGenerator) {
      throw InvalidArgument("unknown classifier architecture 'generator'");
    }
    cfg.arch = arch;
    ArchAccuracy row{arch, {}};
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      auto model = train_downstream(set, cfg, r);
      row.accuracies.push_back(evaluate_accuracy(model.params, model.net, test));
    }
    const double n = static_cast<double>(row.accuracies.size());
    row.mean = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
    double var = 0.0;
    for (double a : row.accuracies) var += (a - row.mean) * (a - row.mean);
    row.std = std::sqrt(var / n);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json arch_report_json(const std::vector<ArchAccuracy>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"arch", arch_name(r.arch)},
                 {"mean", r.mean},
                 {"std", r.std},
                 {"accuracies", r.accuracies}});
  }
  return j;
}

}  // namespace psg

#endif  // PSG_EVAL_HPP_
