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

#ifndef PSG_GENERATOR_HPP_
#define PSG_GENERATOR_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "psg/distill.hpp"
#include "psg/network.hpp"
#include "psg/optim.hpp"
#include "psg/synthetic.hpp"

namespace psg {

struct GeneratorConfig {
  std::size_t latent_dim = 64;
  std::size_t channels = 32;                 // image generator feature maps
  std::vector<std::size_t> hidden = {128};   // flat-data generator
  AdamOptions adam{0.01, 0.9, 0.999, 1e-8};

  void validate() const {
    if (latent_dim < 1) throw InvalidArgument("latent_dim must be >= 1");
    if (!(adam.lr > 0)) throw InvalidArgument("generator lr must be > 0");
  }
};

// Conditional generator G(z, y): input is z concatenated with the one-hot
// label, output has the data shape and lies in [-1, 1].
inline NetworkSpec generator_spec(const GeneratorConfig& g,
                                  const Shape& data_shape,
                                  std::size_t num_classes) {
  NetworkSpec s;
  s.arch = ArchTag::kGenerator;
  s.input_shape = {g.latent_dim + num_classes};
  s.num_classes = num_classes;
  s.gen_channels = g.channels;
  s.hidden = g.hidden;
  s.output_shape = data_shape;
  return s;
}

// Rows of (z_i, onehot(y_i)), one per synthetic sample.
template <typename T>
Tensor<T> generator_inputs(const Tensor<T>& latents,
                           std::span<const int> labels,
                           std::size_t num_classes) {
  const std::size_t M = latents.dim(0), Z = latents.row_size();
  if (labels.size() != M) throw ShapeError("one label per latent code needed");
  Tensor<T> in({M, Z + num_classes});
  for (std::size_t i = 0; i < M; ++i) {
    auto row = in.row(i);
    const auto z = latents.row(i);
    std::copy(z.begin(), z.end(), row.begin());
    row[Z + static_cast<std::size_t>(labels[i])] = T(1);
  }
  return in;
}

// Materializes every synthetic sample from its fixed latent code and label.
template <typename T>
Tensor<T> generator_forward(const NetworkParams<T>& phi, const Network& gen,
                            const Tensor<T>& inputs) {
  if (inputs.rank() != 2 || inputs.dim(1) != gen.input_size()) {
    throw ShapeError("generator input " + shape_str(inputs.shape()) +
                     " does not match " + shape_str(gen.input_shape()));
  }
  const std::size_t M = inputs.dim(0);
  Shape shape{M};
  const Shape& o = gen.output_shape();
  shape.insert(shape.end(), o.begin(), o.end());
  Tensor<T> out(shape);
  parallel_for(M, [&](std::size_t i) {
    Workspace<T> ws(gen);
    auto y = forward_example(gen, phi, inputs.row(i), ws);
    std::copy(y.begin(), y.end(), out.row(i).begin());
  });
  return out;
}

// Vector-Jacobian product: sum_i J_G(input_i)^T out_grad_i w.r.t. phi.
template <typename T>
LayerGradients<T> generator_backward(const NetworkParams<T>& phi,
                                     const Network& gen,
                                     const Tensor<T>& inputs,
                                     const Tensor<T>& out_grad) {
  if (out_grad.dim(0) != inputs.dim(0) ||
      out_grad.row_size() != gen.output_size()) {
    throw ShapeError("generator output gradient has wrong shape");
  }
  return chunked_gradient_sum<T>(
      phi, inputs.dim(0), [&](std::size_t i, LayerGradients<T>& acc) {
        Workspace<T> ws(gen);
        forward_example(gen, phi, inputs.row(i), ws);
        backward_example<T>(gen, phi, inputs.row(i), ws, out_grad.row(i), &acc,
                            {});
      });
}

// The synthetic samples are G(z_i, y_i; phi) with frozen z_i; Adam on phi.
class GeneratorSynthetic {
 public:
  GeneratorSynthetic(const GeneratorConfig& cfg, const Shape& data_shape,
                     std::size_t spc, std::size_t num_classes,
                     uint64_t phi_seed, uint64_t latent_seed)
      : gen_(generator_spec(cfg, data_shape, num_classes)),
        adam_(cfg.adam),
        spc_(spc),
        num_classes_(num_classes) {
    labels_ = balanced_labels(spc, num_classes);
    latents_ = Tensor<float>({labels_.size(), cfg.latent_dim});
    Rng rng(latent_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : latents_.data()) v = static_cast<float>(normal(rng));
    inputs_ = generator_inputs(latents_, labels_, num_classes);
    phi_ = init_params<float>(gen_, phi_seed);
    refresh();
  }

  const Tensor<float>& features() const { return features_; }
  const Tensor<float>& latents() const { return latents_; }
  const NetworkParams<float>& phi() const { return phi_; }
  const Network& network() const { return gen_; }
  const std::vector<int>& labels() const { return labels_; }

  void step(const Tensor<float>& features_grad) {
    auto g = generator_backward(phi_, gen_, inputs_, features_grad);
    adam_update(phi_, g, adam_, state_);
    refresh();
  }

  SyntheticSet materialize() const {
    SyntheticSet s;
    s.features = features_;
    s.labels = labels_;
    s.spc = spc_;
    s.num_classes = num_classes_;
    return s;
  }

 private:
  void refresh() { features_ = generator_forward(phi_, gen_, inputs_); }

  Network gen_;
  AdamOptions adam_;
  AdamState<float> state_;
  std::size_t spc_;
  std::size_t num_classes_;
  std::vector<int> labels_;
  Tensor<float> latents_;
  Tensor<float> inputs_;
  NetworkParams<float> phi_;
  Tensor<float> features_;
};

// Private set generation with a generator prior. Loop structure and privacy
// accounting are identical to psg_train; only the synthetic update differs.
inline DistillResult psg_train_with_prior(const LabeledDataset& data,
                                          const DistillConfig& cfg,
                                          const GeneratorConfig& gcfg,
                                          const DistillObserver* observer = nullptr) {
  cfg.validate();
  gcfg.validate();
  DistillReport report;
  report.prior = true;
  report.seeds["generator-init"] = derive_seed(cfg.seed, "generator-init");
  report.seeds["latent-codes"] = derive_seed(cfg.seed, "latent-codes");
  GeneratorSynthetic synth(gcfg, data.example_shape(), cfg.spc,
                           data.num_classes, report.seeds["generator-init"],
                           report.seeds["latent-codes"]);
  const std::vector<int> labels = synth.labels();
  return run_gradient_matching(data, cfg, synth, labels, std::move(report),
                               observer);
}

}  // namespace psg

#endif  // PSG_GENERATOR_HPP_
