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

#ifndef PSG_NETWORK_HPP_
#define PSG_NETWORK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psg/dual.hpp"
#include "psg/error.hpp"
#include "psg/parallel.hpp"
#include "psg/rng.hpp"
#include "psg/tensor.hpp"

namespace psg {

enum class ArchTag { kConvNet, kLeNet, kMlp, kGenerator };

inline std::string arch_name(ArchTag a) {
  switch (a) {
    case ArchTag::kConvNet:
      return "convnet";
    case ArchTag::kLeNet:
      return "lenet";
    case ArchTag::kMlp:
      return "mlp";
    case ArchTag::kGenerator:
      return "generator";
  }
  return "unknown";
}

inline ArchTag parse_arch(const std::string& s) {
  if (s == "convnet") return ArchTag::kConvNet;
  if (s == "lenet") return ArchTag::kLeNet;
  if (s == "mlp") return ArchTag::kMlp;
  if (s == "generator") return ArchTag::kGenerator;
  throw InvalidArgument("unknown architecture '" + s + "'");
}

// Declarative description of a network. For classifiers `input_shape` is the
// shape of one example ((C,H,W) for images, (d) for flat data) and
// `num_classes` the logit count. For the generator `input_shape` is
// (latent_dim + num_classes) and `output_shape` the data shape.
struct NetworkSpec {
  ArchTag arch = ArchTag::kMlp;
  Shape input_shape;
  std::size_t num_classes = 0;
  std::size_t width = 128;                      // convnet filters per block
  std::vector<std::size_t> hidden = {128, 128};  // mlp / flat generator
  std::size_t gen_channels = 32;
  Shape output_shape;
};

enum class LayerKind {
  kConv,
  kInstanceNorm,
  kRelu,
  kTanh,
  kAvgPool,
  kUpsample,
  kLinear,
  kReshape
};

// One layer of a compiled network. Activations of a single example are
// stored flat; `in_shape`/`out_shape` exclude the batch axis.
struct Layer {
  LayerKind kind;
  Shape in_shape;
  Shape out_shape;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 0;
  std::size_t pad = 0;
  bool has_bias = false;
  std::size_t param_offset = 0;  // index of first parameter tensor
  std::size_t param_count = 0;
};

inline constexpr double kInstanceNormEps = 1e-5;

// A validated NetworkSpec compiled into its layer sequence.
class Network {
 public:
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) { build(); }

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<Shape>& param_shapes() const { return param_shapes_; }
  const Shape& input_shape() const { return spec_.input_shape; }
  std::size_t input_size() const { return shape_numel(spec_.input_shape); }
  const Shape& output_shape() const { return layers_.back().out_shape; }
  std::size_t output_size() const { return shape_numel(output_shape()); }
  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& s : param_shapes_) n += shape_numel(s);
    return n;
  }
  std::size_t max_activation() const { return max_act_; }

 private:
  void add(Layer layer, std::vector<Shape> params) {
    layer.param_offset = param_shapes_.size();
    layer.param_count = params.size();
    for (auto& p : params) param_shapes_.push_back(std::move(p));
    max_act_ = std::max(max_act_, shape_numel(layer.out_shape));
    layers_.push_back(std::move(layer));
  }

  Shape current() const {
    return layers_.empty() ? spec_.input_shape : layers_.back().out_shape;
  }

  void conv(std::size_t out_ch, std::size_t kernel, std::size_t pad,
            bool bias) {
    const Shape in = current();
    if (in.size() != 3) throw ShapeError("conv layer needs (C,H,W) input");
    if (in[1] + 2 * pad < kernel || in[2] + 2 * pad < kernel) {
      throw ShapeError("input " + shape_str(in) + " too small for kernel " +
                       std::to_string(kernel));
    }
    Layer l{LayerKind::kConv, in, {}};
    l.in_ch = in[0];
    l.out_ch = out_ch;
    l.kernel = kernel;
    l.pad = pad;
    l.has_bias = bias;
    l.out_shape = {out_ch, in[1] + 2 * pad - kernel + 1,
                   in[2] + 2 * pad - kernel + 1};
    std::vector<Shape> params = {{out_ch, in[0], kernel, kernel}};
    if (bias) params.push_back({out_ch});
    add(std::move(l), std::move(params));
  }

  void instance_norm() {
    const Shape in = current();
    Layer l{LayerKind::kInstanceNorm, in, in};
    l.in_ch = l.out_ch = in[0];
    add(std::move(l), {{in[0]}, {in[0]}});
  }

  void unary(LayerKind kind) {
    const Shape in = current();
    add(Layer{kind, in, in}, {});
  }

  void avgpool() {
    const Shape in = current();
    if (in.size() != 3 || in[1] < 2 || in[2] < 2) {
      throw ShapeError("avgpool needs spatial extent >= 2, got " +
                       shape_str(in));
    }
    add(Layer{LayerKind::kAvgPool, in, {in[0], in[1] / 2, in[2] / 2}}, {});
  }

  void upsample() {
    const Shape in = current();
    add(Layer{LayerKind::kUpsample, in, {in[0], in[1] * 2, in[2] * 2}}, {});
  }

  void reshape(Shape to) {
    const Shape in = current();
    if (shape_numel(in) != shape_numel(to)) {
      throw ShapeError("reshape " + shape_str(in) + " -> " + shape_str(to));
    }
    add(Layer{LayerKind::kReshape, in, std::move(to)}, {});
  }

  void linear(std::size_t out) {
    const Shape in = current();
    const std::size_t n = shape_numel(in);
    if (in.size() != 1) reshape({n});
    Layer l{LayerKind::kLinear, {n}, {out}};
    l.in_ch = n;
    l.out_ch = out;
    l.has_bias = true;
    add(std::move(l), {{out, n}, {out}});
  }

  void build() {
    const auto& s = spec_;
    if (s.input_shape.empty() || shape_numel(s.input_shape) == 0) {
      throw ShapeError("network input shape must be nonempty");
    }
    for (auto e : s.input_shape) {
      if (e == 0) throw ShapeError("network input extents must be positive");
    }
    switch (s.arch) {
      case ArchTag::kConvNet: {
        if (s.input_shape.size() != 3) {
          throw ShapeError("convnet needs (C,H,W) input");
        }
        if (s.width == 0) throw ShapeError("convnet width must be positive");
        require_classes();
        // Conv bias is omitted: instance norm removes per-channel constants,
        // so its gradient would be identically zero.
        for (int block = 0; block < 3; ++block) {
          conv(s.width, 3, 1, false);
          instance_norm();
          unary(LayerKind::kRelu);
          avgpool();
        }
        linear(s.num_classes);
        break;
      }
      case ArchTag::kLeNet: {
        if (s.input_shape.size() != 3) {
          throw ShapeError("lenet needs (C,H,W) input");
        }
        require_classes();
        conv(6, 5, 2, true);
        unary(LayerKind::kRelu);
        avgpool();
        conv(16, 5, 0, true);
        unary(LayerKind::kRelu);
        avgpool();
        linear(120);
        unary(LayerKind::kRelu);
        linear(84);
        unary(LayerKind::kRelu);
        linear(s.num_classes);
        break;
      }
      case ArchTag::kMlp: {
        if (s.hidden.empty()) {
          throw ShapeError("mlp needs at least one hidden layer");
        }
        require_classes();
        for (std::size_t h : s.hidden) {
          if (h == 0) throw ShapeError("mlp hidden width must be positive");
          linear(h);
          unary(LayerKind::kRelu);
        }
        linear(s.num_classes);
        break;
      }
      case ArchTag::kGenerator:
        build_generator();
        break;
    }
  }

  void build_generator() {
    const auto& s = spec_;
    if (s.input_shape.size() != 1) {
      throw ShapeError("generator input must be a flat latent vector");
    }
    const Shape& out = s.output_shape;
    if (out.empty() || shape_numel(out) == 0) {
      throw ShapeError("generator output shape must be nonempty");
    }
    if (out.size() == 3) {
      std::size_t ups = 0;
      std::size_t h = out[1], w = out[2];
      while (ups < 2 && h % 2 == 0 && w % 2 == 0 && h >= 8 && w >= 8) {
        h /= 2;
        w /= 2;
        ++ups;
      }
      const std::size_t ch = s.gen_channels;
      if (ch == 0) throw ShapeError("generator channels must be positive");
      linear(ch * h * w);
      unary(LayerKind::kRelu);
      reshape({ch, h, w});
      for (std::size_t u = 0; u < ups; ++u) {
        upsample();
        conv(ch, 3, 1, true);
        unary(LayerKind::kRelu);
      }
      conv(out[0], 3, 1, true);
      unary(LayerKind::kTanh);
    } else if (out.size() == 1) {
      for (std::size_t hdim : s.hidden) {
        if (hdim == 0) throw ShapeError("generator hidden width must be > 0");
        linear(hdim);
        unary(LayerKind::kRelu);
      }
      linear(out[0]);
      unary(LayerKind::kTanh);
    } else {
      throw ShapeError("generator output must be (C,H,W) or (d)");
    }
  }

  void require_classes() const {
    if (spec_.num_classes < 2) {
      throw ShapeError("classifier needs at least 2 classes");
    }
  }

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<Shape> param_shapes_;
  std::size_t max_act_ = 0;
};

// Kaiming (fan-in) Gaussian weights, zero biases, unit norm scale and zero
// norm shift. Draws happen in double so every scalar type sees the same
// values for a given seed.
template <typename T>
NetworkParams<T> init_params(const Network& net, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NetworkParams<T> params;
  for (const auto& shape : net.param_shapes()) params.emplace_back(shape);
  for (const Layer& l : net.layers()) {
    const std::size_t o = l.param_offset;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kLinear: {
        auto& w = params[o];
        const std::size_t fan_in = w.size() / w.dim(0);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : w.data()) v = T(normal(rng) * stddev);
        break;
      }
      case LayerKind::kInstanceNorm:
        params[o].fill(T(1));
        break;
      default:
        break;
    }
  }
  return params;
}

// Per-example scratch space: the output activation of every layer.
template <typename T>
struct Workspace {
  std::vector<std::vector<T>> acts;
  std::vector<T> grad_a, grad_b;

  explicit Workspace(const Network& net) {
    acts.reserve(net.layers().size());
    for (const Layer& l : net.layers()) {
      acts.emplace_back(shape_numel(l.out_shape), T(0));
    }
    grad_a.resize(std::max(net.max_activation(), net.input_size()));
    grad_b.resize(grad_a.size());
  }
};

namespace internal {

template <typename T>
void conv_forward(const Layer& l, std::span<const T> in, const T* w,
                  const T* b, std::span<T> out) {
  const std::size_t H = l.in_shape[1], W = l.in_shape[2];
  const std::size_t OH = l.out_shape[1], OW = l.out_shape[2];
  const std::size_t K = l.kernel;
  const long P = static_cast<long>(l.pad);
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    T* op = out.data() + o * OH * OW;
    const T bias = b ? b[o] : T(0);
    std::fill(op, op + OH * OW, bias);
    for (std::size_t c = 0; c < l.in_ch; ++c) {
      const T* ip = in.data() + c * H * W;
      for (std::size_t ky = 0; ky < K; ++ky) {
        const long dy = static_cast<long>(ky) - P;
        const long y0 = std::max(0L, -dy);
        const long y1 = std::min<long>(OH, static_cast<long>(H) - dy);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const T wv = w[((o * l.in_ch + c) * K + ky) * K + kx];
          const long dx = static_cast<long>(kx) - P;
          const long x0 = std::max(0L, -dx);
          const long x1 = std::min<long>(OW, static_cast<long>(W) - dx);
          for (long y = y0; y < y1; ++y) {
            T* orow = op + y * OW;
            const T* irow = ip + (y + dy) * static_cast<long>(W) + dx;
            for (long x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients (when dw != nullptr) and writes the input
// gradient (when din is nonempty).
template <typename T>
void conv_backward(const Layer& l, std::span<const T> in, const T* w,
                   std::span<const T> dout, T* dw, T* db, std::span<T> din,
                   bool overwrite = false) {
  const std::size_t H = l.in_shape[1], W = l.in_shape[2];
  const std::size_t OH = l.out_shape[1], OW = l.out_shape[2];
  const std::size_t K = l.kernel;
  const long P = static_cast<long>(l.pad);
  if (!din.empty()) std::fill(din.begin(), din.end(), T(0));
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    const T* gp = dout.data() + o * OH * OW;
    if (db) {
      T s(0);
      for (std::size_t i = 0; i < OH * OW; ++i) s += gp[i];
      db[o] = overwrite ? s : db[o] + s;
    }
    for (std::size_t c = 0; c < l.in_ch; ++c) {
      const T* ip = in.data() + c * H * W;
      T* dip = din.empty() ? nullptr : din.data() + c * H * W;
      for (std::size_t ky = 0; ky < K; ++ky) {
        const long dy = static_cast<long>(ky) - P;
        const long y0 = std::max(0L, -dy);
        const long y1 = std::min<long>(OH, static_cast<long>(H) - dy);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const std::size_t widx = ((o * l.in_ch + c) * K + ky) * K + kx;
          const T wv = w[widx];
          const long dx = static_cast<long>(kx) - P;
          const long x0 = std::max(0L, -dx);
          const long x1 = std::min<long>(OW, static_cast<long>(W) - dx);
          T acc(0);
          for (long y = y0; y < y1; ++y) {
            const T* grow = gp + y * OW;
            const long ioff = (y + dy) * static_cast<long>(W) + dx;
            if (dw) {
              const T* irow = ip + ioff;
              for (long x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            }
            if (dip) {
              T* drow = dip + ioff;
              for (long x = x0; x < x1; ++x) drow[x] += wv * grow[x];
            }
          }
          if (dw) dw[widx] = overwrite ? acc : dw[widx] + acc;
        }
      }
    }
  }
}

template <typename T>
void instance_norm_forward(const Layer& l, std::span<const T> in,
                           const T* gamma, const T* beta, std::span<T> out) {
  using std::sqrt;
  const std::size_t C = l.in_shape[0];
  const std::size_t n = in.size() / C;
  const T inv_n = T(1) / T(static_cast<double>(n));
  for (std::size_t c = 0; c < C; ++c) {
    const T* x = in.data() + c * n;
    T* y = out.data() + c * n;
    T mean(0);
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean *= inv_n;
    T var(0);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = x[i] - mean;
      var += d * d;
    }
    var *= inv_n;
    const T inv_std = T(1) / sqrt(var + T(kInstanceNormEps));
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = gamma[c] * ((x[i] - mean) * inv_std) + beta[c];
    }
  }
}

template <typename T>
void instance_norm_backward(const Layer& l, std::span<const T> in,
                            const T* gamma, std::span<const T> dout,
                            T* dgamma, T* dbeta, std::span<T> din,
                            bool overwrite = false) {
  using std::sqrt;
  const std::size_t C = l.in_shape[0];
  const std::size_t n = in.size() / C;
  const T inv_n = T(1) / T(static_cast<double>(n));
  for (std::size_t c = 0; c < C; ++c) {
    const T* x = in.data() + c * n;
    const T* g = dout.data() + c * n;
    T mean(0);
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean *= inv_n;
    T var(0);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = x[i] - mean;
      var += d * d;
    }
    var *= inv_n;
    const T inv_std = T(1) / sqrt(var + T(kInstanceNormEps));
    T sum_g(0), sum_gx(0);
    for (std::size_t i = 0; i < n; ++i) {
      const T xhat = (x[i] - mean) * inv_std;
      sum_g += g[i];
      sum_gx += g[i] * xhat;
    }
    if (dgamma) {
      dgamma[c] = overwrite ? sum_gx : dgamma[c] + sum_gx;
      dbeta[c] = overwrite ? sum_g : dbeta[c] + sum_g;
    }
    if (!din.empty()) {
      // dx = gamma * inv_std / n * (n*g - sum(g) - xhat*sum(g*xhat))
      T* dx = din.data() + c * n;
      const T scale = gamma[c] * inv_std * inv_n;
      const T nn = T(static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const T xhat = (x[i] - mean) * inv_std;
        dx[i] = scale * (nn * g[i] - sum_g - xhat * sum_gx);
      }
    }
  }
}

template <typename T>
void linear_forward(const Layer& l, std::span<const T> in, const T* w,
                    const T* b, std::span<T> out) {
  const std::size_t I = l.in_ch;
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    const T* row = w + o * I;
    // Four interleaved partial sums; the order is fixed, so results stay
    // reproducible.
    T s0(0), s1(0), s2(0), s3(0);
    std::size_t i = 0;
    for (; i + 4 <= I; i += 4) {
      s0 += row[i] * in[i];
      s1 += row[i + 1] * in[i + 1];
      s2 += row[i + 2] * in[i + 2];
      s3 += row[i + 3] * in[i + 3];
    }
    for (; i < I; ++i) s0 += row[i] * in[i];
    out[o] = ((s0 + s1) + (s2 + s3)) + b[o];
  }
}

template <typename T>
void linear_backward(const Layer& l, std::span<const T> in, const T* w,
                     std::span<const T> dout, T* dw, T* db, std::span<T> din,
                     bool overwrite = false) {
  const std::size_t I = l.in_ch;
  if (!din.empty()) std::fill(din.begin(), din.end(), T(0));
  for (std::size_t o = 0; o < l.out_ch; ++o) {
    const T g = dout[o];
    if (dw) {
      T* drow = dw + o * I;
      if (overwrite) {
        for (std::size_t i = 0; i < I; ++i) drow[i] = g * in[i];
        db[o] = g;
      } else {
        for (std::size_t i = 0; i < I; ++i) drow[i] += g * in[i];
        db[o] += g;
      }
    }
    if (!din.empty()) {
      const T* row = w + o * I;
      for (std::size_t i = 0; i < I; ++i) din[i] += row[i] * g;
    }
  }
}

}  // namespace internal

// Runs one example through the network; returns a view of the output
// activation stored in `ws`.
template <typename T>
std::span<const T> forward_example(const Network& net,
                                   const NetworkParams<T>& params,
                                   std::span<const T> input,
                                   Workspace<T>& ws) {
  using std::tanh;
  std::span<const T> cur = input;
  const auto& layers = net.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Layer& l = layers[li];
    std::span<T> out(ws.acts[li]);
    const T* p0 = l.param_count > 0 ? params[l.param_offset].data().data()
                                    : nullptr;
    const T* p1 = l.param_count > 1 ? params[l.param_offset + 1].data().data()
                                    : nullptr;
    switch (l.kind) {
      case LayerKind::kConv:
        internal::conv_forward<T>(l, cur, p0, p1, out);
        break;
      case LayerKind::kInstanceNorm:
        internal::instance_norm_forward<T>(l, cur, p0, p1, out);
        break;
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < cur.size(); ++i) {
          out[i] = cur[i] > T(0) ? cur[i] : T(0);
        }
        break;
      case LayerKind::kTanh:
        for (std::size_t i = 0; i < cur.size(); ++i) out[i] = tanh(cur[i]);
        break;
      case LayerKind::kAvgPool: {
        const std::size_t C = l.in_shape[0], H = l.in_shape[1],
                          W = l.in_shape[2];
        const std::size_t OH = l.out_shape[1], OW = l.out_shape[2];
        const T q(0.25);
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < OH; ++y) {
            for (std::size_t x = 0; x < OW; ++x) {
              const T* p = cur.data() + (c * H + 2 * y) * W + 2 * x;
              out[(c * OH + y) * OW + x] = q * (p[0] + p[1] + p[W] + p[W + 1]);
            }
          }
        }
        break;
      }
      case LayerKind::kUpsample: {
        const std::size_t C = l.in_shape[0], H = l.in_shape[1],
                          W = l.in_shape[2];
        const std::size_t OW = 2 * W;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < 2 * H; ++y) {
            for (std::size_t x = 0; x < OW; ++x) {
              out[(c * 2 * H + y) * OW + x] =
                  cur[(c * H + y / 2) * W + x / 2];
            }
          }
        }
        break;
      }
      case LayerKind::kLinear:
        internal::linear_forward<T>(l, cur, p0, p1, out);
        break;
      case LayerKind::kReshape:
        std::copy(cur.begin(), cur.end(), out.begin());
        break;
    }
    cur = out;
  }
  return cur;
}

// Backpropagates `dout` (gradient w.r.t. the network output) through the
// activations left in `ws` by forward_example. Parameter gradients are
// accumulated into `grads` when non-null (or overwrite it when `overwrite`
// is set); the input gradient is written to `dinput` when nonempty.
template <typename T>
void backward_example(const Network& net, const NetworkParams<T>& params,
                      std::span<const T> input, Workspace<T>& ws,
                      std::span<const T> dout, LayerGradients<T>* grads,
                      std::span<T> dinput, bool overwrite = false) {
  const auto& layers = net.layers();
  std::vector<T>* g_cur = &ws.grad_a;
  std::vector<T>* g_next = &ws.grad_b;
  std::copy(dout.begin(), dout.end(), g_cur->begin());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& l = layers[li];
    const bool first = li == 0;
    if (first && dinput.empty() && l.param_count == 0) break;
    std::span<const T> in =
        first ? input : std::span<const T>(ws.acts[li - 1]);
    std::span<const T> out(ws.acts[li]);
    const std::size_t n_out = out.size();
    std::span<const T> g(g_cur->data(), n_out);
    std::span<T> din;
    if (!first) {
      din = std::span<T>(g_next->data(), in.size());
    } else if (!dinput.empty()) {
      din = dinput;
    }
    const T* p0 = l.param_count > 0 ? params[l.param_offset].data().data()
                                    : nullptr;
    const T* p1 = l.param_count > 1 ? params[l.param_offset + 1].data().data()
                                    : nullptr;
    T* d0 = (grads && l.param_count > 0)
                ? (*grads)[l.param_offset].data().data()
                : nullptr;
    T* d1 = (grads && l.param_count > 1)
                ? (*grads)[l.param_offset + 1].data().data()
                : nullptr;
    switch (l.kind) {
      case LayerKind::kConv:
        internal::conv_backward<T>(l, in, p0, g, d0, d1, din, overwrite);
        break;
      case LayerKind::kInstanceNorm:
        internal::instance_norm_backward<T>(l, in, p0, g, d0, d1, din,
                                             overwrite);
        break;
      case LayerKind::kRelu:
        for (std::size_t i = 0; i < din.size(); ++i) {
          din[i] = in[i] > T(0) ? g[i] : T(0);
        }
        break;
      case LayerKind::kTanh:
        for (std::size_t i = 0; i < din.size(); ++i) {
          din[i] = g[i] * (T(1) - out[i] * out[i]);
        }
        break;
      case LayerKind::kAvgPool: {
        if (din.empty()) break;
        const std::size_t C = l.in_shape[0], H = l.in_shape[1],
                          W = l.in_shape[2];
        const std::size_t OH = l.out_shape[1], OW = l.out_shape[2];
        std::fill(din.begin(), din.end(), T(0));
        const T q(0.25);
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < OH; ++y) {
            for (std::size_t x = 0; x < OW; ++x) {
              const T v = q * g[(c * OH + y) * OW + x];
              T* p = din.data() + (c * H + 2 * y) * W + 2 * x;
              p[0] = v;
              p[1] = v;
              p[W] = v;
              p[W + 1] = v;
            }
          }
        }
        break;
      }
      case LayerKind::kUpsample: {
        if (din.empty()) break;
        const std::size_t C = l.in_shape[0], H = l.in_shape[1],
                          W = l.in_shape[2];
        const std::size_t OW = 2 * W;
        std::fill(din.begin(), din.end(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < 2 * H; ++y) {
            for (std::size_t x = 0; x < OW; ++x) {
              din[(c * H + y / 2) * W + x / 2] += g[(c * 2 * H + y) * OW + x];
            }
          }
        }
        break;
      }
      case LayerKind::kLinear:
        internal::linear_backward<T>(l, in, p0, g, d0, d1, din, overwrite);
        break;
      case LayerKind::kReshape:
        if (!din.empty()) std::copy(g.begin(), g.end(), din.begin());
        break;
    }
    std::swap(g_cur, g_next);
  }
}

// Softmax cross-entropy of one logit row with max-subtraction. Writes
// scale * dloss/dlogits into `dlogits` and returns the unscaled loss.
template <typename T>
T cross_entropy(std::span<const T> logits, int label, T scale,
                std::span<T> dlogits) {
  using std::exp;
  using std::log;
  T m = logits[0];
  for (const T& z : logits) {
    if (z > m) m = z;
  }
  T sum(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] = exp(logits[i] - m);
    sum += dlogits[i];
  }
  const T log_sum = log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] = scale * (dlogits[i] / sum);
  }
  dlogits[static_cast<std::size_t>(label)] -= scale;
  return log_sum - (logits[static_cast<std::size_t>(label)] - m);
}

namespace internal {

template <typename T>
void check_batch(const Network& net, const Tensor<T>& batch) {
  const Shape& in = net.input_shape();
  const Shape& s = batch.shape();
  if (s.size() != in.size() + 1 || !std::equal(in.begin(), in.end(),
                                               s.begin() + 1)) {
    throw ShapeError("batch shape " + shape_str(s) +
                     " does not match network input " + shape_str(in));
  }
}

inline void check_labels(const Network& net, std::span<const int> labels,
                         std::size_t batch) {
  if (labels.size() != batch) {
    throw ShapeError("label count " + std::to_string(labels.size()) +
                     " != batch size " + std::to_string(batch));
  }
  const int L = static_cast<int>(net.spec().num_classes);
  for (int y : labels) {
    if (y < 0 || y >= L) {
      throw InvalidArgument("label " + std::to_string(y) +
                            " out of range [0," + std::to_string(L) + ")");
    }
  }
}

}  // namespace internal

// Logits for every row of `batch`, shape (B, L).
template <typename T>
Tensor<T> forward(const NetworkParams<T>& params, const Network& net,
                  const Tensor<T>& batch) {
  internal::check_batch(net, batch);
  const std::size_t B = batch.dim(0);
  const std::size_t L = net.output_size();
  Tensor<T> logits({B, L});
  parallel_for(B, [&](std::size_t i) {
    Workspace<T> ws(net);
    auto out = forward_example(net, params, batch.row(i), ws);
    std::copy(out.begin(), out.end(), logits.row(i).begin());
  });
  return logits;
}

template <typename T>
struct LossAndGrad {
  T loss;
  LayerGradients<T> grads;
};

// Gradient of each example's own loss, in batch order.
template <typename T>
std::vector<LayerGradients<T>> per_example_grads(
    const NetworkParams<T>& params, const Network& net,
    const Tensor<T>& batch, std::span<const int> labels,
    std::vector<T>* losses = nullptr) {
  internal::check_batch(net, batch);
  const std::size_t B = batch.dim(0);
  if (B == 0) throw InvalidArgument("per_example_grads: empty batch");
  internal::check_labels(net, labels, B);
  std::vector<LayerGradients<T>> out(B);
  if (losses) losses->assign(B, T(0));
  parallel_for(B, [&](std::size_t i) {
    Workspace<T> ws(net);
    auto logits = forward_example(net, params, batch.row(i), ws);
    std::vector<T> dlogits(logits.size());
    const T loss = cross_entropy<T>(logits, labels[i], T(1), dlogits);
    out[i] = zeros_like(params);
    backward_example<T>(net, params, batch.row(i), ws, dlogits, &out[i], {});
    if (losses) (*losses)[i] = loss;
  });
  return out;
}

// Fixed number of partial sums used by batch reductions. Each partial sum
// covers a contiguous index range and is accumulated in index order; partials
// are then added in order. The result therefore depends on neither the thread
// count nor scheduling.
inline constexpr std::size_t kReductionChunks = 8;

// Calls fn(i, grads) for every i in [0, n), where `grads` is the partial sum
// owning i, and returns the ordered total.
template <typename T, typename Fn>
LayerGradients<T> chunked_gradient_sum(const TensorList<T>& like,
                                       std::size_t n, Fn&& fn) {
  const std::size_t chunks = std::min(kReductionChunks, std::max<std::size_t>(n, 1));
  const std::size_t per = (n + chunks - 1) / chunks;
  std::vector<LayerGradients<T>> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    partial[c] = zeros_like(like);
    const std::size_t end = std::min(n, (c + 1) * per);
    for (std::size_t i = c * per; i < end; ++i) fn(i, partial[c]);
  });
  LayerGradients<T> total = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c) list_axpy(total, partial[c], T(1));
  return total;
}

// Mean cross-entropy over the batch and its exact parameter gradient.
template <typename T>
LossAndGrad<T> loss_and_grad(const NetworkParams<T>& params,
                             const Network& net, const Tensor<T>& batch,
                             std::span<const int> labels) {
  internal::check_batch(net, batch);
  const std::size_t B = batch.dim(0);
  if (B == 0) throw InvalidArgument("loss_and_grad: empty batch");
  internal::check_labels(net, labels, B);
  const T inv_b = T(1) / T(static_cast<double>(B));
  std::vector<T> losses(B, T(0));
  LossAndGrad<T> r;
  r.grads = chunked_gradient_sum<T>(
      params, B, [&](std::size_t i, LayerGradients<T>& acc) {
        Workspace<T> ws(net);
        auto logits = forward_example(net, params, batch.row(i), ws);
        std::vector<T> dlogits(logits.size());
        losses[i] = cross_entropy<T>(logits, labels[i], inv_b, dlogits);
        backward_example<T>(net, params, batch.row(i), ws, dlogits, &acc, {});
      });
  r.loss = T(0);
  for (const T& l : losses) r.loss += l;
  r.loss *= inv_b;
  return r;
}

// Mean cross-entropy only.
template <typename T>
T mean_loss(const NetworkParams<T>& params, const Network& net,
            const Tensor<T>& batch, std::span<const int> labels) {
  internal::check_labels(net, labels, batch.dim(0));
  Tensor<T> logits = forward(params, net, batch);
  const std::size_t L = logits.dim(1);
  std::vector<T> scratch(L);
  T total(0);
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    total += cross_entropy<T>(logits.row(i), labels[i], T(1), scratch);
  }
  return total / T(static_cast<double>(logits.dim(0)));
}

// Gradient of the mean cross-entropy w.r.t. the inputs, shaped like `batch`.
template <typename T>
Tensor<T> input_grad(const NetworkParams<T>& params, const Network& net,
                     const Tensor<T>& batch, std::span<const int> labels) {
  internal::check_batch(net, batch);
  const std::size_t B = batch.dim(0);
  internal::check_labels(net, labels, B);
  Tensor<T> out(batch.shape());
  const T inv_b = T(1) / T(static_cast<double>(B));
  parallel_for(B, [&](std::size_t i) {
    Workspace<T> ws(net);
    auto logits = forward_example(net, params, batch.row(i), ws);
    std::vector<T> dlogits(logits.size());
    cross_entropy<T>(logits, labels[i], inv_b, dlogits);
    backward_example<T>(net, params, batch.row(i), ws, dlogits, nullptr,
                        out.row(i));
  });
  return out;
}

}  // namespace psg

#endif  // PSG_NETWORK_HPP_
