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

#ifndef PSG_SYNTHETIC_HPP_
#define PSG_SYNTHETIC_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <zlib.h>

#include "psg/data.hpp"
#include "psg/error.hpp"
#include "psg/rng.hpp"
#include "psg/tensor.hpp"

namespace psg {

// The released artifact: spc learnable samples per class with fixed,
// class-major labels.
struct SyntheticSet {
  Tensor<float> features;  // (M, example shape...)
  std::vector<int> labels;
  std::size_t spc = 0;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const {
    const auto& s = features.shape();
    return Shape(s.begin() + 1, s.end());
  }

  void validate() const {
    if (spc == 0 || num_classes < 2) {
      throw InvalidArgument("synthetic set needs spc >= 1 and >= 2 classes");
    }
    if (labels.size() != spc * num_classes || features.rank() < 2 ||
        features.dim(0) != labels.size()) {
      throw ShapeError("synthetic set size inconsistent with spc * classes");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != static_cast<int>(i / spc)) {
        throw InvalidArgument("synthetic labels must be class-major and "
                              "balanced");
      }
    }
  }

  // View as a labeled dataset (provenance kSynthetic) for training code.
  LabeledDataset as_dataset() const {
    LabeledDataset ds;
    ds.features = features;
    ds.labels = labels;
    ds.num_classes = num_classes;
    ds.provenance = Provenance::kSynthetic;
    ds.source = "synthetic";
    return ds;
  }

  bool operator==(const SyntheticSet&) const = default;
};

inline std::vector<int> balanced_labels(std::size_t spc, std::size_t L) {
  std::vector<int> labels;
  labels.reserve(spc * L);
  for (std::size_t c = 0; c < L; ++c) {
    for (std::size_t k = 0; k < spc; ++k) labels.push_back(static_cast<int>(c));
  }
  return labels;
}

// Standard-Gaussian features and spc copies of every class label.
inline SyntheticSet init_synthetic(std::size_t spc, std::size_t L,
                                   const Shape& data_shape, uint64_t seed) {
  if (spc < 1) throw InvalidArgument("spc must be >= 1");
  if (L < 2) throw InvalidArgument("need at least 2 classes");
  if (data_shape.empty()) throw ShapeError("data shape must be nonempty");
  SyntheticSet s;
  s.spc = spc;
  s.num_classes = L;
  Shape shape{spc * L};
  shape.insert(shape.end(), data_shape.begin(), data_shape.end());
  s.features = Tensor<float>(shape);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : s.features.data()) v = static_cast<float>(normal(rng));
  s.labels = balanced_labels(spc, L);
  return s;
}

// ---------------------------------------------------------------------------
// PSG container, little-endian:
//   "PSGSET\0" | u16 version | u32 L | u32 spc | u32 rank | u32 dims[rank] |
//   f32 features[M * prod(dims)] | u16 labels[M] | u32 crc32(all preceding)

inline constexpr char kPsgMagic[7] = {'P', 'S', 'G', 'S', 'E', 'T', '\0'};
inline constexpr uint16_t kPsgVersion = 1;

namespace internal {

inline void put_u16(std::vector<unsigned char>& b, uint16_t v) {
  b.push_back(static_cast<unsigned char>(v));
  b.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put_u32(std::vector<unsigned char>& b, uint32_t v) {
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<unsigned char>(v >> (8 * k)));
}
inline uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline uint32_t get_u32(const unsigned char* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}
inline uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  return static_cast<uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace internal

inline std::vector<unsigned char> encode_synthetic(const SyntheticSet& set) {
  set.validate();
  static_assert(sizeof(float) == 4);
  std::vector<unsigned char> b(kPsgMagic, kPsgMagic + 7);
  internal::put_u16(b, kPsgVersion);
  internal::put_u32(b, static_cast<uint32_t>(set.num_classes));
  internal::put_u32(b, static_cast<uint32_t>(set.spc));
  const Shape e = set.example_shape();
  internal::put_u32(b, static_cast<uint32_t>(e.size()));
  for (auto d : e) internal::put_u32(b, static_cast<uint32_t>(d));
  for (float v : set.features.data()) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    internal::put_u32(b, bits);
  }
  for (int y : set.labels) internal::put_u16(b, static_cast<uint16_t>(y));
  internal::put_u32(b, internal::crc32_of(b.data(), b.size()));
  return b;
}

inline SyntheticSet decode_synthetic(const std::vector<unsigned char>& b) {
  auto need = [&](std::size_t off, std::size_t n) {
    if (b.size() < off + n) throw TruncatedError("PSG container truncated");
  };
  need(0, 9);
  if (std::memcmp(b.data(), kPsgMagic, 7) != 0) {
    throw FormatError("PSG container: bad magic");
  }
  const uint16_t version = internal::get_u16(b.data() + 7);
  if (version != kPsgVersion) {
    throw UnsupportedVersionError("PSG container version " +
                                  std::to_string(version) + " unsupported");
  }
  need(9, 12);
  std::size_t off = 9;
  SyntheticSet s;
  s.num_classes = internal::get_u32(b.data() + off);
  s.spc = internal::get_u32(b.data() + off + 4);
  const uint32_t rank = internal::get_u32(b.data() + off + 8);
  off += 12;
  if (rank == 0 || rank > 8) throw FormatError("PSG container: bad rank");
  need(off, 4 * rank);
  Shape shape{s.spc * s.num_classes};
  for (uint32_t k = 0; k < rank; ++k) {
    shape.push_back(internal::get_u32(b.data() + off));
    off += 4;
  }
  const std::size_t m = shape[0];
  const std::size_t n = shape_numel(shape);
  need(off, 4 * n + 2 * m + 4);
  if (b.size() != off + 4 * n + 2 * m + 4) {
    throw FormatError("PSG container: trailing bytes");
  }
  const std::size_t body = b.size() - 4;
  if (internal::crc32_of(b.data(), body) != internal::get_u32(b.data() + body)) {
    throw IntegrityError("PSG container: CRC mismatch");
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const uint32_t bits = internal::get_u32(b.data() + off + 4 * i);
    std::memcpy(&data[i], &bits, 4);
  }
  off += 4 * n;
  s.features = Tensor<float>::checked(shape, std::move(data));
  s.labels.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    s.labels[i] = internal::get_u16(b.data() + off + 2 * i);
  }
  s.validate();
  return s;
}

inline void save_synthetic(const SyntheticSet& set, const std::string& path) {
  const auto bytes = encode_synthetic(set);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline SyntheticSet load_synthetic(const std::string& path) {
  return decode_synthetic(read_file_bytes(path, Provenance::kSynthetic));
}

// Writes a binary PGM with one row of tiles per class. Single-channel images
// only. Values are mapped back through `norm` when given, then clamped to
// [0,1].
inline void export_pgm_grid(const SyntheticSet& set, const std::string& path,
                            const std::optional<NormalizationRecord>& norm = {}) {
  const Shape e = set.example_shape();
  if (e.size() != 3 || e[0] != 1) {
    throw ShapeError("image export needs (1,H,W) samples, got " + shape_str(e));
  }
  const std::size_t H = e[1], W = e[2], gap = 1;
  const std::size_t cols = set.spc, rows = set.num_classes;
  const std::size_t GW = cols * (W + gap) - gap, GH = rows * (H + gap) - gap;
  std::vector<unsigned char> img(GW * GH, 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t r = i / set.spc, c = i % set.spc;
    const auto px = set.features.row(i);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double v = px[y * W + x];
        if (norm) v = v * norm->std.at(0) + norm->mean.at(0);
        v = std::clamp(v, 0.0, 1.0);
        img[(r * (H + gap) + y) * GW + c * (W + gap) + x] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "P5\n" << GW << " " << GH << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size()));
}

}  // namespace psg

#endif  // PSG_SYNTHETIC_HPP_
