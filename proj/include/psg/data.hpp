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

#ifndef PSG_DATA_HPP_
#define PSG_DATA_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psg/error.hpp"
#include "psg/rng.hpp"
#include "psg/tensor.hpp"

namespace psg {

// Where a dataset's rows came from. Evaluation code refuses kRealTrain.
enum class Provenance { kRealTrain, kRealTest, kSynthetic, kFixture };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kRealTrain:
      return "real-train";
    case Provenance::kRealTest:
      return "real-test";
    case Provenance::kSynthetic:
      return "synthetic";
    case Provenance::kFixture:
      return "fixture";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// File access audit: every loader records the path it opened and the role of
// the data, so tests can prove which files a command touched.

struct FileAccess {
  std::string path;
  Provenance role;
};

class FileAudit {
 public:
  static FileAudit& instance() {
    static FileAudit audit;
    return audit;
  }
  void record(std::string path, Provenance role) {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back({std::move(path), role});
  }
  std::vector<FileAccess> snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
  }
  void clear() {
    std::lock_guard<std::mutex> lock(mu_);
    log_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::vector<FileAccess> log_;
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path,
                                                  Provenance role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  FileAudit::instance().record(path, role);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

// ---------------------------------------------------------------------------

// Per-channel standardization constants; flat data has a single channel.
struct NormalizationRecord {
  std::vector<double> mean;
  std::vector<double> std;
  bool operator==(const NormalizationRecord&) const = default;
};

struct LabeledDataset {
  Tensor<float> features;  // (N, example shape...)
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::optional<NormalizationRecord> normalization;  // set once applied
  Provenance provenance = Provenance::kFixture;
  std::string source;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const {
    const auto& s = features.shape();
    return Shape(s.begin() + 1, s.end());
  }
  std::size_t channels() const {
    const Shape e = example_shape();
    return e.size() == 3 ? e[0] : 1;
  }

  // Rows at `indices`, in that order.
  LabeledDataset subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    Shape shape = features.shape();
    shape[0] = indices.size();
    out.features = Tensor<float>(shape);
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const auto src = features.row(indices[k]);
      std::copy(src.begin(), src.end(), out.features.row(k).begin());
      out.labels.push_back(labels[indices[k]]);
    }
    out.num_classes = num_classes;
    out.normalization = normalization;
    out.provenance = provenance;
    out.source = source;
    return out;
  }

  void validate() const {
    if (features.rank() < 2 || features.dim(0) != labels.size()) {
      throw ShapeError("dataset features/labels disagree");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw InvalidArgument("dataset label " + std::to_string(y) +
                              " outside [0," + std::to_string(num_classes) +
                              ")");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// IDX (MNIST distribution format, big-endian).

inline constexpr uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelsMagic = 0x00000801;

namespace internal {
inline uint32_t read_be32(const std::vector<unsigned char>& b,
                          std::size_t off) {
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
         (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}
}  // namespace internal

// Loads an IDX image/label pair. Pixels are scaled to [0,1]; no
// standardization is applied here (see fit_normalization).
inline LabeledDataset load_idx(const std::string& images_path,
                               const std::string& labels_path,
                               Provenance role = Provenance::kRealTrain) {
  const auto img = read_file_bytes(images_path, role);
  const auto lab = read_file_bytes(labels_path, role);
  if (img.size() < 16) throw TruncatedError(images_path + ": header truncated");
  if (lab.size() < 8) throw TruncatedError(labels_path + ": header truncated");
  if (internal::read_be32(img, 0) != kIdxImagesMagic) {
    throw FormatError(images_path + ": bad IDX image magic");
  }
  if (internal::read_be32(lab, 0) != kIdxLabelsMagic) {
    throw FormatError(labels_path + ": bad IDX label magic");
  }
  const std::size_t n = internal::read_be32(img, 4);
  const std::size_t rows = internal::read_be32(img, 8);
  const std::size_t cols = internal::read_be32(img, 12);
  const std::size_t n_labels = internal::read_be32(lab, 4);
  if (rows == 0 || cols == 0) throw FormatError(images_path + ": zero extent");
  if (img.size() < 16 + n * rows * cols) {
    throw TruncatedError(images_path + ": pixel data truncated");
  }
  if (lab.size() < 8 + n_labels) {
    throw TruncatedError(labels_path + ": label data truncated");
  }
  if (n != n_labels) {
    throw CountMismatchError("IDX count mismatch: " + std::to_string(n) +
                             " images vs " + std::to_string(n_labels) +
                             " labels");
  }
  if (n == 0) throw FormatError(images_path + ": no examples");
  LabeledDataset ds;
  ds.features = Tensor<float>({n, 1, rows, cols});
  auto& f = ds.features.data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = static_cast<float>(img[16 + i]) / 255.0f;
  }
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  ds.provenance = role;
  ds.source = images_path;
  return ds;
}

// Writes an IDX image/label pair from raw [0,1] image data (fixtures, tools).
inline void save_idx(const LabeledDataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
  const Shape e = ds.example_shape();
  if (e.size() != 3 || e[0] != 1) throw ShapeError("IDX needs (1,H,W) images");
  auto be32 = [](std::ostream& os, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  std::ofstream im(images_path, std::ios::binary);
  std::ofstream lb(labels_path, std::ios::binary);
  if (!im || !lb) throw IoError("cannot write IDX files");
  be32(im, kIdxImagesMagic);
  be32(im, static_cast<uint32_t>(ds.size()));
  be32(im, static_cast<uint32_t>(e[1]));
  be32(im, static_cast<uint32_t>(e[2]));
  for (float v : ds.features.data()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    im.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255))));
  }
  be32(lb, kIdxLabelsMagic);
  be32(lb, static_cast<uint32_t>(ds.size()));
  for (int y : ds.labels) lb.put(static_cast<char>(y));
}

// ---------------------------------------------------------------------------
// CSV: one example per line, label first, then the flat feature vector.

inline LabeledDataset load_csv(const std::string& path,
                               Provenance role = Provenance::kRealTrain) {
  const auto bytes = read_file_bytes(path, role);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string line;
  std::vector<float> values;
  std::vector<int> labels;
  std::size_t d = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      std::string_view cell(line.data() + pos, comma - pos);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      double v = 0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw FormatError(path + ":" + std::to_string(lineno) +
                          ": malformed number '" + std::string(cell) + "'");
      }
      row.push_back(v);
      pos = comma + 1;
    }
    if (row.size() < 2) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": need a label and at least one feature");
    }
    if (d == 0) d = row.size() - 1;
    if (row.size() - 1 != d) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": inconsistent feature count");
    }
    const double lab = row[0];
    if (lab < 0 || lab != std::floor(lab)) {
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": label must be a nonnegative integer");
    }
    labels.push_back(static_cast<int>(lab));
    for (std::size_t k = 1; k < row.size(); ++k) {
      values.push_back(static_cast<float>(row[k]));
    }
  }
  if (labels.empty()) throw FormatError(path + ": no examples");
  LabeledDataset ds;
  ds.features = Tensor<float>({labels.size(), d}, std::move(values));
  ds.num_classes =
      static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) +
      1;
  ds.labels = std::move(labels);
  ds.provenance = role;
  ds.source = path;
  return ds;
}

inline void save_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.precision(9);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (float v : ds.features.row(i)) out << "," << v;
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Preprocessing.

// 2x2 average pooling of (C,H,W) images; odd trailing rows/cols are dropped.
inline LabeledDataset downsample2x(const LabeledDataset& ds) {
  const Shape e = ds.example_shape();
  if (e.size() != 3 || e[1] < 2 || e[2] < 2) {
    throw ShapeError("downsample needs (C,H,W) images of extent >= 2");
  }
  const std::size_t C = e[0], H = e[1], W = e[2], OH = H / 2, OW = W / 2;
  LabeledDataset out = ds;
  out.features = Tensor<float>({ds.size(), C, OH, OW});
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto src = ds.features.row(n);
    auto dst = out.features.row(n);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < OH; ++y) {
        for (std::size_t x = 0; x < OW; ++x) {
          const float* p = src.data() + (c * H + 2 * y) * W + 2 * x;
          dst[(c * OH + y) * OW + x] = 0.25f * (p[0] + p[1] + p[W] + p[W + 1]);
        }
      }
    }
  }
  return out;
}

// Keeps only rows whose label is in `classes` and relabels them to the
// position of their class in that list.
inline LabeledDataset select_classes(const LabeledDataset& ds,
                                     const std::vector<int>& classes,
                                     std::size_t limit_per_class = 0) {
  if (classes.size() < 2) throw InvalidArgument("need at least 2 classes");
  std::vector<int> remap(ds.num_classes, -1);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const int c = classes[k];
    if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes) {
      throw InvalidArgument("class " + std::to_string(c) + " not in dataset");
    }
    if (remap[c] != -1) throw InvalidArgument("duplicate class in selection");
    remap[c] = static_cast<int>(k);
  }
  std::vector<std::size_t> idx;
  std::vector<std::size_t> taken(classes.size(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int r = remap[ds.labels[i]];
    if (r < 0) continue;
    if (limit_per_class && taken[r] >= limit_per_class) continue;
    ++taken[r];
    idx.push_back(i);
  }
  LabeledDataset out = ds.subset(idx);
  for (int& y : out.labels) y = remap[y];
  out.num_classes = classes.size();
  return out;
}

// Mean/std per channel over the whole dataset.
inline NormalizationRecord fit_normalization(const LabeledDataset& ds) {
  const std::size_t C = ds.channels();
  const std::size_t per = ds.features.row_size() / C;
  NormalizationRecord rec;
  rec.mean.assign(C, 0.0);
  rec.std.assign(C, 0.0);
  const double count = static_cast<double>(per * ds.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto row = ds.features.row(n);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < per; ++i) rec.mean[c] += row[c * per + i];
    }
  }
  for (auto& m : rec.mean) m /= count;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto row = ds.features.row(n);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < per; ++i) {
        const double d = row[c * per + i] - rec.mean[c];
        rec.std[c] += d * d;
      }
    }
  }
  for (auto& s : rec.std) {
    s = std::sqrt(s / count);
    if (s < 1e-12) s = 1.0;
  }
  return rec;
}

// Standardizes with `rec`. Applying the record a dataset already carries is a
// no-op; applying a different one is an error.
inline LabeledDataset apply_normalization(const LabeledDataset& ds,
                                          const NormalizationRecord& rec) {
  if (ds.normalization) {
    if (*ds.normalization == rec) return ds;
    throw InvalidArgument("dataset already normalized with other constants");
  }
  const std::size_t C = ds.channels();
  if (rec.mean.size() != C || rec.std.size() != C) {
    throw ShapeError("normalization record has wrong channel count");
  }
  const std::size_t per = ds.features.row_size() / C;
  LabeledDataset out = ds;
  for (std::size_t n = 0; n < out.size(); ++n) {
    auto row = out.features.row(n);
    for (std::size_t c = 0; c < C; ++c) {
      const double m = rec.mean[c], inv = 1.0 / rec.std[c];
      for (std::size_t i = 0; i < per; ++i) {
        row[c * per + i] = static_cast<float>((row[c * per + i] - m) * inv);
      }
    }
  }
  out.normalization = rec;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and splitting.

// Each index in [0, n) is included independently with probability q; the
// result is in ascending order and may be empty.
inline std::vector<std::size_t> poisson_batch(std::size_t n, double q,
                                              Rng& rng) {
  if (!(q > 0 && q <= 1)) throw InvalidArgument("sampling rate must be in (0,1]");
  std::vector<std::size_t> idx;
  if (q == 1) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (u(rng) < q) idx.push_back(i);
  }
  return idx;
}

inline std::vector<std::size_t> poisson_batch(const LabeledDataset& ds,
                                              double q, Rng& rng) {
  return poisson_batch(ds.size(), q, rng);
}

// Partition i holds the rows whose label is in partitions[i], in original
// order; labels keep their global values. Classes with no rows produce a
// warning rather than an error.
inline std::vector<LabeledDataset> class_split(
    const LabeledDataset& ds, const std::vector<std::vector<int>>& partitions,
    std::vector<std::string>* warnings = nullptr) {
  std::set<int> seen;
  for (const auto& part : partitions) {
    for (int c : part) {
      if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes) {
        throw InvalidArgument("class " + std::to_string(c) + " out of range");
      }
      if (!seen.insert(c).second) {
        throw InvalidArgument("class " + std::to_string(c) +
                              " appears in more than one partition");
      }
    }
  }
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (int y : ds.labels) ++counts[y];
  std::vector<LabeledDataset> out;
  for (const auto& part : partitions) {
    std::set<int> members(part.begin(), part.end());
    for (int c : part) {
      if (counts[c] == 0 && warnings) {
        warnings->push_back("class " + std::to_string(c) + " has no examples");
      }
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (members.count(ds.labels[i])) idx.push_back(i);
    }
    out.push_back(ds.subset(idx));
  }
  return out;
}

}  // namespace psg

#endif  // PSG_DATA_HPP_
