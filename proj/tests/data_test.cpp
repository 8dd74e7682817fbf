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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"

namespace psg {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("psg_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void put_be32(std::vector<unsigned char>& b, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

// Hand-built IDX pair: n images of 28x28, labels as given.
void write_idx_pair(const std::string& img, const std::string& lab, std::size_t n_images,
                    const std::vector<unsigned char>& labels,
                    uint32_t img_magic = 0x803) {
  std::vector<unsigned char> a;
  put_be32(a, img_magic);
  put_be32(a, static_cast<uint32_t>(n_images));
  put_be32(a, 28);
  put_be32(a, 28);
  for (std::size_t i = 0; i < n_images * 784; ++i) a.push_back(static_cast<unsigned char>(i % 256));
  write_bytes(img, a);
  std::vector<unsigned char> b;
  put_be32(b, 0x801);
  put_be32(b, static_cast<uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  write_bytes(lab, b);
}

TEST(Idx, LoadsConstructedFixture) {
  TempDir d;
  write_idx_pair(d.file("i"), d.file("l"), 2, {3, 7});
  const auto ds = load_idx(d.file("i"), d.file("l"), Provenance::kFixture);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.features.shape(), (Shape{2, 1, 28, 28}));
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 7}));
  EXPECT_FLOAT_EQ(ds.features[255], 1.0f);
  EXPECT_FLOAT_EQ(ds.features[0], 0.0f);
}

TEST(Idx, DistinctErrors) {
  TempDir d;
  write_idx_pair(d.file("i"), d.file("l"), 2, {3, 7, 1});
  EXPECT_THROW(load_idx(d.file("i"), d.file("l")), CountMismatchError);
  write_idx_pair(d.file("i"), d.file("l"), 2, {3, 7}, 0x804);
  EXPECT_THROW(load_idx(d.file("i"), d.file("l")), FormatError);
  write_idx_pair(d.file("i"), d.file("l"), 2, {3, 7});
  fs::resize_file(d.file("i"), 16 + 784 + 5);
  EXPECT_THROW(load_idx(d.file("i"), d.file("l")), TruncatedError);
  EXPECT_THROW(load_idx(d.file("missing"), d.file("l")), IoError);
}

TEST(Idx, SaveLoadRoundtripAndCommittedSubset) {
  const auto train = load_idx(testing::data_path("mnist01-train-images.idx"),
                              testing::data_path("mnist01-train-labels.idx"));
  EXPECT_EQ(train.size(), 2000u);
  EXPECT_EQ(train.num_classes, 2u);
  TempDir d;
  save_idx(train, d.file("i"), d.file("l"));
  const auto back = load_idx(d.file("i"), d.file("l"));
  EXPECT_EQ(back.features, train.features);
  EXPECT_EQ(back.labels, train.labels);
  const auto small = downsample2x(train);
  EXPECT_EQ(small.features.shape(), (Shape{2000, 1, 14, 14}));
}

TEST(Csv, LoadsBlobsAndRejectsMalformed) {
  const auto ds = load_csv(testing::data_path("blobs3-train.csv"));
  EXPECT_EQ(ds.size(), 600u);
  EXPECT_EQ(ds.features.shape(), (Shape{600, 16}));
  EXPECT_EQ(ds.num_classes, 3u);
  TempDir d;
  std::ofstream(d.file("bad.csv")) << "0,1.0,2.0\n1,3.0\n";
  EXPECT_THROW(load_csv(d.file("bad.csv")), FormatError);
  std::ofstream(d.file("bad2.csv")) << "0,1.0,abc\n";
  EXPECT_THROW(load_csv(d.file("bad2.csv")), FormatError);
  std::ofstream(d.file("bad3.csv")) << "-1,1.0\n";
  EXPECT_THROW(load_csv(d.file("bad3.csv")), FormatError);
  save_csv(ds, d.file("rt.csv"));
  EXPECT_EQ(load_csv(d.file("rt.csv")).labels, ds.labels);
}

TEST(Normalization, ReplayIsIdempotent) {
  const auto train = load_csv(testing::data_path("blobs3-train.csv"));
  const auto test = load_csv(testing::data_path("blobs3-test.csv"), Provenance::kRealTest);
  const auto rec = fit_normalization(train);
  const auto tn = apply_normalization(train, rec);
  double s = 0, ss = 0;
  for (float v : tn.features.data()) {
    s += v;
    ss += double(v) * v;
  }
  const double n = double(tn.features.size());
  EXPECT_NEAR(s / n, 0.0, 1e-5);
  EXPECT_NEAR(ss / n, 1.0, 1e-4);
  const auto once = apply_normalization(test, rec);
  const auto twice = apply_normalization(once, rec);
  EXPECT_EQ(once.features, twice.features);
  NormalizationRecord other = rec;
  other.mean[0] += 1;
  EXPECT_THROW(apply_normalization(once, other), InvalidArgument);
}

TEST(Poisson, FullRateAndDeterminism) {
  Rng a(1);
  const auto all = poisson_batch(10, 1.0, a);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Rng c(5), e(5);
  EXPECT_EQ(poisson_batch(100, 0.3, c), poisson_batch(100, 0.3, e));
  EXPECT_THROW(poisson_batch(10, 0.0, a), InvalidArgument);
}

TEST(Poisson, BinomialStatisticsAndIndependence) {
  Rng rng(2);
  const std::size_t draws = 100000, N = 100;
  const double q = 0.01;
  double total = 0;
  std::vector<double> inc0(draws), inc1(draws);
  for (std::size_t t = 0; t < draws; ++t) {
    const auto idx = poisson_batch(N, q, rng);
    total += double(idx.size());
    inc0[t] = std::count(idx.begin(), idx.end(), 0u);
    inc1[t] = std::count(idx.begin(), idx.end(), 1u);
  }
  const double mean = total / draws;
  const double se = std::sqrt(N * q * (1 - q) / draws);
  EXPECT_LT(std::abs(mean - 1.0), 3 * se);
  double m0 = 0, m1 = 0, cov = 0;
  for (std::size_t t = 0; t < draws; ++t) {
    m0 += inc0[t];
    m1 += inc1[t];
  }
  m0 /= draws;
  m1 /= draws;
  for (std::size_t t = 0; t < draws; ++t) cov += (inc0[t] - m0) * (inc1[t] - m1);
  cov /= draws;
  // standard error of the sample covariance of two independent Bernoulli(q)
  const double cov_se = q * (1 - q) / std::sqrt(double(draws));
  EXPECT_LT(std::abs(cov), 3 * cov_se);
}

TEST(ClassSplit, PartitionsPreserveOrderAndLabels) {
  LabeledDataset ds;
  ds.num_classes = 10;
  ds.features = Tensor<float>({20, 2});
  for (int i = 0; i < 20; ++i) {
    ds.labels.push_back(i % 10);
    ds.features[2 * i] = float(i);
  }
  const auto parts = class_split(ds, {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}});
  ASSERT_EQ(parts.size(), 5u);
  for (std::size_t p = 0; p < 5; ++p) {
    ASSERT_EQ(parts[p].size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      const int y = parts[p].labels[i];
      EXPECT_TRUE(y == int(2 * p) || y == int(2 * p + 1));
      if (i > 0) EXPECT_GT(parts[p].features.row(i)[0], parts[p].features.row(i - 1)[0]);
    }
  }
  const auto id = class_split(ds, {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}});
  EXPECT_EQ(id[0].features, ds.features);
  EXPECT_EQ(id[0].labels, ds.labels);
  EXPECT_THROW(class_split(ds, {{0, 1}, {1, 2}}), InvalidArgument);

  LabeledDataset sparse = ds;
  sparse.num_classes = 11;
  std::vector<std::string> warnings;
  const auto w = class_split(sparse, {{0, 10}}, &warnings);
  EXPECT_EQ(w[0].size(), 2u);
  EXPECT_EQ(warnings.size(), 1u);
}

SyntheticSet small_set() {
  return init_synthetic(3, 4, {1, 5, 6}, 11);
}

TEST(Container, RoundtripIsBitExact) {
  TempDir d;
  const auto s = small_set();
  save_synthetic(s, d.file("s.psg"));
  EXPECT_EQ(load_synthetic(d.file("s.psg")), s);
}

TEST(Container, LayoutAndCorruption) {
  const auto s = small_set();
  auto bytes = encode_synthetic(s);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), std::string("PSGSET\0", 7));
  // magic | version | L | spc | rank | 3 dims | floats | u16 labels | crc
  EXPECT_EQ(bytes.size(), 7 + 2 + 4 + 4 + 4 + 12 + 4 * s.features.size() + 2 * 12 + 4);
  EXPECT_EQ(bytes[7], 1);
  EXPECT_EQ(bytes[8], 0);

  auto crc_bad = bytes;
  crc_bad.back() ^= 0xFF;
  EXPECT_THROW(decode_synthetic(crc_bad), IntegrityError);
  auto payload_bad = bytes;
  payload_bad[40] ^= 0x01;
  EXPECT_THROW(decode_synthetic(payload_bad), IntegrityError);
  auto version_bad = bytes;
  version_bad[7] = 2;
  EXPECT_THROW(decode_synthetic(version_bad), UnsupportedVersionError);
  auto magic_bad = bytes;
  magic_bad[0] = 'X';
  EXPECT_THROW(decode_synthetic(magic_bad), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(decode_synthetic(truncated), FormatError);
}

TEST(Synthetic, InitShapesAndLabels) {
  const auto s = init_synthetic(20, 10, {16}, 1);
  EXPECT_EQ(s.size(), 200u);
  std::vector<int> hist(10, 0);
  for (int y : s.labels) ++hist[y];
  for (int h : hist) EXPECT_EQ(h, 20);
  EXPECT_EQ(init_synthetic(10, 10, {1, 28, 28}, 1).features.shape(), (Shape{100, 1, 28, 28}));
  EXPECT_EQ(init_synthetic(2, 3, {4}, 9), init_synthetic(2, 3, {4}, 9));
  EXPECT_THROW(init_synthetic(0, 3, {4}, 1), InvalidArgument);
  EXPECT_THROW(init_synthetic(2, 1, {4}, 1), InvalidArgument);
}

TEST(Export, PgmGrid) {
  TempDir d;
  const auto s = init_synthetic(3, 2, {1, 4, 5}, 3);
  export_pgm_grid(s, d.file("g.pgm"));
  std::ifstream in(d.file("g.pgm"), std::ios::binary);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 3 * 5 + 2);
  EXPECT_EQ(h, 2 * 4 + 1);
  EXPECT_EQ(maxv, 255);
  EXPECT_THROW(export_pgm_grid(init_synthetic(1, 2, {8}, 1), d.file("x.pgm")), ShapeError);
}

TEST(Audit, LoadersRecordRoles) {
  FileAudit::instance().clear();
  load_csv(testing::data_path("blobs3-test.csv"), Provenance::kRealTest);
  const auto log = FileAudit::instance().snapshot();
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].role, Provenance::kRealTest);
}

}  // namespace
}  // namespace psg
