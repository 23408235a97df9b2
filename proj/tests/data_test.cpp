// Copyright 2026 The snn-rmp Authors
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

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "snn_rmp/data.hpp"
#include "snn_rmp/io.hpp"

namespace snn_rmp {
namespace {

std::vector<std::uint8_t> be32(std::initializer_list<std::uint32_t> words) {
  std::vector<std::uint8_t> out;
  for (auto w : words) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(w >> s));
  }
  return out;
}

std::vector<std::uint8_t> image_file(std::uint32_t magic, std::uint32_t n, std::uint32_t rows,
                                     std::uint32_t cols, std::vector<std::uint8_t> pixels) {
  auto out = be32({magic, n, rows, cols});
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::uint8_t> label_file(std::vector<std::uint8_t> labels) {
  auto out = be32({kIdxLabelMagic, static_cast<std::uint32_t>(labels.size())});
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

TEST(Idx, ScalesBytes) {
  const auto images = image_file(kIdxImageMagic, 1, 2, 2, {0, 255, 128, 0});
  const Dataset ds = parse_idx(images, label_file({3}), 10);
  EXPECT_EQ(ds.inputs.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(ds.inputs, Tensor({1, 2, 2}, {0.0, 1.0, 128.0 / 255.0, 0.0}));
  EXPECT_EQ(ds.labels, std::vector<int>{3});
}

TEST(Idx, LabelMagicAsImagesRejected) {
  const auto images = image_file(kIdxLabelMagic, 1, 2, 2, {0, 0, 0, 0});
  EXPECT_THROW(parse_idx(images, label_file({0}), 10), FormatError);
}

TEST(Idx, CountMismatchRejected) {
  const auto images = image_file(kIdxImageMagic, 10, 1, 1, std::vector<std::uint8_t>(10, 7));
  EXPECT_THROW(parse_idx(images, label_file(std::vector<std::uint8_t>(9, 1)), 10), FormatError);
}

TEST(Idx, TruncatedPayloadAndBadLabelRejected) {
  const auto images = image_file(kIdxImageMagic, 2, 2, 2, {1, 2, 3});
  EXPECT_THROW(parse_idx(images, label_file({0, 1}), 10), FormatError);
  const auto ok = image_file(kIdxImageMagic, 1, 1, 1, {9});
  EXPECT_THROW(parse_idx(ok, label_file({10}), 10), Error);
}

TEST(Idx, RoundTripsExactly) {
  SeededRng rng(4);
  std::vector<std::uint8_t> pixels(3 * 4 * 5), labels(3);
  for (auto& p : pixels) p = static_cast<std::uint8_t>(rng.below(256));
  for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(10));
  const auto images = image_file(kIdxImageMagic, 3, 4, 5, pixels);
  const auto label_bytes = label_file(labels);
  const Dataset ds = parse_idx(images, label_bytes, 10);
  EXPECT_EQ(encode_idx_images(ds), images);
  EXPECT_EQ(encode_idx_labels(ds), label_bytes);

  const auto dir = std::filesystem::temp_directory_path() / "snn_rmp_idx_test";
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "img", std::span<const std::uint8_t>(images));
  write_file_atomic(dir / "lbl", std::span<const std::uint8_t>(label_bytes));
  const Dataset loaded = load_idx(dir / "img", dir / "lbl");
  EXPECT_EQ(loaded.inputs, ds.inputs);
  EXPECT_EQ(loaded.labels, ds.labels);
  EXPECT_THROW(load_idx(dir / "missing", dir / "lbl"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Csv, ParsesRows) {
  const Dataset ds = parse_csv("1,0.5,0.5\n0,-1,2\n", 2);
  EXPECT_EQ(ds.samples(), 2);
  EXPECT_EQ(ds.features(), 2);
  EXPECT_EQ(ds.inputs, Tensor({2, 2}, {0.5, 0.5, -1.0, 2.0}));
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));
}

TEST(Csv, Rejections) {
  EXPECT_THROW(parse_csv("2,0.5\n", 2), FormatError);        // label == class_count
  EXPECT_THROW(parse_csv("", 2), FormatError);               // empty
  EXPECT_THROW(parse_csv("0,1,2\n1,3\n", 2), FormatError);   // ragged
  EXPECT_THROW(parse_csv("0,abc\n", 2), FormatError);        // not a number
  EXPECT_THROW(parse_csv("0.5,1\n", 2), FormatError);        // fractional label
  try {
    parse_csv("0,1\n1,x\n", 2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Csv, RoundTripsThroughText) {
  const Dataset ds = synth_blobs(3, 7, 3, 5, 0.4);
  const Dataset back = parse_csv(format_csv(ds), 3);
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(SynthBlobs, ZeroSpreadSitsOnCentres) {
  const Dataset ds = synth_blobs(1, 5, 4, 3, 0.0);
  const Tensor centers = blob_centers(4, 3);
  for (Index i = 0; i < ds.samples(); ++i) {
    const int c = ds.labels[static_cast<size_t>(i)];
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(ds.inputs[i * 3 + j], centers[c * 3 + j]);
  }
}

TEST(SynthBlobs, DeterministicAndBalanced) {
  const Dataset a = synth_blobs(9, 20, 3, 4, 0.5), b = synth_blobs(9, 20, 3, 4, 0.5);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  std::vector<int> counts(3, 0);
  for (int y : a.labels) ++counts[static_cast<size_t>(y)];
  EXPECT_EQ(counts, (std::vector<int>{20, 20, 20}));
  EXPECT_NE(synth_blobs(10, 20, 3, 4, 0.5).inputs, a.inputs);
}

TEST(SynthBlobs, CentresAreUnitAndSeparated) {
  for (int classes : {2, 5, 9}) {
    const Tensor c = blob_centers(classes, 4);
    const auto m = c.matrix();
    for (int i = 0; i < classes; ++i) {
      EXPECT_NEAR(m.row(i).norm(), 1.0, 1e-12);
      for (int j = 0; j < i; ++j) EXPECT_GT((m.row(i) - m.row(j)).norm(), 1e-3);
    }
  }
}

TEST(SynthBlobs, NearestCentreIsPerfectAtSmallSpread) {
  const Dataset ds = synth_blobs(5, 1000, 2, 8, 0.05);
  const Tensor centers = blob_centers(2, 8);
  const auto x = ds.inputs.matrix();
  const auto c = centers.matrix();
  for (Index i = 0; i < ds.samples(); ++i) {
    const double d0 = (x.row(i) - c.row(0)).squaredNorm();
    const double d1 = (x.row(i) - c.row(1)).squaredNorm();
    EXPECT_EQ(d0 < d1 ? 0 : 1, ds.labels[static_cast<size_t>(i)]);
  }
}

TEST(SynthBlobs, Preconditions) {
  EXPECT_THROW(synth_blobs(1, 5, 1, 4, 0.1), ParameterError);
  EXPECT_THROW(synth_blobs(1, 5, 2, 1, 0.1), ParameterError);
  EXPECT_THROW(synth_blobs(1, 0, 2, 4, 0.1), ParameterError);
}

TEST(Standardize, ZeroMeanUnitVariance) {
  Dataset ds = synth_blobs(2, 50, 3, 4, 2.0);
  ds.inputs.array() = 3.0 * ds.inputs.array() + 5.0;
  const Dataset s = standardize(ds);
  const auto x = s.inputs.matrix();
  for (Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR((x.col(j).array() - mean).square().mean(), 1.0, 1e-10);
  }
  const Dataset twice = standardize(s);
  EXPECT_LT((twice.inputs.array() - s.inputs.array()).abs().maxCoeff(), 1e-9);
}

TEST(Standardize, ConstantFeatureBecomesZero) {
  Dataset ds = synth_blobs(2, 10, 2, 3, 1.0);
  for (Index i = 0; i < ds.samples(); ++i) ds.inputs[i * 3 + 1] = 4.2;
  const Dataset s = standardize(ds);
  for (Index i = 0; i < ds.samples(); ++i) EXPECT_EQ(s.inputs[i * 3 + 1], 0.0);
}

}  // namespace
}  // namespace snn_rmp
