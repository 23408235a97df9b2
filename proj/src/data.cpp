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

#include "snn_rmp/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "snn_rmp/io.hpp"

namespace snn_rmp {

Shape Dataset::sample_shape() const {
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

Index Dataset::features() const { return shape_size(sample_shape()); }

void Dataset::validate() const {
  if (inputs.rank() < 2) {
    throw DataError("dataset inputs must be [samples, ...], got " +
                    shape_to_string(inputs.shape()));
  }
  if (inputs.dim(0) != samples()) {
    throw DataError("dataset has " + std::to_string(inputs.dim(0)) +
                    " inputs but " + std::to_string(samples()) + " labels");
  }
  if (class_count < 1) throw DataError("dataset class count must be >= 1");
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(class_count) + ")");
    }
  }
  if (!all_finite(inputs)) throw DataError("dataset inputs are not finite");
}

Tensor Dataset::gather(std::span<const Index> indices) const {
  Shape shape = inputs.shape();
  shape[0] = static_cast<Index>(indices.size());
  Tensor out(shape, 0.0);
  auto src = inputs.matrix(inputs.dim(0));
  auto dst = out.matrix(shape[0]);
  for (size_t i = 0; i < indices.size(); ++i) {
    dst.row(static_cast<Index>(i)) = src.row(indices[i]);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const Index> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(labels[static_cast<size_t>(i)]);
  return out;
}

// --- IDX -------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) |
         std::uint32_t{bytes[offset + 3]};
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, int class_count) {
  if (image_bytes.size() < 16) throw FormatError("idx images: truncated header");
  if (label_bytes.size() < 8) throw FormatError("idx labels: truncated header");
  if (read_be32(image_bytes, 0) != kIdxImageMagic) {
    throw FormatError("idx images: bad magic (expected 0x00000803)");
  }
  if (read_be32(label_bytes, 0) != kIdxLabelMagic) {
    throw FormatError("idx labels: bad magic (expected 0x00000801)");
  }
  const std::uint32_t n = read_be32(image_bytes, 4);
  const std::uint32_t rows = read_be32(image_bytes, 8);
  const std::uint32_t cols = read_be32(image_bytes, 12);
  const std::uint32_t n_labels = read_be32(label_bytes, 4);
  if (n != n_labels) {
    throw FormatError("idx: " + std::to_string(n) + " images but " +
                      std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError("idx: empty dataset");
  const size_t pixels = size_t{n} * rows * cols;
  if (image_bytes.size() != 16 + pixels) {
    throw FormatError("idx images: payload is " +
                      std::to_string(image_bytes.size() - 16) +
                      " bytes, header promises " + std::to_string(pixels));
  }
  if (label_bytes.size() != 8 + size_t{n}) {
    throw FormatError("idx labels: payload length does not match count");
  }
  Dataset ds;
  ds.class_count = class_count;
  ds.inputs = Tensor({Index{n}, Index{rows}, Index{cols}}, 0.0);
  for (size_t i = 0; i < pixels; ++i) {
    ds.inputs[static_cast<Index>(i)] = image_bytes[16 + i] / 255.0;
  }
  ds.labels.resize(n);
  for (size_t i = 0; i < n; ++i) {
    ds.labels[i] = label_bytes[8 + i];
    if (ds.labels[i] >= class_count) {
      throw FormatError("idx labels: label " + std::to_string(ds.labels[i]) +
                        " at index " + std::to_string(i) + " >= class count " +
                        std::to_string(class_count));
    }
  }
  return ds;
}

Dataset load_idx(const std::filesystem::path& image_path,
                 const std::filesystem::path& label_path, int class_count) {
  const auto images = read_file_bytes(image_path);
  const auto labels = read_file_bytes(label_path);
  return parse_idx(images, labels, class_count);
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds) {
  if (ds.inputs.rank() != 3) {
    throw ShapeError("idx images need [n, rows, cols] inputs");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + static_cast<size_t>(ds.inputs.size()));
  append_be32(out, kIdxImageMagic);
  for (Index d : ds.inputs.shape()) append_be32(out, static_cast<std::uint32_t>(d));
  for (Index i = 0; i < ds.inputs.size(); ++i) {
    const double v = std::round(ds.inputs[i] * 255.0);
    if (v < 0 || v > 255) throw DataError("idx images: value outside [0, 1]");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  append_be32(out, kIdxLabelMagic);
  append_be32(out, static_cast<std::uint32_t>(ds.labels.size()));
  for (int y : ds.labels) {
    if (y < 0 || y > 255) throw DataError("idx labels: label outside a byte");
    out.push_back(static_cast<std::uint8_t>(y));
  }
  return out;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return !s.empty() && r.ec == std::errc{} && r.ptr == end;
}

}  // namespace

Dataset parse_csv(const std::string& text, int class_count) {
  std::vector<double> values;
  std::vector<int> labels;
  Index arity = -1;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "csv line " + std::to_string(line_no) + ": ";
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() < 2) throw FormatError(where + "need a label and features");
    const auto n_features = static_cast<Index>(cells.size() - 1);
    if (arity < 0) arity = n_features;
    if (n_features != arity) {
      throw FormatError(where + "expected " + std::to_string(arity) +
                        " features, found " + std::to_string(n_features));
    }
    int label = 0;
    if (!parse_number(cells[0], label)) {
      throw FormatError(where + "label '" + std::string(trim(cells[0])) +
                        "' is not an integer");
    }
    if (label < 0 || label >= class_count) {
      throw FormatError(where + "label " + std::to_string(label) +
                        " outside [0, " + std::to_string(class_count) + ")");
    }
    labels.push_back(label);
    for (size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v)) {
        throw FormatError(where + "cell " + std::to_string(c + 1) + " '" +
                          std::string(trim(cells[c])) + "' is not a number");
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw FormatError("csv: no data rows");
  Dataset ds;
  ds.class_count = class_count;
  ds.labels = std::move(labels);
  ds.inputs = Tensor({ds.samples(), arity},
                     Eigen::Map<Eigen::ArrayXd>(values.data(),
                                                static_cast<Index>(values.size())));
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, int class_count) {
  return parse_csv(read_file_text(path), class_count);
}

std::string format_csv(const Dataset& ds) {
  const Index f = ds.features();
  std::string out;
  char buf[40];
  for (Index i = 0; i < ds.samples(); ++i) {
    out += std::to_string(ds.labels[static_cast<size_t>(i)]);
    for (Index j = 0; j < f; ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", ds.inputs[i * f + j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, format_csv(ds));
}

// --- synthetic blobs -------------------------------------------------------

Tensor blob_centers(int classes, Index dim) {
  Tensor centers({Index{classes}, dim}, 0.0);
  if (classes <= 2 * dim) {
    for (int c = 0; c < classes; ++c) {
      centers[c * dim + c / 2] = (c % 2 == 0) ? 1.0 : -1.0;
    }
    return centers;
  }
  SeededRng rng(0x5EEDC0DEULL ^ (static_cast<std::uint64_t>(classes) << 32) ^
                static_cast<std::uint64_t>(dim));
  auto m = centers.matrix();
  for (int c = 0; c < classes; ++c) {
    for (Index j = 0; j < dim; ++j) m(c, j) = rng.normal();
    m.row(c).normalize();
  }
  return centers;
}

Dataset synth_blobs(std::uint64_t seed, Index samples_per_class, int classes,
                    Index dim, double spread) {
  if (classes < 2) throw ParameterError("synth_blobs: classes must be >= 2");
  if (dim < 2) throw ParameterError("synth_blobs: dim must be >= 2");
  if (samples_per_class < 1) {
    throw ParameterError("synth_blobs: samples per class must be >= 1");
  }
  if (!(spread >= 0.0)) throw ParameterError("synth_blobs: spread must be >= 0");
  const Tensor centers = blob_centers(classes, dim);
  SeededRng rng(seed);
  Dataset ds;
  ds.class_count = classes;
  const Index n = samples_per_class * classes;
  ds.inputs = Tensor({n, dim}, 0.0);
  ds.labels.resize(static_cast<size_t>(n));
  // Interleaved by class so every prefix is balanced.
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    ds.labels[static_cast<size_t>(i)] = c;
    for (Index j = 0; j < dim; ++j) {
      ds.inputs[i * dim + j] = centers[c * dim + j] + spread * rng.normal();
    }
  }
  return ds;
}

// --- standardization -------------------------------------------------------

Standardizer fit_standardizer(const Dataset& ds) {
  const Index f = ds.features();
  const auto x = ds.inputs.matrix(ds.samples());
  Standardizer s{Tensor({f}, 0.0), Tensor({f}, 0.0)};
  const double n = static_cast<double>(ds.samples());
  for (Index j = 0; j < f; ++j) {
    const double mean = x.col(j).sum() / n;
    const double var = (x.col(j).array() - mean).square().sum() / n;
    // A constant column can still leave rounding residue in `var`.
    const bool constant = x.col(j).minCoeff() == x.col(j).maxCoeff();
    s.mean[j] = constant ? x(0, j) : mean;
    s.stddev[j] = constant ? 0.0 : std::sqrt(var);
  }
  return s;
}

Dataset Standardizer::apply(const Dataset& ds) const {
  const Index f = ds.features();
  if (f != mean.size()) {
    throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                     " features, dataset has " + std::to_string(f));
  }
  Dataset out = ds;
  auto x = out.inputs.matrix(out.samples());
  for (Index j = 0; j < f; ++j) {
    if (stddev[j] > 0.0) {
      x.col(j).array() = (x.col(j).array() - mean[j]) / stddev[j];
    } else {
      x.col(j).setZero();
    }
  }
  return out;
}

Dataset standardize(const Dataset& ds) { return fit_standardizer(ds).apply(ds); }

}  // namespace snn_rmp
