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

#ifndef SNN_RMP_DATA_HPP_
#define SNN_RMP_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snn_rmp/tensor.hpp"

namespace snn_rmp {

// inputs is [samples, ...sample shape]; labels[i] lies in [0, class_count).
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  int class_count = 0;

  Index samples() const { return static_cast<Index>(labels.size()); }
  Shape sample_shape() const;
  Index features() const;  // elements per sample

  void validate() const;

  // Rows `indices` gathered into a new [indices.size(), ...] tensor.
  Tensor gather(std::span<const Index> indices) const;
  std::vector<int> gather_labels(std::span<const Index> indices) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Big-endian IDX pair (MNIST layout). Pixels are scaled by 1/255; inputs
// come back as [n, rows, cols].
Dataset load_idx(const std::filesystem::path& image_path,
                 const std::filesystem::path& label_path,
                 int class_count = 10);
Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes, int class_count);

// Inverse of parse_idx for datasets whose inputs are [n, rows, cols] with
// values v such that v * 255 is an integer byte.
std::vector<std::uint8_t> encode_idx_images(const Dataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds);

// "label,f1,f2,..." rows with constant arity.
Dataset load_csv(const std::filesystem::path& path, int class_count);
Dataset parse_csv(const std::string& text, int class_count);
// Writes with 17 significant digits, so parse_csv recovers every value.
std::string format_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

// Gaussian clusters around fixed unit-norm centres. For classes <= 2 * dim
// the centres are +-e_i (class c sits on axis c / 2 with sign (-1)^c), so
// any two centres are at least sqrt(2) apart; beyond that they are drawn
// from a generator seeded only by (classes, dim).
Dataset synth_blobs(std::uint64_t seed, Index samples_per_class, int classes,
                    Index dim, double spread);
Tensor blob_centers(int classes, Index dim);

// Per-feature affine standardization fitted on a training split.
struct Standardizer {
  Tensor mean;    // [features]
  Tensor stddev;  // [features]; 0 marks a constant feature

  Dataset apply(const Dataset& ds) const;
};

Standardizer fit_standardizer(const Dataset& ds);
// fit_standardizer(ds).apply(ds)
Dataset standardize(const Dataset& ds);

}  // namespace snn_rmp

#endif  // SNN_RMP_DATA_HPP_
