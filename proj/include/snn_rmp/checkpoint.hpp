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

#ifndef SNN_RMP_CHECKPOINT_HPP_
#define SNN_RMP_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "snn_rmp/data.hpp"
#include "snn_rmp/network.hpp"

namespace snn_rmp {

// File layout:
//   8 bytes   magic "SNNRMPCK"
//   8 bytes   header length H, little-endian u64
//   H bytes   JSON header: schema_version, arch, config, epoch, rng_state,
//             optimizer, tensors[{name, shape, offset, count}]
//   payload   float64 little-endian values; offsets count doubles
inline constexpr char kCheckpointMagic[8] = {'S', 'N', 'N', 'R', 'M', 'P', 'C', 'K'};
inline constexpr const char* kCheckpointSchemaVersion = "1";

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  ArchSpec arch;
  nlohmann::json config;  // resolved training config
  int epoch = 0;          // next epoch to run
  std::uint64_t rng_state = 0;
  double base_lr = 0.01;
  double momentum = 0.9;
  int total_epochs = 1;
  // Network state ("layer3.weight", "layer4.running_mean", ...), momentum
  // buffers ("opt.<parameter>") and the input standardizer ("input.mean",
  // "input.stddev") when one was fitted.
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Any malformation (magic, header, schema, offsets, lengths) throws
// CheckpointError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const nlohmann::json& j);

Checkpoint capture_checkpoint(const ArchSpec& arch, const nlohmann::json& config,
                              const Network& net, const OptimState& opt,
                              const SeededRng& rng,
                              const std::optional<Standardizer>& standardizer);

// Rebuilds the network of `ckpt.arch` and fills every state tensor; missing
// or misshapen entries throw CheckpointError.
Network restore_network(const Checkpoint& ckpt);
OptimState restore_optimizer(const Checkpoint& ckpt, const Network& net);
std::optional<Standardizer> restore_standardizer(const Checkpoint& ckpt);

}  // namespace snn_rmp

#endif  // SNN_RMP_CHECKPOINT_HPP_
