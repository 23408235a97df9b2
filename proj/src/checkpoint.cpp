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

#include "snn_rmp/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "snn_rmp/io.hpp"

namespace snn_rmp {

using nlohmann::json;

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

json arch_to_json(const ArchSpec& a) {
  return {{"name", a.name},
          {"sample_shape", a.sample_shape},
          {"classes", a.classes},
          {"timesteps", a.timesteps},
          {"tau", a.neuron.tau},
          {"v_th", a.neuron.v_th},
          {"alpha", a.alpha},
          {"bn_eps", a.bn_eps},
          {"bn_momentum", a.bn_momentum},
          {"hidden", a.hidden}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  j.at("name").get_to(a.name);
  j.at("sample_shape").get_to(a.sample_shape);
  j.at("classes").get_to(a.classes);
  j.at("timesteps").get_to(a.timesteps);
  j.at("tau").get_to(a.neuron.tau);
  j.at("v_th").get_to(a.neuron.v_th);
  j.at("alpha").get_to(a.alpha);
  j.at("bn_eps").get_to(a.bn_eps);
  j.at("bn_momentum").get_to(a.bn_momentum);
  j.at("hidden").get_to(a.hidden);
  return a;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  json entries = json::array();
  Index offset = 0;
  for (const auto& t : ckpt.tensors) {
    entries.push_back({{"name", t.name},
                       {"shape", t.value.shape()},
                       {"offset", offset},
                       {"count", t.value.size()}});
    offset += t.value.size();
  }
  const json header = {{"schema_version", kCheckpointSchemaVersion},
                       {"arch", arch_to_json(ckpt.arch)},
                       {"config", ckpt.config},
                       {"epoch", ckpt.epoch},
                       {"rng_state", ckpt.rng_state},
                       {"optimizer",
                        {{"base_lr", ckpt.base_lr},
                         {"momentum", ckpt.momentum},
                         {"total_epochs", ckpt.total_epochs}}},
                       {"tensors", std::move(entries)}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + 8 * static_cast<size_t>(offset));
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.tensors) {
    for (Index i = 0; i < t.value.size(); ++i) {
      put_u64(out, std::bit_cast<std::uint64_t>(t.value[i]));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw CheckpointError("checkpoint: bad magic, not a checkpoint file");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) {
    throw CheckpointError("checkpoint: header length exceeds file size");
  }
  const std::string text(reinterpret_cast<const char*>(bytes.data() + 16), header_len);
  const json header = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded()) throw CheckpointError("checkpoint: header is not valid JSON");

  Checkpoint ckpt;
  try {
    const std::string schema = header.at("schema_version").get<std::string>();
    if (schema != kCheckpointSchemaVersion) {
      throw CheckpointError("checkpoint: schema_version " + schema + " unsupported (expected " +
                            kCheckpointSchemaVersion + ")");
    }
    ckpt.arch = arch_from_json(header.at("arch"));
    ckpt.config = header.at("config");
    header.at("epoch").get_to(ckpt.epoch);
    header.at("rng_state").get_to(ckpt.rng_state);
    const json& opt = header.at("optimizer");
    opt.at("base_lr").get_to(ckpt.base_lr);
    opt.at("momentum").get_to(ckpt.momentum);
    opt.at("total_epochs").get_to(ckpt.total_epochs);

    const std::uint8_t* payload = bytes.data() + 16 + header_len;
    const std::uint64_t payload_values = (bytes.size() - 16 - header_len) / 8;
    if ((bytes.size() - 16 - header_len) % 8 != 0) {
      throw CheckpointError("checkpoint: payload is not a whole number of float64 values");
    }
    std::uint64_t expected = 0;
    for (const auto& e : header.at("tensors")) {
      NamedTensor t;
      e.at("name").get_to(t.name);
      const Shape shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto count = e.at("count").get<std::uint64_t>();
      for (Index d : shape) {
        if (d < 1) throw CheckpointError("checkpoint: tensor " + t.name + " has bad shape");
      }
      if (static_cast<std::uint64_t>(shape_size(shape)) != count || offset != expected ||
          offset + count > payload_values) {
        throw CheckpointError("checkpoint: tensor " + t.name + " has inconsistent extent");
      }
      t.value = Tensor(shape, 0.0);
      for (std::uint64_t i = 0; i < count; ++i) {
        t.value[static_cast<Index>(i)] = std::bit_cast<double>(get_u64(payload + 8 * (offset + i)));
      }
      expected = offset + count;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected != payload_values) {
      throw CheckpointError("checkpoint: payload length does not match the tensor table");
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file_atomic(path, std::span<const std::uint8_t>(bytes));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const IoError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return decode_checkpoint(bytes);
}

Checkpoint capture_checkpoint(const ArchSpec& arch, const json& config, const Network& net,
                              const OptimState& opt, const SeededRng& rng,
                              const std::optional<Standardizer>& standardizer) {
  Checkpoint c;
  c.arch = arch;
  c.config = config;
  c.epoch = opt.epoch;
  c.rng_state = rng.state();
  c.base_lr = opt.base_lr;
  c.momentum = opt.momentum;
  c.total_epochs = opt.total_epochs;
  for (const auto& ref : net.state()) c.tensors.push_back({ref.name, *ref.tensor});
  const auto params = net.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    c.tensors.push_back({"opt." + params[i].name, opt.velocity.at(i)});
  }
  if (standardizer) {
    c.tensors.push_back({"input.mean", standardizer->mean});
    c.tensors.push_back({"input.stddev", standardizer->stddev});
  }
  return c;
}

namespace {

void fill_from(const Checkpoint& ckpt, const std::string& name, Tensor& dst) {
  const Tensor* src = ckpt.find(name);
  if (src == nullptr) throw CheckpointError("checkpoint: missing tensor " + name);
  if (src->shape() != dst.shape()) {
    throw CheckpointError("checkpoint: tensor " + name + " is " + shape_to_string(src->shape()) +
                          ", architecture expects " + shape_to_string(dst.shape()));
  }
  dst = *src;
}

}  // namespace

Network restore_network(const Checkpoint& ckpt) {
  // Initial weights are overwritten, so the generator seed is irrelevant.
  SeededRng scratch(0);
  Network net = [&] {
    try {
      return build_network(ckpt.arch, scratch);
    } catch (const Error& e) {
      throw CheckpointError(std::string("checkpoint: bad architecture: ") + e.what());
    }
  }();
  for (auto& ref : net.state()) fill_from(ckpt, ref.name, *ref.tensor);
  return net;
}

OptimState restore_optimizer(const Checkpoint& ckpt, const Network& net) {
  OptimState opt = OptimState::for_network(net, ckpt.base_lr, ckpt.momentum, ckpt.total_epochs);
  opt.epoch = ckpt.epoch;
  const auto params = net.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    fill_from(ckpt, "opt." + params[i].name, opt.velocity[i]);
  }
  return opt;
}

std::optional<Standardizer> restore_standardizer(const Checkpoint& ckpt) {
  const Tensor* mean = ckpt.find("input.mean");
  const Tensor* stddev = ckpt.find("input.stddev");
  if (mean == nullptr && stddev == nullptr) return std::nullopt;
  if (mean == nullptr || stddev == nullptr || !mean->same_shape(*stddev)) {
    throw CheckpointError("checkpoint: incomplete input standardizer");
  }
  return Standardizer{*mean, *stddev};
}

}  // namespace snn_rmp
