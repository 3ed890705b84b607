// Copyright 2026 The maskattack Authors
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
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "maskattack/error.hpp"
#include "maskattack/model.hpp"

namespace maskattack {
namespace {

constexpr char kMagic[8] = {'M', 'S', 'K', 'A', 'C', 'K', 'P', 'T'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= std::uint64_t{static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])} << (8 * i);
  }
  return v;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::kCorruptCheckpoint, what); }

nlohmann::json header_json(const ModelCheckpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : ckpt.params) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"trainable", t.trainable}});
  }
  return {{"arch", ckpt.arch},
          {"features", ckpt.features},
          {"vocabulary", ckpt.vocabulary},
          {"meta",
           {{"seed", ckpt.meta.seed},
            {"steps", ckpt.meta.steps},
            {"final_loss", ckpt.meta.final_loss},
            {"optimizer", ckpt.meta.optimizer}}},
          {"tensors", tensors}};
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void to_json(nlohmann::json& j, const ModelArch& arch) {
  j = nlohmann::json{
      {"layers",
       nlohmann::json::array(
           {{{"type", "standardize"}, {"width", arch.n_mels}, {"frozen", true}},
            {{"type", "conv1d"}, {"in", arch.n_mels}, {"out", arch.hidden1}, {"kernel", arch.kernel},
             {"padding", "same"}, {"activation", "relu"}},
            {{"type", "conv1d"}, {"in", arch.hidden1}, {"out", arch.hidden2}, {"kernel", arch.kernel},
             {"padding", "same"}, {"activation", "relu"}},
            {{"type", "affine"}, {"in", arch.hidden2}, {"out", arch.classes}}})}};
}

void from_json(const nlohmann::json& j, ModelArch& arch) {
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != 4) corrupt("expected four layers");
  arch.n_mels = layers.at(0).at("width").get<int>();
  arch.hidden1 = layers.at(1).at("out").get<int>();
  arch.kernel = layers.at(1).at("kernel").get<int>();
  arch.hidden2 = layers.at(2).at("out").get<int>();
  arch.classes = layers.at(3).at("out").get<int>();
  if (layers.at(1).at("in").get<int>() != arch.n_mels || layers.at(2).at("in").get<int>() != arch.hidden1 ||
      layers.at(3).at("in").get<int>() != arch.hidden2 || layers.at(2).at("kernel").get<int>() != arch.kernel) {
    corrupt("layer widths do not chain");
  }
}

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  validate(ckpt);
  const std::string header = header_json(ckpt).dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kCheckpointVersion, 4);
  put_le(out, header.size(), 4);
  out += header;
  for (const auto& t : ckpt.params) {
    for (double v : t.data) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  put_le(out, fnv1a64(out), 8);
  return out;
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 + 8) corrupt("file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) corrupt("bad magic");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                 std::to_string(kCheckpointVersion));
  }
  const std::size_t header_len = get_le(bytes, 12, 4);
  if (bytes.size() < 16 + header_len + 8) corrupt("truncated header");
  const std::size_t body_end = bytes.size() - 8;
  if (fnv1a64(std::string_view(bytes).substr(0, body_end)) != get_le(bytes, body_end, 8)) {
    corrupt("checksum mismatch");
  }

  ModelCheckpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
    ckpt.arch = header.at("arch").get<ModelArch>();
    ckpt.features = header.at("features").get<FeatureConfig>();
    ckpt.vocabulary = header.at("vocabulary").get<std::string>();
    const auto& meta = header.at("meta");
    ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.meta.steps = meta.at("steps").get<int>();
    ckpt.meta.final_loss = meta.at("final_loss").get<double>();
    ckpt.meta.optimizer = meta.at("optimizer").get<std::string>();
    std::size_t pos = 16 + header_len;
    for (const auto& entry : header.at("tensors")) {
      Tensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<int>>();
      t.trainable = entry.at("trainable").get<bool>();
      std::size_t n = 1;
      for (int d : t.shape) {
        if (d <= 0) corrupt("non-positive tensor dimension");
        n *= static_cast<std::size_t>(d);
      }
      if (pos + 8 * n > body_end) corrupt("tensor data truncated");
      t.data.resize(n);
      for (std::size_t i = 0; i < n; ++i, pos += 8) t.data[i] = std::bit_cast<double>(get_le(bytes, pos, 8));
      ckpt.params.push_back(std::move(t));
    }
    if (pos != body_end) corrupt("trailing bytes after tensor data");
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("bad header: ") + e.what());
  }
  validate(ckpt);
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::string checkpoint_hash(const ModelCheckpoint& ckpt) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << fnv1a64(serialize_checkpoint(ckpt));
  return s.str();
}

}  // namespace maskattack
