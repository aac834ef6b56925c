// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container. Single file:
//   8-byte magic "JGSEGCKP" | u32 schema version | u64 manifest length |
//   UTF-8 JSON manifest | raw payload (little-endian f32, row-major).
// The manifest lists every array (name, group, shape, dtype, byte offset),
// plus serialized RNG states, the run-config snapshot and scalar metadata.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jgseg/param_store.hpp"

namespace jgseg {

inline constexpr char kCheckpointMagic[8] = {'J', 'G', 'S', 'E', 'G', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointSchemaVersion = 1;

struct CheckpointMeta {
  std::int64_t step = 0;
  std::string run_config_snapshot;
  std::map<std::string, std::string> rng_states;
  std::map<std::string, std::string> extra;  // free-form strings (e.g. dataset paths)
};

namespace detail {

inline void write_exact(std::ofstream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw IoError("checkpoint write failed");
}

}  // namespace detail

inline void save_checkpoint(const ParameterStore<float>& store, const CheckpointMeta& meta,
                            const std::string& path) {
  nlohmann::json manifest;
  manifest["step"] = meta.step;
  manifest["run_config"] = meta.run_config_snapshot;
  manifest["rng_states"] = meta.rng_states;
  manifest["extra"] = meta.extra;
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : store.entries()) {
    nlohmann::json a;
    a["name"] = e.name;
    a["group"] = e.group;
    a["shape"] = e.var.shape();
    a["dtype"] = "f32";
    a["offset"] = offset;
    arrays.push_back(a);
    offset += static_cast<std::uint64_t>(e.var.numel()) * sizeof(float);
  }
  manifest["arrays"] = arrays;
  const std::string mjson = manifest.dump();

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  detail::write_exact(os, kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t ver = kCheckpointSchemaVersion;
  detail::write_exact(os, &ver, sizeof(ver));
  const std::uint64_t mlen = mjson.size();
  detail::write_exact(os, &mlen, sizeof(mlen));
  detail::write_exact(os, mjson.data(), mjson.size());
  for (const auto& e : store.entries())
    detail::write_exact(os, e.var.value().data(),
                        static_cast<size_t>(e.var.numel()) * sizeof(float));
  os.flush();
  if (!os) throw IoError("checkpoint flush failed: " + path);
}

struct LoadedCheckpoint {
  ParameterStore<float> store;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CorruptCheckpoint("bad magic in " + path);
  std::uint32_t ver = 0;
  is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (!is) throw CorruptCheckpoint("truncated header in " + path);
  if (ver > kCheckpointSchemaVersion)
    throw UnsupportedSchema("checkpoint schema " + std::to_string(ver) +
                            " is newer than supported " +
                            std::to_string(kCheckpointSchemaVersion));
  std::uint64_t mlen = 0;
  is.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!is) throw CorruptCheckpoint("truncated manifest length in " + path);
  std::string mjson(mlen, '\0');
  is.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw CorruptCheckpoint("truncated manifest in " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mjson);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("manifest parse error: ") + e.what());
  }

  LoadedCheckpoint out;
  out.meta.step = manifest.value("step", std::int64_t(0));
  out.meta.run_config_snapshot = manifest.value("run_config", std::string());
  if (manifest.contains("rng_states"))
    out.meta.rng_states = manifest["rng_states"].get<std::map<std::string, std::string>>();
  if (manifest.contains("extra"))
    out.meta.extra = manifest["extra"].get<std::map<std::string, std::string>>();

  for (const auto& a : manifest["arrays"]) {
    const std::string name = a["name"];
    const std::string group = a["group"];
    const Shape shape = a["shape"].get<Shape>();
    if (a["dtype"] != "f32") throw UnsupportedSchema("unsupported dtype in " + path);
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (is.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float)))
      throw CorruptCheckpoint("payload truncated at array " + name + " in " + path);
    out.store.add(name, group, std::move(t));
  }
  return out;
}

// Overwrites the values of an already-built store in place (shapes must
// match). Network weights attached to the store pick the values up.
inline void load_checkpoint_into(ParameterStore<float>& store, const std::string& path,
                                 CheckpointMeta* meta_out = nullptr) {
  LoadedCheckpoint lc = load_checkpoint(path);
  for (const auto& e : lc.store.entries()) {
    if (!store.has(e.name))
      throw CorruptCheckpoint("checkpoint array " + e.name + " not present in model");
    ad::Var<float> dst = store.get(e.name);
    if (!(dst.shape() == e.var.shape()))
      throw CorruptCheckpoint("shape mismatch for " + e.name);
    dst.mutable_value() = e.var.value();
  }
  if (lc.store.size() != store.size())
    throw CorruptCheckpoint("checkpoint arrays do not cover the model");
  if (meta_out) *meta_out = lc.meta;
}

}  // namespace jgseg
