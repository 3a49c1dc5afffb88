#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "melex/adam.hpp"
#include "melex/cbr.hpp"
#include "melex/common.hpp"
#include "melex/params.hpp"

namespace melex {

// Checkpoint file: magic "MELX", u64 JSON header length, JSON header, then a
// raw little-endian float32 payload. The header carries the format version,
// step, config snapshot, confidence state and a name -> shape/offset table
// (offsets in float32 units into the payload).

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t step = 0;
  ConfidenceState confidence;
  nlohmann::json config;
};

namespace ckptdetail {

inline void append_tensors(nlohmann::json& table, std::vector<const Tensor<float>*>& payload,
                           const ParamStore<float>& ps, const std::string& prefix,
                           std::uint64_t& offset) {
  for (const auto& [name, t] : ps) {
    nlohmann::json entry;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    table[prefix + name] = entry;
    payload.push_back(&t);
    offset += t.size();
  }
}

inline void read_tensors(const nlohmann::json& table, std::ifstream& in,
                         std::uint64_t payload_base, ParamStore<float>& out,
                         const std::string& prefix, const std::string& path) {
  std::vector<std::pair<std::uint64_t, std::string>> ordered;
  for (auto it = table.begin(); it != table.end(); ++it) {
    if (it.key().rfind(prefix, 0) == 0) {
      ordered.emplace_back(it.value().at("offset").get<std::uint64_t>(), it.key());
    }
  }
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [offset, key] : ordered) {
    const auto& entry = table.at(key);
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    Tensor<float> t(shape);
    in.seekg(static_cast<std::streamoff>(payload_base + offset * sizeof(float)));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IoError(format_msg("truncated checkpoint payload: ", path));
    out.add(key.substr(prefix.size()), std::move(t));
  }
}

}  // namespace ckptdetail

inline void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                            const AdamState<float>& adam, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["step"] = meta.step;
  header["config"] = meta.config;
  header["confidence"] = {{"mu_f0", meta.confidence.mu_f0},
                          {"mu_note", meta.confidence.mu_note},
                          {"momentum", meta.confidence.momentum},
                          {"step", meta.confidence.step}};
  header["adam_t"] = adam.t;

  nlohmann::json table = nlohmann::json::object();
  std::vector<const Tensor<float>*> payload;
  std::uint64_t offset = 0;
  ckptdetail::append_tensors(table, payload, params, "param/", offset);
  ckptdetail::append_tensors(table, payload, adam.m, "adam_m/", offset);
  ckptdetail::append_tensors(table, payload, adam.v, "adam_v/", offset);
  header["tensors"] = table;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(format_msg("cannot write checkpoint: ", path));
  out.write("MELX", 4);
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor<float>* t : payload) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw IoError(format_msg("short write: ", path));
}

struct LoadedCheckpoint {
  ParamStore<float> params;
  AdamState<float> adam;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(format_msg("cannot open checkpoint: ", path));
  char magic[4];
  std::uint64_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || std::memcmp(magic, "MELX", 4) != 0) {
    throw IoError(format_msg("not a checkpoint file: ", path));
  }
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError(format_msg("truncated checkpoint header: ", path));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(format_msg("bad checkpoint header: ", path, ": ", e.what()));
  }
  if (!header.contains("version")) {
    throw IoError(format_msg(path, ": checkpoint header lacks a version field"));
  }
  if (header.at("version").get<std::uint32_t>() != kCheckpointVersion) {
    throw IoError(format_msg(path, ": unsupported checkpoint version ",
                             header.at("version").get<std::uint32_t>()));
  }

  LoadedCheckpoint ck;
  ck.meta.step = header.value("step", std::uint64_t{0});
  ck.meta.config = header.value("config", nlohmann::json::object());
  if (header.contains("confidence")) {
    const auto& c = header.at("confidence");
    ck.meta.confidence.mu_f0 = c.value("mu_f0", 0.95);
    ck.meta.confidence.mu_note = c.value("mu_note", 0.95);
    ck.meta.confidence.momentum = c.value("momentum", 0.999);
    ck.meta.confidence.step = c.value("step", std::uint64_t{0});
  }
  ck.adam.t = header.value("adam_t", std::uint64_t{0});

  const std::uint64_t payload_base = 4 + 8 + hlen;
  const auto& table = header.at("tensors");
  ckptdetail::read_tensors(table, in, payload_base, ck.params, "param/", path);
  ckptdetail::read_tensors(table, in, payload_base, ck.adam.m, "adam_m/", path);
  ckptdetail::read_tensors(table, in, payload_base, ck.adam.v, "adam_v/", path);
  return ck;
}

}  // namespace melex
