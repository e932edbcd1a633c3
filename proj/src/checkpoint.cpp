// Copyright 2026 The rescore-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>

#include "rescore/error.hpp"
#include "rescore/io.hpp"
#include "rescore/trainer.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace rescore {

namespace {

constexpr char kMagic[4] = {'R', 'L', 'C', 'K'};

template <class U>
void put(std::string& out, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(origin_ + ": truncated checkpoint (reading " + what + ")");
    }
  }
  std::string_view bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out += name;
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
}

nlohmann::json history_json(const std::vector<StepRecord>& h) {
  auto arr = nlohmann::json::array();
  for (const auto& r : h) arr.push_back({r.lr, r.total, r.mlm, r.pair});
  return arr;
}

}  // namespace

std::string config_hash(const ModelConfig& config) { return io::json_hash(config.to_json()); }

std::string serialize_checkpoint(const Checkpoint& ck) {
  const auto& tensors = ck.params.tensors();
  const bool moments = ck.moments.has_value();
  nlohmann::json blob = {{"model", ck.model.to_json()},
                         {"optimizer", ck.optimizer.to_json()},
                         {"config_hash", config_hash(ck.model)},
                         {"objective", ck.objective},
                         {"seed", ck.seed},
                         {"step", ck.step},
                         {"total_steps", ck.total_steps},
                         {"rng", {{"scheme", "mix_seed(seed, stream, index)"}, {"next_step", ck.step + 1}}},
                         {"has_moments", moments},
                         {"tensor_count", tensors.size() * (moments ? 3 : 1)},
                         {"history", history_json(ck.history)}};
  const std::string json = io::canonical_json(blob);

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, Checkpoint::kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (const auto& t : tensors) put_tensor(out, t.name, t);
  if (moments) {
    for (const auto& t : ck.moments->m.tensors()) put_tensor(out, "adam.m/" + t.name, t);
    for (const auto& t : ck.moments->v.tensors()) put_tensor(out, "adam.v/" + t.name, t);
  }
  return out;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::atomic_write(path, serialize_checkpoint(ck));
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& origin,
                                  const ModelConfig* expected) {
  Reader r(bytes, origin);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DataError(origin + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != Checkpoint::kFormatVersion) {
    throw DataError(origin + ": checkpoint format version " + std::to_string(version) +
                    ", expected " + std::to_string(Checkpoint::kFormatVersion));
  }
  const auto len = r.get<std::uint32_t>("header length");
  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(r.take(len, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": corrupt checkpoint header: " + e.what());
  }

  Checkpoint ck;
  try {
    ck.model = ModelConfig::from_json(blob.at("model"));
    ck.optimizer = OptimizerConfig::from_json(blob.at("optimizer"));
    ck.objective = blob.at("objective").get<std::string>();
    ck.seed = blob.at("seed").get<std::uint64_t>();
    ck.step = blob.at("step").get<std::size_t>();
    ck.total_steps = blob.at("total_steps").get<std::size_t>();
    for (const auto& row : blob.at("history")) {
      ck.history.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>(),
                            row.at(3).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": corrupt checkpoint header: " + e.what());
  }
  const std::string stored = blob.value("config_hash", "");
  if (stored != config_hash(ck.model)) throw DataError(origin + ": config hash does not match header");
  if (expected != nullptr && config_hash(*expected) != stored) {
    throw ConfigError(origin + ": config hash mismatch; checkpoint model " + ck.model.to_json().dump() +
                      " vs requested " + expected->to_json().dump());
  }
  ck.model.validate(false);

  auto read_into = [&](const std::string& prefix, Parameters<float>& dst) {
    for (auto& t : dst.tensors()) {
      const auto nlen = r.get<std::uint16_t>("tensor name length");
      const auto name = r.take(nlen, "tensor name");
      if (name != prefix + t.name) {
        throw DataError(origin + ": expected tensor " + prefix + t.name + ", found " + std::string(name));
      }
      const auto rank = r.get<std::uint8_t>("tensor rank");
      if (rank != t.shape.size()) throw DataError(origin + ": rank mismatch for " + t.name);
      for (std::size_t d = 0; d < rank; ++d) {
        if (r.get<std::uint32_t>("tensor dims") != t.shape[d]) {
          throw DataError(origin + ": shape mismatch for " + t.name);
        }
      }
      auto raw = r.take(t.data.size() * sizeof(float), "tensor data");
      std::memcpy(t.data.data(), raw.data(), raw.size());
    }
  };
  ck.params = Parameters<float>(ck.model);
  read_into("", ck.params);
  if (blob.value("has_moments", false)) {
    ck.moments.emplace(ck.model);
    read_into("adam.m/", ck.moments->m);
    read_into("adam.v/", ck.moments->v);
  }
  if (!r.done()) throw DataError(origin + ": trailing bytes after last tensor");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  if (!std::filesystem::exists(path)) {
    throw MissingDependency("checkpoint " + path.string() + " not found; run pretrain first");
  }
  return deserialize_checkpoint(io::read_file(path), path.string(), expected);
}

}  // namespace rescore
