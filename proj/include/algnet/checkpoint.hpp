#pragma once

// Checkpoint file layout (all integers and floats little-endian):
//
//   bytes  "ALGNETCK"                       magic, 8 bytes
//   u32    version                          currently 1
//   u64    header length H
//   H      UTF-8 JSON {"config": ..., "vocab": ..., "sizes": {...}}
//   u64    parameter count P
//   P x {  u32 name length, name bytes,
//          u32 rank, u64 dims[rank],
//          f64 values[prod(dims)]  }

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "algnet/config.hpp"
#include "algnet/ehr_data.hpp"
#include "algnet/model.hpp"
#include "algnet/params.hpp"

namespace algnet {

inline constexpr std::array<char, 8> kCheckpointMagic{'A', 'L', 'G', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  CodeVocab vocab;
  ModelSizes sizes;
  ParamStore params;
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw DataError("checkpoint: truncated file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

inline std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw DataError("checkpoint: implausible length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint: truncated file");
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const TrainConfig& cfg, const CodeVocab& vocab,
                             const ModelSizes& sizes, const ParamStore& params) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const nlohmann::json header{
      {"config", config_to_json(cfg)},
      {"vocab", vocab_to_json(vocab)},
      {"sizes", {{"n_diag", sizes.n_diag}, {"n_proc", sizes.n_proc}, {"n_med", sizes.n_med}}}};
  const std::string text = header.dump();
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put_le<std::uint64_t>(out, params.size());
  for (const auto& [name, p] : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : p.value.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw DataError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw DataError("checkpoint: bad magic bytes");
  }
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(detail::get_bytes(in, detail::get_le<std::uint64_t>(in)));
    ck.config = config_from_json(header.at("config"));
    ck.vocab = vocab_from_json(header.at("vocab"));
    const auto& s = header.at("sizes");
    ck.sizes = {s.at("n_diag").get<std::size_t>(), s.at("n_proc").get<std::size_t>(),
                s.at("n_med").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header (") + e.what() + ")");
  }
  const auto count = detail::get_le<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = detail::get_bytes(in, detail::get_le<std::uint32_t>(in));
    const auto rank = detail::get_le<std::uint32_t>(in);
    if (rank > 2) throw DataError("checkpoint: tensor rank " + std::to_string(rank) + " for " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::get_le<std::uint64_t>(in));
    Tensor t(shape);
    for (double& v : t.data()) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
    ck.params.add(std::move(name), std::move(t));
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const AlgNet& model, const CodeVocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(out, model.config(), vocab, model.sizes(), model.params());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  return read_checkpoint(in);
}

/// Model from a checkpoint; the parameter layout must match what the
/// checkpoint's config would build.
inline AlgNet model_from_checkpoint(Checkpoint ck) {
  const ParamStore fresh = init_params(ck.config, ck.sizes);
  if (fresh.size() != ck.params.size()) throw DataError("checkpoint: parameter count mismatch");
  auto it = ck.params.begin();
  for (const auto& [name, p] : fresh) {
    if (it->first != name || it->second.value.shape() != p.value.shape()) {
      throw DataError("checkpoint: parameter layout mismatch at " + name);
    }
    ++it;
  }
  return AlgNet(ck.config, ck.sizes, std::move(ck.params));
}

}  // namespace algnet
