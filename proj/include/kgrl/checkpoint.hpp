#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "kgrl/param.hpp"

namespace kgrl {

// Versioned binary checkpoint: string metadata plus named row-major double
// buffers. Round-trips are value-exact.
inline constexpr char kCheckpointMagic[8] = {'K', 'G', 'R', 'L', 'C', 'K', 'P', '1'};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParamSet params;

  const NamedParam& require(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return p;
    throw ParamError("checkpoint missing parameter: " + name);
  }
  int meta_int(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParamError("checkpoint missing meta key: " + key);
    return std::stoi(it->second);
  }
  std::string meta_str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParamError("checkpoint missing meta key: " + key);
    return it->second;
  }
};

namespace ckpt_detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline void write_str(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& in) {
  std::string s(read_u64(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const ParamSet& params,
                            const std::map<std::string, std::string>& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  ckpt_detail::write_u64(out, meta.size());
  for (const auto& [k, v] : meta) {
    ckpt_detail::write_str(out, k);
    ckpt_detail::write_str(out, v);
  }
  ckpt_detail::write_u64(out, params.size());
  for (const auto& p : params) {
    ckpt_detail::write_str(out, p.name);
    ckpt_detail::write_u64(out, static_cast<std::uint64_t>(p.rows));
    ckpt_detail::write_u64(out, static_cast<std::uint64_t>(p.cols));
    out.write(reinterpret_cast<const char*>(p.value->data()),
              static_cast<std::streamsize>(p.value->size() * sizeof(real)));
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw ParseError("not a checkpoint file: " + path);
  Checkpoint ck;
  const auto n_meta = ckpt_detail::read_u64(in);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = ckpt_detail::read_str(in);
    ck.meta[k] = ckpt_detail::read_str(in);
  }
  const auto n_params = ckpt_detail::read_u64(in);
  for (std::uint64_t i = 0; i < n_params; ++i) {
    NamedParam p;
    p.name = ckpt_detail::read_str(in);
    p.rows = static_cast<std::int64_t>(ckpt_detail::read_u64(in));
    p.cols = static_cast<std::int64_t>(ckpt_detail::read_u64(in));
    p.value = std::make_shared<Buffer>(static_cast<size_t>(p.rows * p.cols));
    in.read(reinterpret_cast<char*>(p.value->data()),
            static_cast<std::streamsize>(p.value->size() * sizeof(real)));
    ck.params.push_back(std::move(p));
  }
  if (!in) throw ParseError("truncated checkpoint: " + path);
  return ck;
}

}  // namespace kgrl
