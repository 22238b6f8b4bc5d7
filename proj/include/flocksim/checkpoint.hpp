#pragma once

// Checkpoint container, little-endian throughout:
//   bytes 0..7   magic "FLOCKCKP"
//   u32          format version (currently 1)
//   u64          config digest
//   u64          episode counter
//   u32          parameter array count
//   per array:   u16 name length, name bytes, u32 rows, u32 cols,
//                rows*cols f64 values (row-major)
//   u32          optimizer count
//   per opt:     u16 name length, name bytes, i64 step count,
//                u64 moment length, f64 first moments, f64 second moments

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flocksim/networks.hpp"
#include "flocksim/nn/adam.hpp"

namespace flocksim {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'F', 'L', 'O', 'C',
                                             'K', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint32_t version = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t episode = 0;
};

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

inline std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) {
    throw CheckpointError("checkpoint: truncated file");
  }
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw CheckpointError("checkpoint: truncated file");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw CheckpointError("checkpoint: truncated file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_u64(is));
}

inline void put_name(std::ostream& os, const std::string& name) {
  if (name.size() > 0xffff) {
    throw CheckpointError("checkpoint: name too long: " + name);
  }
  put_u16(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
}

inline std::string get_name(std::istream& is) {
  const std::uint16_t len = get_u16(is);
  std::string name(len, '\0');
  if (len > 0 && !is.read(name.data(), len)) {
    throw CheckpointError("checkpoint: truncated file");
  }
  return name;
}

inline void put_array(std::ostream& os, const nn::ParamView& view) {
  put_name(os, view.name);
  put_u32(os, static_cast<std::uint32_t>(view.rows));
  put_u32(os, static_cast<std::uint32_t>(view.cols));
  for (std::size_t i = 0; i < view.size(); ++i) put_f64(os, view.values[i]);
}

inline void put_adam(std::ostream& os, const std::string& name,
                     const nn::AdamState& st) {
  put_name(os, name);
  put_u64(os, static_cast<std::uint64_t>(st.step_count));
  put_u64(os, st.m.size());
  for (double d : st.m) put_f64(os, d);
  for (double d : st.v) put_f64(os, d);
}

inline void get_adam(std::istream& is, const std::string& expect_name,
                     nn::AdamState& st) {
  const std::string name = get_name(is);
  if (name != expect_name) {
    throw CheckpointError("checkpoint: expected optimizer '" + expect_name +
                          "', found '" + name + "'");
  }
  const auto steps = get_u64(is);
  const auto len = get_u64(is);
  if (len != st.m.size()) {
    throw CheckpointError("checkpoint: optimizer '" + name +
                          "' moment length " + std::to_string(len) +
                          " does not match network parameter count " +
                          std::to_string(st.m.size()));
  }
  st.step_count = static_cast<long>(steps);
  for (double& d : st.m) d = get_f64(is);
  for (double& d : st.v) d = get_f64(is);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            std::uint64_t config_digest, std::uint64_t episode,
                            PolicyNetwork& actor, PolicyNetwork& critic,
                            const nn::AdamOptimizer& actor_opt,
                            const nn::AdamOptimizer& critic_opt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw CheckpointError("checkpoint: cannot open for writing: " +
                          path.string());
  }
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u64(os, config_digest);
  detail::put_u64(os, episode);

  const auto& ap = actor.params();
  const auto& cp = critic.params();
  detail::put_u32(os, static_cast<std::uint32_t>(ap.size() + cp.size()));
  for (const auto& v : ap) detail::put_array(os, v);
  for (const auto& v : cp) detail::put_array(os, v);

  detail::put_u32(os, 2);
  detail::put_adam(os, "actor", actor_opt.state());
  detail::put_adam(os, "critic", critic_opt.state());
  os.flush();
  if (!os) {
    throw CheckpointError("checkpoint: write failed: " + path.string());
  }
}

inline CheckpointMeta peek_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw CheckpointError("checkpoint: cannot open: " + path.string());
  }
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw CheckpointError("checkpoint: bad magic in " + path.string());
  }
  CheckpointMeta meta;
  meta.version = detail::get_u32(is);
  if (meta.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " +
                          std::to_string(meta.version));
  }
  meta.config_digest = detail::get_u64(is);
  meta.episode = detail::get_u64(is);
  return meta;
}

/// Restores both networks (and optimizer moments when given) from a file.
/// Every stored array must match the live network's layer names and shapes;
/// mismatches report the offending layer.
inline CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                                      PolicyNetwork& actor,
                                      PolicyNetwork& critic,
                                      nn::AdamOptimizer* actor_opt = nullptr,
                                      nn::AdamOptimizer* critic_opt = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw CheckpointError("checkpoint: cannot open: " + path.string());
  }
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw CheckpointError("checkpoint: bad magic in " + path.string());
  }
  CheckpointMeta meta;
  meta.version = detail::get_u32(is);
  if (meta.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " +
                          std::to_string(meta.version));
  }
  meta.config_digest = detail::get_u64(is);
  meta.episode = detail::get_u64(is);

  std::vector<nn::ParamView> expected;
  for (const auto& v : actor.params()) expected.push_back(v);
  for (const auto& v : critic.params()) expected.push_back(v);

  const std::uint32_t count = detail::get_u32(is);
  if (count != expected.size()) {
    throw CheckpointError(
        "checkpoint: file holds " + std::to_string(count) +
        " parameter arrays, network defines " +
        std::to_string(expected.size()));
  }
  for (auto& view : expected) {
    const std::string name = detail::get_name(is);
    if (name != view.name) {
      throw CheckpointError("checkpoint: expected array '" + view.name +
                            "', found '" + name + "'");
    }
    const auto rows = detail::get_u32(is);
    const auto cols = detail::get_u32(is);
    if (static_cast<int>(rows) != view.rows ||
        static_cast<int>(cols) != view.cols) {
      throw CheckpointError(
          "checkpoint: shape mismatch for '" + view.name + "': file " +
          std::to_string(rows) + "x" + std::to_string(cols) + ", network " +
          std::to_string(view.rows) + "x" + std::to_string(view.cols));
    }
    for (std::size_t i = 0; i < view.size(); ++i) {
      view.values[i] = detail::get_f64(is);
    }
  }

  const std::uint32_t opt_count = detail::get_u32(is);
  if (opt_count != 2) {
    throw CheckpointError("checkpoint: expected 2 optimizer states, found " +
                          std::to_string(opt_count));
  }
  nn::AdamState scratch_a, scratch_c;
  auto& sa = actor_opt ? actor_opt->state() : scratch_a;
  auto& sc = critic_opt ? critic_opt->state() : scratch_c;
  if (!actor_opt) {
    std::size_t total = 0;
    for (const auto& v : actor.params()) total += v.size();
    scratch_a.m.assign(total, 0.0);
    scratch_a.v.assign(total, 0.0);
  }
  if (!critic_opt) {
    std::size_t total = 0;
    for (const auto& v : critic.params()) total += v.size();
    scratch_c.m.assign(total, 0.0);
    scratch_c.v.assign(total, 0.0);
  }
  detail::get_adam(is, "actor", sa);
  detail::get_adam(is, "critic", sc);
  return meta;
}

}  // namespace flocksim
