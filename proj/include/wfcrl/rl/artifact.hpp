#pragma once

// PolicyArtifact files.
//
// Layout (all integers little-endian):
//   "WFCP" | u32 format_version | u32 biome | u32 layout | u32 width | u32 height
//   | u64 episodes | u64 seed | u32 input_dim | u32 hidden
//   | u32 tensor_count | tensor_count x (u32 rows, u32 cols)
//   | tensors as little-endian IEEE-754 float32, declaration order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wfcrl/rl/policy.hpp"
#include "wfcrl/rl/reward.hpp"

namespace wfcrl::rl {

inline constexpr char kPolicyMagic[4] = {'W', 'F', 'C', 'P'};
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

class PolicyFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t uint(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) throw PolicyFormatError("truncated policy file");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_policy(const PolicyParams& p) {
  std::string out(kPolicyMagic, 4);
  detail::put_u32(out, kPolicyFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(p.meta.biome));
  detail::put_u32(out, static_cast<std::uint32_t>(p.meta.layout));
  detail::put_u32(out, static_cast<std::uint32_t>(p.meta.width));
  detail::put_u32(out, static_cast<std::uint32_t>(p.meta.height));
  detail::put_u64(out, p.meta.episodes);
  detail::put_u64(out, p.meta.seed);
  detail::put_u32(out, static_cast<std::uint32_t>(p.input_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(p.hidden));
  detail::put_u32(out, PolicyParams::kTensorCount);
  for (const auto& s : p.shapes()) {
    detail::put_u32(out, static_cast<std::uint32_t>(s.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(s.cols));
  }
  for (const auto* t : p.tensors())
    for (double v : *t) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline PolicyParams deserialize_policy(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kPolicyMagic, 4) != 0)
    throw PolicyFormatError("not a policy file (bad magic)");
  detail::Reader r(bytes.substr(4));
  if (const auto v = r.u32(); v != kPolicyFormatVersion)
    throw PolicyFormatError("unsupported policy format version " + std::to_string(v));
  PolicyMetadata meta;
  const auto biome = r.u32();
  const auto layout = r.u32();
  if (biome > 2 || layout > 1) throw PolicyFormatError("invalid biome or layout tag");
  meta.biome = static_cast<Biome>(biome);
  meta.layout = static_cast<Layout>(layout);
  meta.width = static_cast<int>(r.u32());
  meta.height = static_cast<int>(r.u32());
  meta.episodes = r.u64();
  meta.seed = r.u64();
  const int input_dim = static_cast<int>(r.u32());
  const int hidden = static_cast<int>(r.u32());
  if (input_dim <= 0 || hidden <= 0 || input_dim > 4096 || hidden > 4096)
    throw PolicyFormatError("implausible layer sizes");
  if (r.u32() != PolicyParams::kTensorCount) throw PolicyFormatError("unexpected tensor count");
  PolicyParams p = PolicyParams::zeros(input_dim, hidden);
  p.meta = meta;
  for (const auto& s : p.shapes()) {
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    if (rows != s.rows || cols != s.cols) throw PolicyFormatError("layer shapes are inconsistent");
  }
  for (auto* t : p.tensors())
    for (double& v : *t) v = r.f32();
  if (!r.done()) throw PolicyFormatError("trailing bytes after tensors");
  if (!p.finite()) throw PolicyFormatError("policy contains non-finite values");
  return p;
}

inline void save_policy(const std::string& path, const PolicyParams& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const auto bytes = serialize_policy(p);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline PolicyParams load_policy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_policy(ss.str());
}

struct CurveRow {
  int episode = 0;
  RewardBreakdown reward;
};

inline std::string curve_to_csv(const std::vector<CurveRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "episode,R,C,B,E\n";
  for (const auto& r : rows)
    out << r.episode << ',' << r.reward.total << ',' << r.reward.completeness << ',' << r.reward.coherence << ','
        << r.reward.efficiency << '\n';
  return out.str();
}

}  // namespace wfcrl::rl
