#ifndef TPR_DATA_DATASET_HPP
#define TPR_DATA_DATASET_HPP

#include <cstring>
#include <fstream>

#include "tpr/data/pairs.hpp"

namespace tpr {

// Frame-pair dataset container ("TPRD"), little-endian. Byte layout:
//   magic "TPRD" | version u32 | pair count u32 | H u32 | W u32 | C u32
//   per record: episode id u32 | source idx u16 | target idx u16 |
//               xs f32 row-major | xt f32 row-major
struct DatasetHeader {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t count = 0, height = 0, width = 0, channels = 0;
};

namespace detail {
inline void write_u16(std::ofstream& o, std::uint16_t v) { o.write(reinterpret_cast<const char*>(&v), 2); }
inline void write_u32(std::ofstream& o, std::uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
inline std::uint16_t read_u16(std::ifstream& in, const std::string& path) {
  std::uint16_t v;
  in.read(reinterpret_cast<char*>(&v), 2);
  require_format(in.gcount() == 2, "truncated dataset: " + path);
  return v;
}
inline std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), 4);
  require_format(in.gcount() == 4, "truncated dataset: " + path);
  return v;
}
}  // namespace detail

inline void write_dataset(const std::string& path, const std::vector<FramePair>& pairs) {
  require(!pairs.empty(), "refusing to write an empty dataset");
  const auto& first = pairs.front().xs;
  const std::uint32_t h = static_cast<std::uint32_t>(first.size(1));
  const std::uint32_t w = static_cast<std::uint32_t>(first.size(2));
  const std::uint32_t c = static_cast<std::uint32_t>(first.size(3));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open for writing: " + path);
  out.write("TPRD", 4);
  detail::write_u32(out, DatasetHeader::kVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(pairs.size()));
  detail::write_u32(out, h);
  detail::write_u32(out, w);
  detail::write_u32(out, c);
  for (const auto& p : pairs) {
    require_shape(p.xs.size(1) == static_cast<int>(h) && p.xs.size(2) == static_cast<int>(w),
                  "dataset frames must share one shape");
    detail::write_u32(out, p.episode_id);
    detail::write_u16(out, p.source_idx);
    detail::write_u16(out, p.target_idx);
    out.write(reinterpret_cast<const char*>(p.xs.data()),
              static_cast<std::streamsize>(sizeof(float) * p.xs.numel()));
    out.write(reinterpret_cast<const char*>(p.xt.data()),
              static_cast<std::streamsize>(sizeof(float) * p.xt.numel()));
  }
  require(out.good(), "write failed: " + path);
}

inline std::vector<FramePair> read_dataset(const std::string& path,
                                           DatasetHeader* header_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require_format(in.good(), "cannot open dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  require_format(in.gcount() == 4 && std::memcmp(magic, "TPRD", 4) == 0,
                 "bad dataset magic in " + path);
  const auto version = detail::read_u32(in, path);
  require_format(version == DatasetHeader::kVersion,
                 "unsupported dataset version " + std::to_string(version));
  DatasetHeader hdr;
  hdr.count = detail::read_u32(in, path);
  hdr.height = detail::read_u32(in, path);
  hdr.width = detail::read_u32(in, path);
  hdr.channels = detail::read_u32(in, path);
  require_format(hdr.channels == 3, "dataset channel count must be 3");
  std::vector<FramePair> pairs;
  pairs.reserve(hdr.count);
  const std::vector<int> shape = {1, static_cast<int>(hdr.height),
                                  static_cast<int>(hdr.width),
                                  static_cast<int>(hdr.channels)};
  for (std::uint32_t i = 0; i < hdr.count; ++i) {
    FramePair p;
    p.episode_id = detail::read_u32(in, path);
    p.source_idx = detail::read_u16(in, path);
    p.target_idx = detail::read_u16(in, path);
    p.xs = Tensor<float>::uninit(shape);
    p.xt = Tensor<float>::uninit(shape);
    const std::streamsize bytes = static_cast<std::streamsize>(sizeof(float) * p.xs.numel());
    in.read(reinterpret_cast<char*>(p.xs.data()), bytes);
    require_format(in.gcount() == bytes, "truncated dataset: " + path);
    in.read(reinterpret_cast<char*>(p.xt.data()), bytes);
    require_format(in.gcount() == bytes, "truncated dataset: " + path);
    pairs.push_back(std::move(p));
  }
  if (header_out) *header_out = hdr;
  return pairs;
}

}  // namespace tpr

#endif
