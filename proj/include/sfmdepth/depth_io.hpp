#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfmdepth/conditioning.hpp"
#include "sfmdepth/depth_map.hpp"

// On-disk depth convention:
//   <dir>/<name>.depth.f32  raw little-endian float32, row-major H x W, no header
//   <dir>/<name>.meta.json  {"scale_domain", "width", "height", ...}
// Sparse maps encode empty pixels as 0; dense maps encode invalid pixels as NaN.

namespace sfmdepth {

using Json = nlohmann::json;

namespace io {

inline void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + path.parent_path().string());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::MissingFile, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
}

inline void write_f32(const std::filesystem::path& path, const Grid<double>& g) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  std::vector<char> buf(g.size() * 4);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float f = static_cast<float>(g[i]);
    auto bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(buf.data() + 4 * i, &bits, 4);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline Grid<double> read_f32(const std::filesystem::path& path, int width, int height) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::MissingFile, path.string());
  const auto expected = static_cast<std::uintmax_t>(width) * static_cast<std::uintmax_t>(height) * 4;
  if (std::filesystem::file_size(path) != expected) {
    fail(ErrorCode::MalformedRecord, path.string() + ": size does not match " +
                                         std::to_string(width) + "x" + std::to_string(height));
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<char> buf(static_cast<std::size_t>(expected));
  if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    fail(ErrorCode::IoFailure, "read failed for " + path.string());
  }
  Grid<double> g(width, height, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, buf.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    g[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return g;
}

/// NumPy .npy (format 1.0) export of a float32 H x W array.
inline void write_npy(const std::filesystem::path& path, const Grid<double>& g) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                       std::to_string(g.height()) + ", " + std::to_string(g.width()) + "), }";
  const std::size_t preamble = 10;
  const std::size_t total = preamble + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::string bytes = "\x93NUMPY";
  bytes.push_back('\x01');
  bytes.push_back('\x00');
  const auto len = static_cast<std::uint16_t>(header.size());
  bytes.push_back(static_cast<char>(len & 0xff));
  bytes.push_back(static_cast<char>(len >> 8));
  bytes += header;
  bytes.reserve(bytes.size() + g.size() * 4);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(g[i]));
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  write_text_file(path, bytes);
}

inline std::filesystem::path depth_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".depth.f32");
}
inline std::filesystem::path meta_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".meta.json");
}

inline void write_sparse(const std::filesystem::path& dir, const std::string& name,
                         const SparseDepthMap& map) {
  write_f32(depth_path(dir, name), map.depth);
  write_json(meta_path(dir, name), Json{{"kind", "sparse"},
                                        {"scale_domain", "metric"},
                                        {"width", map.width()},
                                        {"height", map.height()},
                                        {"count", map.count()}});
}

/// Source point ids are not stored; loaded maps mark present pixels with id 0.
inline SparseDepthMap read_sparse(const std::filesystem::path& dir, const std::string& name) {
  const Json meta = read_json(meta_path(dir, name));
  const int w = meta.at("width").get<int>();
  const int h = meta.at("height").get<int>();
  SparseDepthMap map(w, h);
  map.depth = read_f32(depth_path(dir, name), w, h);
  for (std::size_t i = 0; i < map.depth.size(); ++i) {
    if (!(map.depth[i] > 0.0) || !std::isfinite(map.depth[i])) {
      map.depth[i] = 0.0;
    } else {
      map.source_point[i] = 0;
    }
  }
  return map;
}

inline void write_dense(const std::filesystem::path& dir, const std::string& name,
                        const DenseDepthMap& map) {
  Grid<double> encoded = map.depth;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (!map.is_valid(i)) encoded[i] = std::numeric_limits<double>::quiet_NaN();
  }
  write_f32(depth_path(dir, name), encoded);
  write_json(meta_path(dir, name), Json{{"kind", "dense"},
                                        {"scale_domain", std::string(to_string(map.domain))},
                                        {"width", map.width()},
                                        {"height", map.height()}});
}

inline DenseDepthMap read_dense(const std::filesystem::path& dir, const std::string& name) {
  const Json meta = read_json(meta_path(dir, name));
  DenseDepthMap map(meta.at("width").get<int>(), meta.at("height").get<int>(),
                    parse_scale_domain(meta.at("scale_domain").get<std::string>()));
  const Grid<double> raw = read_f32(depth_path(dir, name), map.width(), map.height());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (std::isfinite(raw[i])) {
      map.depth[i] = raw[i];
      map.valid[i] = 1;
    }
  }
  return map;
}

inline Json range_to_json(const NormalizationRange& r) {
  return Json{{"d_min_adj", r.d_min_adj},
              {"d_max_adj", r.d_max_adj},
              {"raw_min", r.raw_min},
              {"raw_max", r.raw_max}};
}

inline NormalizationRange range_from_json(const Json& j) {
  NormalizationRange r;
  r.d_min_adj = j.at("d_min_adj").get<double>();
  r.d_max_adj = j.at("d_max_adj").get<double>();
  r.raw_min = j.at("raw_min").get<double>();
  r.raw_max = j.at("raw_max").get<double>();
  return r;
}

/// Bundle files: <name>.densified.f32, <name>.distance.f32 (when enabled) and
/// the <name>.bundle.json sidecar.
inline void write_bundle(const std::filesystem::path& dir, const std::string& name,
                         const ConditioningBundle& b) {
  write_f32(dir / (name + ".densified.f32"), b.densified_depth);
  if (b.distance_map) write_f32(dir / (name + ".distance.f32"), *b.distance_map);
  Json j = range_to_json(b.range);
  j["k_used"] = b.k_used;
  j["width"] = b.densified_depth.width();
  j["height"] = b.densified_depth.height();
  j["distance_map"] = b.distance_map.has_value();
  j["normalized_interval"] = {-1.0, 1.0};
  write_json(dir / (name + ".bundle.json"), j);
}

/// Restores a bundle; the trimmed sparse map comes from the stored sparse
/// depth clipped to the recorded range.
inline ConditioningBundle read_bundle(const std::filesystem::path& dir, const std::string& name,
                                      const SparseDepthMap& sparse) {
  const Json j = read_json(dir / (name + ".bundle.json"));
  ConditioningBundle b;
  b.range = range_from_json(j);
  b.k_used = j.at("k_used").get<int>();
  const int w = j.at("width").get<int>();
  const int h = j.at("height").get<int>();
  b.densified_depth = read_f32(dir / (name + ".densified.f32"), w, h);
  if (j.at("distance_map").get<bool>()) b.distance_map = read_f32(dir / (name + ".distance.f32"), w, h);
  b.trimmed = trim_to_range(sparse, b.range);
  return b;
}

}  // namespace io
}  // namespace sfmdepth
