#pragma once

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfmdepth/sfm_model.hpp"

namespace sfmdepth {

enum class ModelFormat { Text, Binary, Auto };

namespace detail {

inline constexpr Point3dId kInvalidPoint3dId = std::numeric_limits<Point3dId>::max();

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  char bytes[sizeof(T)];
  const auto offset = static_cast<long long>(in.tellg());
  if (!in.read(bytes, sizeof(T))) {
    fail(ErrorCode::MalformedRecord,
         path.string() + " @ offset " + std::to_string(offset) + ": truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

/// Whitespace tokenizer over one text record with line-number context.
class TextRecord {
 public:
  TextRecord(std::string_view line, const std::filesystem::path& path, std::size_t line_no)
      : path_(path), line_no_(line_no) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) tokens_.push_back(line.substr(start, i - start));
    }
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t remaining() const { return tokens_.size() - pos_; }

  std::string_view next_token() {
    if (pos_ >= tokens_.size()) error("unexpected end of record");
    return tokens_[pos_++];
  }

  template <typename T>
  T next() {
    const std::string_view tok = next_token();
    T value{};
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      error("cannot parse '" + std::string(tok) + "'");
    }
    return value;
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::MalformedRecord,
         path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::vector<std::string_view> tokens_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
  std::size_t line_no_;
};

inline std::ifstream open_input(const std::filesystem::path& path, bool binary) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::MissingFile, path.string());
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

inline void read_cameras_text(const std::filesystem::path& path, SfmModel& model) {
  auto in = open_input(path, false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    TextRecord rec(t, path, line_no);
    const auto id = rec.next<CameraId>();
    const auto model_name = std::string(rec.next_token());
    const auto kind = camera_model_from_name(model_name);
    const auto width = rec.next<int>();
    const auto height = rec.next<int>();
    std::vector<double> params;
    while (rec.remaining() > 0) params.push_back(rec.next<double>());
    if (model.cameras.contains(id)) rec.error("duplicate camera id " + std::to_string(id));
    model.cameras.emplace(id, CameraIntrinsics::from_params(id, kind, width, height, params));
  }
}

inline void read_images_text(const std::filesystem::path& path, SfmModel& model) {
  auto in = open_input(path, false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    TextRecord rec(t, path, line_no);
    PosedImage img;
    img.image_id = rec.next<ImageId>();
    for (double& q : img.qvec) q = rec.next<double>();
    for (int i = 0; i < 3; ++i) img.translation[i] = rec.next<double>();
    img.camera_id = rec.next<CameraId>();
    img.name = std::string(rec.next_token());
    if (rec.remaining() != 0) rec.error("trailing tokens after image name");

    // The observation line always follows, even when empty.
    std::string obs_line;
    if (!std::getline(in, obs_line)) rec.error("missing observation line");
    ++line_no;
    TextRecord obs(trim(obs_line), path, line_no);
    if (obs.size() % 3 != 0) obs.error("observation tokens not a multiple of 3");
    while (obs.remaining() > 0) {
      Observation o;
      o.xy.x() = obs.next<double>();
      o.xy.y() = obs.next<double>();
      const auto pid = obs.next<long long>();
      if (pid < -1) obs.error("negative point id");
      if (pid >= 0) o.point3d_id = static_cast<Point3dId>(pid);
      img.observations.push_back(o);
    }
    if (model.images.contains(img.image_id)) {
      rec.error("duplicate image id " + std::to_string(img.image_id));
    }
    model.images.emplace(img.image_id, std::move(img));
  }
}

inline void read_points_text(const std::filesystem::path& path, SfmModel& model) {
  auto in = open_input(path, false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    TextRecord rec(t, path, line_no);
    ScenePoint pt;
    pt.point3d_id = rec.next<Point3dId>();
    for (int i = 0; i < 3; ++i) pt.xyz[i] = rec.next<double>();
    for (auto& c : pt.color) {
      const int v = rec.next<int>();
      if (v < 0 || v > 255) rec.error("color out of range");
      c = static_cast<std::uint8_t>(v);
    }
    pt.reproj_error = rec.next<double>();
    if (rec.remaining() % 2 != 0) rec.error("odd track token count");
    while (rec.remaining() > 0) {
      TrackElement el;
      el.image_id = rec.next<ImageId>();
      el.point2d_idx = rec.next<std::uint32_t>();
      pt.track.push_back(el);
    }
    if (model.points.contains(pt.point3d_id)) {
      rec.error("duplicate point id " + std::to_string(pt.point3d_id));
    }
    model.points.emplace(pt.point3d_id, std::move(pt));
  }
}

// 17 significant digits make every double survive a text round trip.
inline std::ostream& full_precision(std::ostream& out) {
  out << std::setprecision(17);
  return out;
}

inline void write_cameras_text(const SfmModel& model, const std::filesystem::path& path) {
  auto out = open_output(path, false);
  out << "# Camera list with one line of data per camera:\n"
      << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n"
      << "# Number of cameras: " << model.cameras.size() << "\n";
  full_precision(out);
  for (const auto& [id, cam] : model.cameras) {
    out << id << ' ' << camera_model_name(cam.model) << ' ' << cam.width << ' ' << cam.height;
    for (double p : cam.params()) out << ' ' << p;
    out << '\n';
  }
  finish_output(out, path);
}

inline void write_images_text(const SfmModel& model, const std::filesystem::path& path) {
  auto out = open_output(path, false);
  out << "# Image list with two lines of data per image:\n"
      << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
      << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n"
      << "# Number of images: " << model.images.size() << "\n";
  full_precision(out);
  for (const auto& [id, img] : model.images) {
    out << id;
    for (double q : img.qvec) out << ' ' << q;
    for (int i = 0; i < 3; ++i) out << ' ' << img.translation[i];
    out << ' ' << img.camera_id << ' ' << img.name << '\n';
    bool first = true;
    for (const auto& o : img.observations) {
      if (!first) out << ' ';
      first = false;
      out << o.xy.x() << ' ' << o.xy.y() << ' ';
      if (o.point3d_id) {
        out << *o.point3d_id;
      } else {
        out << -1;
      }
    }
    out << '\n';
  }
  finish_output(out, path);
}

inline void write_points_text(const SfmModel& model, const std::filesystem::path& path) {
  auto out = open_output(path, false);
  out << "# 3D point list with one line of data per point:\n"
      << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
      << "# Number of points: " << model.points.size() << "\n";
  full_precision(out);
  for (const auto& [id, pt] : model.points) {
    out << id << ' ' << pt.xyz.x() << ' ' << pt.xyz.y() << ' ' << pt.xyz.z();
    for (auto c : pt.color) out << ' ' << static_cast<int>(c);
    out << ' ' << pt.reproj_error;
    for (const auto& el : pt.track) out << ' ' << el.image_id << ' ' << el.point2d_idx;
    out << '\n';
  }
  finish_output(out, path);
}

// ---------------------------------------------------------------------------
// Binary (COLMAP layout: little-endian, u64 counts, f64 coordinates)
// ---------------------------------------------------------------------------

inline void expect_eof(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorCode::MalformedRecord,
         path.string() + " @ offset " + std::to_string(static_cast<long long>(in.tellg())) +
             ": trailing bytes");
  }
}

inline void read_cameras_binary(const std::filesystem::path& path, SfmModel& model) {
  auto in = open_input(path, true);
  const auto count = read_le<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id = read_le<CameraId>(in, path);
    const auto kind = camera_model_from_id(read_le<std::int32_t>(in, path));
    const auto width = read_le<std::uint64_t>(in, path);
    const auto height = read_le<std::uint64_t>(in, path);
    std::vector<double> params(camera_model_num_params(kind));
    for (double& p : params) p = read_le<double>(in, path);
    if (width > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) ||
        height > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
      fail(ErrorCode::MalformedRecord, path.string() + ": camera size overflow");
    }
    if (model.cameras.contains(id)) {
      fail(ErrorCode::MalformedRecord, path.string() + ": duplicate camera id " + std::to_string(id));
    }
    model.cameras.emplace(id, CameraIntrinsics::from_params(id, kind, static_cast<int>(width),
                                                            static_cast<int>(height), params));
  }
  expect_eof(in, path);
}

inline void read_images_binary(const std::filesystem::path& path, SfmModel& model) {
  auto in = open_input(path, true);
  const auto count = read_le<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    PosedImage img;
    img.image_id = read_le<ImageId>(in, path);
    for (double& q : img.qvec) q = read_le<double>(in, path);
    for (int k = 0; k < 3; ++k) img.translation[k] = read_le<double>(in, path);
    img.camera_id = read_le<CameraId>(in, path);
    char ch = 0;
    while (true) {
      if (!in.get(ch)) fail(ErrorCode::MalformedRecord, path.string() + ": unterminated name");
      if (ch == '\0') break;
      img.name.push_back(ch);
    }
    const auto num_obs = read_le<std::uint64_t>(in, path);
    img.observations.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(num_obs, 1u << 20)));
    for (std::uint64_t k = 0; k < num_obs; ++k) {
      Observation o;
      o.xy.x() = read_le<double>(in, path);
      o.xy.y() = read_le<double>(in, path);
      const auto pid = read_le<Point3dId>(in, path);
      if (pid != kInvalidPoint3dId) o.point3d_id = pid;
      img.observations.push_back(o);
    }
    if (model.images.contains(img.image_id)) {
      fail(ErrorCode::MalformedRecord,
           path.string() + ": duplicate image id " + std::to_string(img.image_id));
    }
    model.images.emplace(img.image_id, std::move(img));
  }
  expect_eof(in, path);
}

inline void read_points_binary(const std::filesystem::path& path, SfmModel& model) {
  auto in = open_input(path, true);
  const auto count = read_le<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    ScenePoint pt;
    pt.point3d_id = read_le<Point3dId>(in, path);
    for (int k = 0; k < 3; ++k) pt.xyz[k] = read_le<double>(in, path);
    for (auto& c : pt.color) c = read_le<std::uint8_t>(in, path);
    pt.reproj_error = read_le<double>(in, path);
    const auto track_len = read_le<std::uint64_t>(in, path);
    for (std::uint64_t k = 0; k < track_len; ++k) {
      TrackElement el;
      el.image_id = read_le<ImageId>(in, path);
      el.point2d_idx = read_le<std::uint32_t>(in, path);
      pt.track.push_back(el);
    }
    if (model.points.contains(pt.point3d_id)) {
      fail(ErrorCode::MalformedRecord,
           path.string() + ": duplicate point id " + std::to_string(pt.point3d_id));
    }
    model.points.emplace(pt.point3d_id, std::move(pt));
  }
  expect_eof(in, path);
}

inline void write_cameras_binary(const SfmModel& model, const std::filesystem::path& path) {
  auto out = open_output(path, true);
  write_le<std::uint64_t>(out, model.cameras.size());
  for (const auto& [id, cam] : model.cameras) {
    write_le<CameraId>(out, id);
    write_le<std::int32_t>(out, static_cast<std::int32_t>(cam.model));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(cam.width));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(cam.height));
    for (double p : cam.params()) write_le<double>(out, p);
  }
  finish_output(out, path);
}

inline void write_images_binary(const SfmModel& model, const std::filesystem::path& path) {
  auto out = open_output(path, true);
  write_le<std::uint64_t>(out, model.images.size());
  for (const auto& [id, img] : model.images) {
    write_le<ImageId>(out, id);
    for (double q : img.qvec) write_le<double>(out, q);
    for (int k = 0; k < 3; ++k) write_le<double>(out, img.translation[k]);
    write_le<CameraId>(out, img.camera_id);
    out.write(img.name.c_str(), static_cast<std::streamsize>(img.name.size() + 1));
    write_le<std::uint64_t>(out, img.observations.size());
    for (const auto& o : img.observations) {
      write_le<double>(out, o.xy.x());
      write_le<double>(out, o.xy.y());
      write_le<Point3dId>(out, o.point3d_id.value_or(kInvalidPoint3dId));
    }
  }
  finish_output(out, path);
}

inline void write_points_binary(const SfmModel& model, const std::filesystem::path& path) {
  auto out = open_output(path, true);
  write_le<std::uint64_t>(out, model.points.size());
  for (const auto& [id, pt] : model.points) {
    write_le<Point3dId>(out, id);
    for (int k = 0; k < 3; ++k) write_le<double>(out, pt.xyz[k]);
    for (auto c : pt.color) write_le<std::uint8_t>(out, c);
    write_le<double>(out, pt.reproj_error);
    write_le<std::uint64_t>(out, pt.track.size());
    for (const auto& el : pt.track) {
      write_le<ImageId>(out, el.image_id);
      write_le<std::uint32_t>(out, el.point2d_idx);
    }
  }
  finish_output(out, path);
}

inline bool all_exist(const std::filesystem::path& dir, const char* ext) {
  for (const char* stem : {"cameras", "images", "points3D"}) {
    if (!std::filesystem::exists(dir / (std::string(stem) + ext))) return false;
  }
  return true;
}

}  // namespace detail

/// Resolves Auto to the format present on disk. Binary wins when both are
/// complete, matching COLMAP's own loader.
inline ModelFormat detect_model_format(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::MissingFile, dir.string());
  if (detail::all_exist(dir, ".bin")) return ModelFormat::Binary;
  if (detail::all_exist(dir, ".txt")) return ModelFormat::Text;
  for (const char* stem : {"cameras", "images", "points3D"}) {
    const auto bin = dir / (std::string(stem) + ".bin");
    const auto txt = dir / (std::string(stem) + ".txt");
    if (!std::filesystem::exists(bin) && !std::filesystem::exists(txt)) {
      fail(ErrorCode::MissingFile, (dir / (std::string(stem) + ".{bin,txt}")).string());
    }
  }
  fail(ErrorCode::MissingFile, dir.string() + ": no consistent set of model files");
}

inline SfmModel read_model(const std::filesystem::path& dir, ModelFormat format = ModelFormat::Auto) {
  if (format == ModelFormat::Auto) format = detect_model_format(dir);
  SfmModel model;
  if (format == ModelFormat::Binary) {
    detail::read_cameras_binary(dir / "cameras.bin", model);
    detail::read_images_binary(dir / "images.bin", model);
    detail::read_points_binary(dir / "points3D.bin", model);
  } else {
    detail::read_cameras_text(dir / "cameras.txt", model);
    detail::read_images_text(dir / "images.txt", model);
    detail::read_points_text(dir / "points3D.txt", model);
  }
  model.validate();
  return model;
}

inline void write_model(const SfmModel& model, const std::filesystem::path& dir, ModelFormat format) {
  if (format == ModelFormat::Auto) fail(ErrorCode::IoFailure, "write_model needs an explicit format");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  if (format == ModelFormat::Binary) {
    detail::write_cameras_binary(model, dir / "cameras.bin");
    detail::write_images_binary(model, dir / "images.bin");
    detail::write_points_binary(model, dir / "points3D.bin");
  } else {
    detail::write_cameras_text(model, dir / "cameras.txt");
    detail::write_images_text(model, dir / "images.txt");
    detail::write_points_text(model, dir / "points3D.txt");
  }
}

}  // namespace sfmdepth
