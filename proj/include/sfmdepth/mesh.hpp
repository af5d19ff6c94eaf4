#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "sfmdepth/depth_io.hpp"
#include "sfmdepth/error.hpp"

namespace sfmdepth {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<Eigen::Vector3d> normals;  // empty or one per vertex

  bool empty() const { return triangles.empty(); }
};

struct FusedPoint {
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  std::uint32_t support_count = 0;
};

struct FusedPointCloud {
  std::vector<FusedPoint> points;

  std::vector<Eigen::Vector3d> positions() const {
    std::vector<Eigen::Vector3d> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.xyz);
    return out;
  }
};

inline double triangle_area(const TriangleMesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles[t];
  const Eigen::Vector3d& a = mesh.vertices[tri[0]];
  const Eigen::Vector3d& b = mesh.vertices[tri[1]];
  const Eigen::Vector3d& c = mesh.vertices[tri[2]];
  return 0.5 * (b - a).cross(c - a).norm();
}

/// Area-weighted vertex normals from face orientation.
inline void compute_vertex_normals(TriangleMesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Eigen::Vector3d::Zero());
  for (const auto& tri : mesh.triangles) {
    const Eigen::Vector3d n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                                  .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    for (auto v : tri) mesh.normals[v] += n;
  }
  for (auto& n : mesh.normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
}

namespace io {

namespace detail {

template <typename T>
void append_le(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(bytes, sizeof(T));
}

}  // namespace detail

/// Binary little-endian PLY with double-precision vertices.
inline void write_mesh_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  const bool with_normals = mesh.normals.size() == mesh.vertices.size() && !mesh.vertices.empty();
  std::string buf = "ply\nformat binary_little_endian 1.0\n";
  buf += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  buf += "property double x\nproperty double y\nproperty double z\n";
  if (with_normals) buf += "property double nx\nproperty double ny\nproperty double nz\n";
  buf += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  buf += "property list uchar uint vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int k = 0; k < 3; ++k) detail::append_le<double>(buf, mesh.vertices[i][k]);
    if (with_normals) {
      for (int k = 0; k < 3; ++k) detail::append_le<double>(buf, mesh.normals[i][k]);
    }
  }
  for (const auto& t : mesh.triangles) {
    detail::append_le<std::uint8_t>(buf, 3);
    for (auto v : t) detail::append_le<std::uint32_t>(buf, v);
  }
  write_text_file(path, buf);
}

/// Binary PLY point cloud; `support` is the number of agreeing views.
inline void write_point_cloud_ply(const std::filesystem::path& path, const FusedPointCloud& cloud) {
  std::string buf = "ply\nformat binary_little_endian 1.0\n";
  buf += "element vertex " + std::to_string(cloud.points.size()) + "\n";
  buf += "property double x\nproperty double y\nproperty double z\nproperty uint support\nend_header\n";
  for (const auto& p : cloud.points) {
    for (int k = 0; k < 3; ++k) detail::append_le<double>(buf, p.xyz[k]);
    detail::append_le<std::uint32_t>(buf, p.support_count);
  }
  write_text_file(path, buf);
}

inline void write_mesh_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  write_text_file(path, out.str());
}

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  fail(ErrorCode::MalformedRecord, "unknown PLY type " + t);
}

inline double ply_read_binary(const char*& p, const std::string& t) {
  auto take = [&](auto tag) {
    using T = decltype(tag);
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return take(std::int8_t{});
  if (t == "uchar" || t == "uint8") return take(std::uint8_t{});
  if (t == "short" || t == "int16") return take(std::int16_t{});
  if (t == "ushort" || t == "uint16") return take(std::uint16_t{});
  if (t == "int" || t == "int32") return take(std::int32_t{});
  if (t == "uint" || t == "uint32") return take(std::uint32_t{});
  if (t == "float" || t == "float32") return take(float{});
  return take(double{});
}

}  // namespace detail

/// Reads vertices (x, y, z) and triangle faces from ASCII or binary
/// little-endian PLY. Other properties are skipped; polygons are fanned.
inline TriangleMesh read_mesh_ply(const std::filesystem::path& path) {
  const std::string data = read_text_file(path);
  const auto header_end = data.find("end_header\n");
  if (data.rfind("ply", 0) != 0 || header_end == std::string::npos) {
    fail(ErrorCode::MalformedRecord, path.string() + ": not a PLY file");
  }
  std::istringstream header(data.substr(0, header_end));
  std::string line;
  std::string format;
  std::vector<detail::PlyElement> elements;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      ls >> format;
    } else if (key == "element") {
      detail::PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) fail(ErrorCode::MalformedRecord, path.string() + ": property before element");
      detail::PlyProperty prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        prop.is_list = true;
        ls >> prop.count_type >> prop.type >> prop.name;
      } else {
        prop.type = type;
        ls >> prop.name;
      }
      elements.back().props.push_back(prop);
    }
  }
  if (format != "ascii" && format != "binary_little_endian") {
    fail(ErrorCode::MalformedRecord, path.string() + ": unsupported PLY format " + format);
  }
  TriangleMesh mesh;
  const bool binary = format == "binary_little_endian";
  const char* p = data.data() + header_end + std::string("end_header\n").size();
  const char* end = data.data() + data.size();
  std::istringstream ascii(binary ? std::string() : std::string(p, end));

  auto read_scalar = [&](const std::string& type) -> double {
    if (binary) {
      if (p + detail::ply_type_size(type) > end) fail(ErrorCode::MalformedRecord, path.string() + ": truncated");
      return detail::ply_read_binary(p, type);
    }
    double v;
    if (!(ascii >> v)) fail(ErrorCode::MalformedRecord, path.string() + ": truncated");
    return v;
  };

  for (const auto& e : elements) {
    for (std::size_t i = 0; i < e.count; ++i) {
      Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
      std::vector<std::uint32_t> face;
      for (const auto& prop : e.props) {
        if (prop.is_list) {
          const auto n = static_cast<std::size_t>(read_scalar(prop.count_type));
          face.clear();
          for (std::size_t k = 0; k < n; ++k) face.push_back(static_cast<std::uint32_t>(read_scalar(prop.type)));
        } else {
          const double v = read_scalar(prop.type);
          if (prop.name == "x") xyz.x() = v;
          if (prop.name == "y") xyz.y() = v;
          if (prop.name == "z") xyz.z() = v;
        }
      }
      if (e.name == "vertex") {
        mesh.vertices.push_back(xyz);
      } else if (e.name == "face") {
        for (std::size_t k = 2; k < face.size(); ++k) mesh.triangles.push_back({face[0], face[k - 1], face[k]});
      }
    }
  }
  for (const auto& t : mesh.triangles) {
    for (auto v : t) {
      if (v >= mesh.vertices.size()) fail(ErrorCode::MalformedRecord, path.string() + ": face index out of range");
    }
  }
  return mesh;
}

/// Reads the x, y, z of every vertex (point clouds or meshes).
inline std::vector<Eigen::Vector3d> read_ply_points(const std::filesystem::path& path) {
  return read_mesh_ply(path).vertices;
}

}  // namespace io
}  // namespace sfmdepth
