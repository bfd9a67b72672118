#include "mvpose/mesh_render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

constexpr double kNearPlane = 1e-6;

// Sutherland-Hodgman against z >= kNearPlane.
std::vector<Vec3> clip_near(const std::array<Vec3, 3>& tri) {
  std::vector<Vec3> out;
  out.reserve(4);
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = tri[i];
    const Vec3& b = tri[(i + 1) % 3];
    const bool a_in = a.z() >= kNearPlane;
    const bool b_in = b.z() >= kNearPlane;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      const double s = (kNearPlane - a.z()) / (b.z() - a.z());
      Vec3 p = a + s * (b - a);
      p.z() = kNearPlane;
      out.push_back(p);
    }
  }
  return out;
}

struct ScreenVertex {
  double u, v, inv_z;
};

void raster_triangle(const ScreenVertex& a, const ScreenVertex& b, const ScreenVertex& c,
                     int triangle, int mesh, RasterBuffer& buf) {
  const double area = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
  if (std::abs(area) < 1e-12) return;
  const int w = buf.depth.width;
  const int h = buf.depth.height;
  const double u_lo = std::min({a.u, b.u, c.u});
  const double u_hi = std::max({a.u, b.u, c.u});
  const double v_lo = std::min({a.v, b.v, c.v});
  const double v_hi = std::max({a.v, b.v, c.v});
  const int j0 = std::max(0, static_cast<int>(std::ceil(u_lo - 0.5)));
  const int j1 = std::min(w - 1, static_cast<int>(std::floor(u_hi - 0.5)));
  const int i0 = std::max(0, static_cast<int>(std::ceil(v_lo - 0.5)));
  const int i1 = std::min(h - 1, static_cast<int>(std::floor(v_hi - 0.5)));
  const double inv_area = 1.0 / area;
  for (int i = i0; i <= i1; ++i) {
    const double py = i + 0.5;
    for (int j = j0; j <= j1; ++j) {
      const double px = j + 0.5;
      const double w0 = ((b.u - px) * (c.v - py) - (b.v - py) * (c.u - px)) * inv_area;
      const double w1 = ((c.u - px) * (a.v - py) - (c.v - py) * (a.u - px)) * inv_area;
      const double w2 = 1.0 - w0 - w1;
      if (w0 < 0 || w1 < 0 || w2 < 0) continue;
      const double inv_z = w0 * a.inv_z + w1 * b.inv_z + w2 * c.inv_z;
      if (!(inv_z > 0)) continue;
      const double z = 1.0 / inv_z;
      const size_t idx = static_cast<size_t>(i) * w + j;
      double& cur = buf.depth.depth[idx];
      if (cur == 0.0 || z < cur) {
        cur = z;
        buf.triangle[idx] = triangle;
        buf.mesh_index[idx] = mesh;
      }
    }
  }
}

}  // namespace

void TriangleMesh::validate() const {
  if (triangles.empty()) throw Error(ErrorKind::EmptyMesh, "mesh '" + object_id + "' has no faces");
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int idx : t) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorKind::InvalidArgument, "triangle index out of range in mesh '" + object_id + "'");
      }
    }
  }
  if (vertices.size() < 4 || triangles.size() < 4) {
    throw Error(ErrorKind::InvalidArgument, "mesh '" + object_id + "' is not a solid");
  }
  if (!(mesh_diameter(*this) > 0)) {
    throw Error(ErrorKind::InvalidArgument, "mesh '" + object_id + "' has zero diameter");
  }
}

TriangleMesh load_obj(const std::filesystem::path& path, std::string object_id) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  TriangleMesh mesh;
  mesh.object_id = object_id.empty() ? path.stem().string() : std::move(object_id);
  std::vector<std::vector<int>> faces;
  std::vector<int> face_lines;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) fail("vertex needs three coordinates");
      if (!p.allFinite()) fail("non-finite vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> face;
      std::string tok;
      while (ss >> tok) {
        // Keep only the vertex index of v/vt/vn triples.
        const std::string head = tok.substr(0, tok.find('/'));
        size_t used = 0;
        int idx = 0;
        try {
          idx = std::stoi(head, &used);
        } catch (const std::exception&) {
          fail("bad face index '" + tok + "'");
        }
        if (used != head.size()) fail("bad face index '" + tok + "'");
        if (idx < 1) fail("face index must be positive (1-based, negative indices unsupported)");
        face.push_back(idx - 1);
      }
      if (face.size() < 3) fail("face needs at least three vertices");
      faces.push_back(std::move(face));
      face_lines.push_back(line_no);
    }
  }
  const int n = static_cast<int>(mesh.vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx >= n) {
        line_no = face_lines[f];
        fail("face index " + std::to_string(idx + 1) + " exceeds vertex count " + std::to_string(n));
      }
    }
    for (size_t k = 1; k + 1 < faces[f].size(); ++k) {
      mesh.triangles.push_back({faces[f][0], faces[f][k], faces[f][k + 1]});
    }
  }
  if (mesh.triangles.empty()) throw Error(ErrorKind::EmptyMesh, path.string() + " has no faces");
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << std::setprecision(17);
  out << "# " << mesh.object_id << "\n";
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << "\n";
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << "\n";
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

RasterBuffer rasterize(const std::vector<PosedMesh>& meshes, const PinholeCamera& cam) {
  cam.validate();
  RasterBuffer buf;
  buf.depth.width = cam.width;
  buf.depth.height = cam.height;
  const size_t n = static_cast<size_t>(cam.width) * cam.height;
  buf.depth.depth.assign(n, 0.0);
  buf.triangle.assign(n, -1);
  buf.mesh_index.assign(n, -1);

  bool any_in_front = false;
  for (size_t m = 0; m < meshes.size(); ++m) {
    const TriangleMesh& mesh = *meshes[m].mesh;
    std::vector<Vec3> cam_pts;
    cam_pts.reserve(mesh.vertices.size());
    for (const Vec3& v : mesh.vertices) {
      cam_pts.push_back(meshes[m].T_CO * v);
      any_in_front = any_in_front || cam_pts.back().z() > 0;
    }
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
      const auto& tri = mesh.triangles[t];
      const std::array<Vec3, 3> pts{cam_pts[tri[0]], cam_pts[tri[1]], cam_pts[tri[2]]};
      if (pts[0].z() < kNearPlane && pts[1].z() < kNearPlane && pts[2].z() < kNearPlane) continue;
      const std::vector<Vec3> poly = clip_near(pts);
      if (poly.size() < 3) continue;
      std::vector<ScreenVertex> sv;
      sv.reserve(poly.size());
      for (const Vec3& p : poly) {
        sv.push_back({cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, 1.0 / p.z()});
      }
      for (size_t k = 1; k + 1 < sv.size(); ++k) {
        raster_triangle(sv[0], sv[k], sv[k + 1], static_cast<int>(t), static_cast<int>(m), buf);
      }
    }
  }
  if (!any_in_front) throw Error(ErrorKind::FullyBehindCamera, "no geometry in front of the camera");
  return buf;
}

DepthMap rasterize_depth(const TriangleMesh& mesh, const RigidTransform& T_CO,
                         const PinholeCamera& cam) {
  return rasterize({PosedMesh{&mesh, T_CO}}, cam).depth;
}

Vec3 intersect_triangle_plane(const TriangleMesh& mesh, int triangle, const RigidTransform& T_CO,
                              const PinholeCamera& cam, const Vec2& uv) {
  const auto& tri = mesh.triangles.at(static_cast<size_t>(triangle));
  const Vec3 a = T_CO * mesh.vertices[tri[0]];
  const Vec3 b = T_CO * mesh.vertices[tri[1]];
  const Vec3 c = T_CO * mesh.vertices[tri[2]];
  const Vec3 n = (b - a).cross(c - a);
  const Vec3 ray = unproject(cam, uv, 1.0);
  const double denom = n.dot(ray);
  if (std::abs(denom) < 1e-15 * n.norm()) {
    return Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  }
  return (n.dot(a) / denom) * ray;
}

Aabb3 aabb_world(const TriangleMesh& mesh, const RigidTransform& T_WO) {
  Aabb3 box;
  box.min = Vec3::Constant(std::numeric_limits<double>::infinity());
  box.max = -box.min;
  for (const Vec3& v : mesh.vertices) {
    const Vec3 p = T_WO * v;
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

double mesh_diameter(const TriangleMesh& mesh) {
  double best = 0.0;
  const auto& v = mesh.vertices;
  for (size_t i = 0; i < v.size(); ++i) {
    for (size_t j = i + 1; j < v.size(); ++j) best = std::max(best, (v[i] - v[j]).squaredNorm());
  }
  return std::sqrt(best);
}

}  // namespace mvpose
