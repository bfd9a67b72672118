#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mvpose/geometry.hpp"

namespace mvpose {

struct TriangleMesh {
  std::string object_id;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  /// Throws Error(EmptyMesh / InvalidArgument) when indices are out of range,
  /// the solid is degenerate, or the diameter is zero.
  void validate() const;
};

/// Camera-frame z per pixel; 0 marks background.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // row-major

  double at(int row, int col) const { return depth[static_cast<size_t>(row) * width + col]; }
  bool valid(int row, int col) const { return at(row, col) > 0.0; }
};

/// Depth plus the index of the triangle that won the z-test at each pixel
/// (-1 for background). `mesh_index` identifies the mesh when several are
/// rasterized into one buffer.
struct RasterBuffer {
  DepthMap depth;
  std::vector<int> triangle;
  std::vector<int> mesh_index;

  int triangle_at(int row, int col) const {
    return triangle[static_cast<size_t>(row) * depth.width + col];
  }
  int mesh_at(int row, int col) const {
    return mesh_index[static_cast<size_t>(row) * depth.width + col];
  }
};

struct Aabb3 {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  double volume() const { return (max - min).cwiseMax(0.0).prod(); }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
};

/// Reads the `v` / `f` subset of Wavefront OBJ. Polygons are fan-triangulated.
TriangleMesh load_obj(const std::filesystem::path& path, std::string object_id = {});
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Pixel (row i, col j) samples the ray through (j + 0.5, i + 0.5).
DepthMap rasterize_depth(const TriangleMesh& mesh, const RigidTransform& T_CO,
                         const PinholeCamera& cam);

struct PosedMesh {
  const TriangleMesh* mesh;
  RigidTransform T_CO;
};

/// Z-buffers several meshes into one buffer. Throws Error(FullyBehindCamera)
/// when no vertex of any mesh lies in front of the camera.
RasterBuffer rasterize(const std::vector<PosedMesh>& meshes, const PinholeCamera& cam);

/// Intersects the camera ray through `uv` with the plane of the given
/// triangle, returning the camera-frame point. Used to lift sub-pixel
/// locations exactly onto the surface that covers them.
Vec3 intersect_triangle_plane(const TriangleMesh& mesh, int triangle, const RigidTransform& T_CO,
                              const PinholeCamera& cam, const Vec2& uv);

Aabb3 aabb_world(const TriangleMesh& mesh, const RigidTransform& T_WO);
double mesh_diameter(const TriangleMesh& mesh);

}  // namespace mvpose
