#include <limits>
#include <numbers>
#include <optional>

#include "doctest.h"
#include "mvpose/error.hpp"
#include "mvpose/mesh_render.hpp"
#include "mvpose/synth.hpp"
#include "test_util.hpp"

using namespace mvpose;
using testutil::unit_cube;

namespace {

// Möller-Trumbore against every triangle; nearest hit distance along dir.
std::optional<double> ray_cast(const TriangleMesh& mesh, const RigidTransform& T_CO, const Vec3& dir) {
  std::optional<double> best;
  for (const auto& t : mesh.triangles) {
    const Vec3 a = T_CO * mesh.vertices[t[0]], b = T_CO * mesh.vertices[t[1]], c = T_CO * mesh.vertices[t[2]];
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) continue;
    const Vec3 s = -a;
    const double u = s.dot(p) / det;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) / det;
    const double tt = e2.dot(q) / det;
    if (u < 0 || v < 0 || u + v > 1 || tt <= 0) continue;
    if (!best || tt < *best) best = tt;
  }
  return best;
}

}  // namespace

TEST_CASE("unit cube OBJ loads 8 vertices and 12 triangles") {
  const auto dir = testutil::tmp_dir("mesh_obj");
  save_obj(unit_cube(), dir / "cube.obj");
  const TriangleMesh m = load_obj(dir / "cube.obj");
  CHECK(m.vertices.size() == 8);
  CHECK(m.triangles.size() == 12);
  CHECK(m.object_id == "cube");
  CHECK(m.vertices == unit_cube().vertices);
}

TEST_CASE("quad faces are fan-triangulated") {
  const auto dir = testutil::tmp_dir("mesh_quad");
  testutil::spit(dir / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  const TriangleMesh m = load_obj(dir / "q.obj");
  REQUIRE(m.triangles.size() == 2);
  CHECK(m.triangles[0] == std::array<int, 3>{0, 1, 2});
  CHECK(m.triangles[1] == std::array<int, 3>{0, 2, 3});
}

TEST_CASE("out-of-range face index is a parse error") {
  const auto dir = testutil::tmp_dir("mesh_bad");
  std::string text;
  for (const Vec3& v : unit_cube().vertices) text += "v " + std::to_string(v.x()) + " " + std::to_string(v.y()) + " " +
                                                    std::to_string(v.z()) + "\n";
  testutil::spit(dir / "bad.obj", text + "f 1 2 9\n");
  try {
    load_obj(dir / "bad.obj");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
  }
}

TEST_CASE("mesh validation") {
  TriangleMesh m = unit_cube();
  CHECK_NOTHROW(m.validate());
  m.triangles[3][1] = 8;
  CHECK_THROWS_AS(m.validate(), Error);
  TriangleMesh tiny;
  tiny.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  tiny.triangles = {{0, 1, 2}};
  CHECK_THROWS_AS(tiny.validate(), Error);
}

TEST_CASE("cube front face depth at the principal ray") {
  const PinholeCamera cam{100, 100, 50, 50, 100, 100};
  const DepthMap d = rasterize_depth(unit_cube(), RigidTransform(Mat3::Identity(), {0, 0, 5}), cam);
  CHECK(d.at(49, 49) == doctest::Approx(4.5).epsilon(1e-6));
  CHECK(d.at(50, 50) == doctest::Approx(4.5).epsilon(1e-6));
  CHECK_FALSE(d.valid(0, 0));
  for (double z : d.depth) CHECK(z >= 0.0);
}

TEST_CASE("depth matches ray casting on random pixels") {
  std::mt19937_64 rng(11);
  const PinholeCamera cam{600, 600, 320, 240, 640, 480};
  for (int trial = 0; trial < 5; ++trial) {
    const TriangleMesh mesh = random_convex_mesh("m", 100 + trial, 18, {50, 40, 30});
    RigidTransform T_CO = testutil::random_pose(rng, 0.0);
    T_CO = RigidTransform(T_CO.rotation(), {10.0 * trial - 20, 5, 400});
    const DepthMap d = rasterize_depth(mesh, T_CO, cam);
    std::uniform_int_distribution<int> ui(140, 340), uj(220, 420);
    int hits = 0;
    for (int k = 0; k < 2000 && hits < 50; ++k) {
      const int i = ui(rng), j = uj(rng);
      const Vec3 dir = unproject(cam, {j + 0.5, i + 0.5}, 1.0);
      const auto t = ray_cast(mesh, T_CO, dir);
      CHECK(t.has_value() == d.valid(i, j));
      if (t && d.valid(i, j)) {
        CHECK(std::abs(*t * dir.z() - d.at(i, j)) < 1e-4);
        ++hits;
      }
    }
    CHECK(hits == 50);
  }
}

TEST_CASE("z-buffer keeps the nearer mesh and reports its triangle") {
  const PinholeCamera cam{100, 100, 50, 50, 100, 100};
  const TriangleMesh near = unit_cube(), far = unit_cube(2.0);
  const RasterBuffer buf = rasterize({{&far, RigidTransform(Mat3::Identity(), {0, 0, 10})},
                                      {&near, RigidTransform(Mat3::Identity(), {0, 0, 5})}},
                                     cam);
  CHECK(buf.mesh_at(50, 50) == 1);
  CHECK(buf.depth.at(50, 50) == doctest::Approx(4.5));
  CHECK(buf.mesh_at(50, 70) == 0);
  CHECK(buf.depth.at(50, 70) == doctest::Approx(8.0));
  const int tri = buf.triangle_at(50, 50);
  REQUIRE(tri >= 0);
  const Vec3 x = intersect_triangle_plane(near, tri, RigidTransform(Mat3::Identity(), {0, 0, 5}), cam, {50.5, 50.5});
  CHECK(x.z() == doctest::Approx(buf.depth.at(50, 50)).epsilon(1e-12));
}

TEST_CASE("mesh behind the camera") {
  const PinholeCamera cam{100, 100, 50, 50, 100, 100};
  try {
    rasterize_depth(unit_cube(), RigidTransform(Mat3::Identity(), {0, 0, -5}), cam);
    FAIL("expected FullyBehindCamera");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FullyBehindCamera);
  }
}

TEST_CASE("aabb_world") {
  const TriangleMesh cube = unit_cube();
  const Aabb3 a = aabb_world(cube, {});
  CHECK(a.min == Vec3(-0.5, -0.5, -0.5));
  CHECK(a.max == Vec3(0.5, 0.5, 0.5));
  const Vec3 t(1, -2, 3);
  const Aabb3 b = aabb_world(cube, RigidTransform(Mat3::Identity(), t));
  CHECK((b.min - (a.min + t)).norm() < 1e-15);
  CHECK((b.max - (a.max + t)).norm() < 1e-15);
  const Aabb3 r = aabb_world(cube, RigidTransform(Eigen::AngleAxisd(std::numbers::pi / 4, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero()));
  CHECK(std::abs(r.max.x() - r.min.x() - std::sqrt(2.0)) < 1e-9);
  CHECK(std::abs(r.max.y() - r.min.y() - std::sqrt(2.0)) < 1e-9);
  CHECK(std::abs(r.max.z() - r.min.z() - 1.0) < 1e-9);
  CHECK((r.min.array() <= r.max.array()).all());
}

TEST_CASE("mesh_diameter") {
  CHECK(mesh_diameter(unit_cube()) == doctest::Approx(std::sqrt(3.0)));
  TriangleMesh seg;
  seg.vertices = {{0, 0, 0}, {0, 0, 0.5}, {0, 0, 1}, {0, 0, 1.5}, {0, 0, 2}};
  CHECK(mesh_diameter(seg) == 2.0);
  std::mt19937_64 rng(12);
  for (int k = 0; k < 20; ++k) {
    TriangleMesh cloud;
    for (int i = 0; i < 30; ++i) cloud.vertices.push_back(testutil::random_vec(rng, -3, 3));
    double brute = 0;
    for (const Vec3& a : cloud.vertices)
      for (const Vec3& b : cloud.vertices) brute = std::max(brute, (a - b).norm());
    CHECK(mesh_diameter(cloud) == doctest::Approx(brute).epsilon(1e-15));
  }
}
