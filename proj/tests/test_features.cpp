#include <cstring>

#include "doctest.h"
#include "mvpose/error.hpp"
#include "mvpose/features.hpp"
#include "mvpose/synth.hpp"
#include "test_util.hpp"

using namespace mvpose;

namespace {

FeatureMap random_map(int h, int w, int d, int cell, uint64_t seed) {
  FeatureMap m(h, w, d, cell);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  for (float& v : m.data()) v = n(rng);
  return m;
}

// Per-channel scalar bilinear interpolation with border replication.
double scalar_bilinear(const FeatureMap& m, int ch, const Vec2& uv) {
  const double gx = std::clamp(uv.x() / m.cell_size() - 0.5, 0.0, m.width() - 1.0);
  const double gy = std::clamp(uv.y() / m.cell_size() - 0.5, 0.0, m.height() - 1.0);
  const int x0 = std::min(static_cast<int>(std::floor(gx)), m.width() - 1);
  const int y0 = std::min(static_cast<int>(std::floor(gy)), m.height() - 1);
  const int x1 = std::min(x0 + 1, m.width() - 1), y1 = std::min(y0 + 1, m.height() - 1);
  const double fx = gx - x0, fy = gy - y0;
  auto at = [&](int r, int c) { return static_cast<double>(m.cell(r, c)(ch)); };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

struct CropSetup {
  TriangleMesh mesh;
  SyntheticFeatureField field;
  RigidTransform T_WO;
  CropCamera crop;
};

CropSetup crop_setup(uint64_t seed) {
  TriangleMesh mesh = random_convex_mesh("obj", seed, 20, {50, 40, 35});
  SyntheticFeatureField field = SyntheticFeatureField::generate("obj", seed, 0.15 * mesh_diameter(mesh));
  const PinholeCamera cam{600, 600, 320, 240, 640, 480};
  const RigidTransform T_WO(Eigen::AngleAxisd(0.3 * seed, Vec3(1, 2, 3).normalized()).toRotationMatrix(),
                            {5, -3, 0});
  const RigidTransform T_CW = look_at({300, 300, 250}, {0, 0, 0});
  const RigidTransform T_CO = T_CW * T_WO;
  double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
  for (const Vec3& v : mesh.vertices) {
    const Vec2 p = project(cam, T_CO * v);
    x0 = std::min(x0, p.x()), y0 = std::min(y0, p.y()), x1 = std::max(x1, p.x()), y1 = std::max(y1, p.y());
  }
  return {mesh, field, T_WO, make_crop_camera(cam, T_CW, {x0, y0, x1, y1}, 420)};
}

}  // namespace

TEST_CASE("bilinear sampling at centers and midpoints") {
  const FeatureMap m = random_map(5, 7, 6, 14, 1);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) {
      CHECK((sample_bilinear(m, m.cell_center(r, c)) - m.cell(r, c).cast<double>()).norm() == 0.0);
    }
  }
  const Vec2 mid = 0.5 * (m.cell_center(2, 3) + m.cell_center(2, 4));
  const VecX mean = 0.5 * (m.cell(2, 3).cast<double>() + m.cell(2, 4).cast<double>());
  CHECK((sample_bilinear(m, mid) - mean).norm() < 1e-15);
}

TEST_CASE("bilinear sampling matches a scalar oracle") {
  const FeatureMap m = random_map(6, 8, 5, 14, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 8 * 14.0 - 1e-9), v(0.0, 6 * 14.0 - 1e-9);
  for (int i = 0; i < 500; ++i) {
    const Vec2 uv(u(rng), v(rng));
    const VecX s = sample_bilinear(m, uv);
    for (int ch = 0; ch < 5; ++ch) CHECK(std::abs(s(ch) - scalar_bilinear(m, ch, uv)) < 1e-12);
  }
  CHECK_THROWS_AS(sample_bilinear(m, {-0.1, 3}), Error);
  CHECK_THROWS_AS(sample_bilinear(m, {3, 6 * 14.0}), Error);
}

TEST_CASE("sample_gradient") {
  FeatureMap flat(4, 4, 3, 14);
  for (float& x : flat.data()) x = 0.7f;
  CHECK(sample_gradient(flat, {30.0, 25.0}).norm() == 0.0);

  FeatureMap ramp(4, 6, 2, 10);
  const double a = 0.25;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 6; ++c) {
      VecX d(2);
      d << a * ramp.cell_center(r, c).x(), 0.0;
      ramp.set_cell(r, c, d);
    }
  for (const Vec2 uv : {Vec2(12, 12), Vec2(33.3, 21.7), Vec2(54.9, 34.9)}) {
    const MatX2 g = sample_gradient(ramp, uv);
    CHECK(g(0, 0) == doctest::Approx(a).epsilon(1e-6));
    CHECK(g(0, 1) == 0.0);
    CHECK(g.row(1).norm() == 0.0);
  }

  const FeatureMap m = random_map(6, 8, 4, 14, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> cell_u(0.0, 6.999), cell_v(0.0, 4.999), frac(0.1, 0.9);
  const double h = 0.01 * 14;
  for (int i = 0; i < 200; ++i) {
    // grid coordinate = integer cell + fraction in [0.1, 0.9], away from kinks
    const Vec2 g(std::floor(cell_u(rng)) + frac(rng), std::floor(cell_v(rng)) + frac(rng));
    const Vec2 uv = (g.array() + 0.5).matrix() * 14.0;
    const MatX2 J = sample_gradient(m, uv);
    MatX2 fd(4, 2);
    fd.col(0) = (sample_bilinear(m, uv + Vec2(h, 0)) - sample_bilinear(m, uv - Vec2(h, 0))) / (2 * h);
    fd.col(1) = (sample_bilinear(m, uv + Vec2(0, h)) - sample_bilinear(m, uv - Vec2(0, h))) / (2 * h);
    CHECK((J - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK_THROWS_AS(sample_gradient(m, {3.0, 50.0}), Error);
  CHECK_FALSE(in_gradient_domain(m, {3.0, 50.0}));
}

TEST_CASE("PCA on a line") {
  std::vector<VecX> pts;
  const Vec3 dir = Vec3(1, 2, -2).normalized();
  for (int i = 0; i < 20; ++i) pts.push_back(Vec3(1, 1, 1) + (i - 7.3) * dir);
  const PcaBasis b = fit_pca(pts, 1);
  CHECK(std::abs(std::abs(b.components.row(0).dot(dir.transpose())) - 1.0) < 1e-9);
  for (const VecX& p : pts) CHECK((reconstruct_pca(b, apply_pca(b, p)) - p).norm() < 1e-9);
  CHECK_FALSE(b.rank_deficient);
  const PcaBasis deficient = fit_pca(pts, 2);
  CHECK(deficient.rank_deficient);
  CHECK(deficient.components.row(1).norm() == 0.0);
}

TEST_CASE("PCA variance capture and full-basis round trip") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  const int D = 8;
  MatX mix = MatX::NullaryExpr(D, D, [&] { return n(rng); });
  std::vector<VecX> data;
  for (int i = 0; i < 300; ++i) data.push_back(mix * VecX::NullaryExpr(D, [&] { return n(rng); }));

  const PcaBasis full = fit_pca(data, D);
  CHECK((full.components * full.components.transpose() - MatX::Identity(D, D)).cwiseAbs().maxCoeff() < 1e-9);
  for (const VecX& d : data) {
    CHECK((reconstruct_pca(full, apply_pca(full, d)) - d).norm() < 1e-9);
    const VecX once = apply_pca(full, d);
    const VecX twice = apply_pca(full, reconstruct_pca(full, once));
    CHECK((once - twice).norm() < 1e-9);
  }
  for (int i = 0; i < D; ++i) {
    Eigen::Index arg;
    full.components.row(i).cwiseAbs().maxCoeff(&arg);
    CHECK(full.components(i, arg) > 0);
  }

  const int k = 3;
  const PcaBasis top = fit_pca(data, k);
  double captured = 0, total = 0;
  for (const VecX& d : data) {
    captured += (reconstruct_pca(top, apply_pca(top, d)) - top.mean).squaredNorm();
    total += (d - top.mean).squaredNorm();
  }
  CHECK(std::abs(captured / total - full.eigenvalues.head(k).sum() / full.eigenvalues.sum()) < 1e-9);
  CHECK_THROWS_AS(fit_pca(std::vector<VecX>(data.begin(), data.begin() + 2), 3), Error);
}

TEST_CASE("synthetic field: deterministic, unit norm, Lipschitz") {
  const SyntheticFeatureField f = SyntheticFeatureField::generate("o", 9, 10.0);
  const SyntheticFeatureField g = SyntheticFeatureField::generate("o", 9, 10.0);
  CHECK(f.dim() == 32);
  std::mt19937_64 rng(7);
  const double spectral_m = Eigen::JacobiSVD<MatX>(f.mixing()).singularValues()(0);
  const double spectral_f = Eigen::JacobiSVD<MatX>(f.frequencies()).singularValues()(0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = testutil::random_vec(rng, -40, 40);
    const VecX d = synth_descriptor(f, x);
    CHECK(d == g.describe(x));
    CHECK(std::abs(d.norm() - 1.0) < 1e-9);
    const Vec3 y = x + 1e-6 * testutil::random_vec(rng, -1, 1).normalized();
    const double dx = (x - y).norm();
    CHECK((f.raw(x) - f.raw(y)).norm() <= spectral_m * spectral_f * dx * (1 + 1e-6));
    CHECK((f.describe(x) - f.describe(y)).norm() <= 2 * spectral_m * spectral_f * dx / f.raw(x).norm() * (1 + 1e-6));
  }
}

TEST_CASE("registered features on a cube filling the crop") {
  const TriangleMesh cube = testutil::unit_cube();
  const PinholeCamera cam{420, 420, 210, 210, 420, 420};
  const RigidTransform T_CO(Eigen::AngleAxisd(0.4, Vec3(1, 1, 0).normalized()).toRotationMatrix(), {0, 0, 2.2});
  const SyntheticFeatureField f = SyntheticFeatureField::generate("cube", 1, 0.2);
  const RegisteredFeatureSet set = build_registered_features(cube, T_CO, cam, f, nullptr, 14, "v");

  const DepthMap depth = rasterize_depth(cube, T_CO, cam);
  const int n = 420 / 14;
  auto on = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= n || c >= n) return false;
    return depth.valid(r * 14 + 7, c * 14 + 7);
  };
  int interior = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      bool all = true;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) all = all && on(r + dr, c + dc);
      interior += all;
    }
  CHECK(interior > 100);
  CHECK(static_cast<int>(set.entries.size()) == interior);
  CHECK(set.entries.size() <= static_cast<size_t>(n * n));
  CHECK(set.view_id == "v");
  for (const RegisteredFeature& e : set.entries) {
    CHECK(std::abs(e.point.cwiseAbs().maxCoeff() - 0.5) < 1e-6);
    CHECK((project(cam, T_CO * e.point) - e.source_pixel).norm() < 1e-4);
    CHECK(std::abs(e.descriptor.norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("registered features outside the crop") {
  const PinholeCamera cam{420, 420, 210, 210, 420, 420};
  const SyntheticFeatureField f = SyntheticFeatureField::generate("cube", 1, 0.2);
  try {
    build_registered_features(testutil::unit_cube(), RigidTransform(Mat3::Identity(), {30, 0, 2}), cam, f);
    FAIL("expected NoVisibleSurface");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoVisibleSurface);
  }
}

TEST_CASE("query map closure with registered features") {
  for (uint64_t seed : {1, 2, 3}) {
    const CropSetup s = crop_setup(seed);
    const FeatureMap q = build_query_feature_map({{&s.mesh, s.T_WO, &s.field}}, s.crop.camera, s.crop.T_CpW);
    const RigidTransform T_CpO = s.crop.T_CpW * s.T_WO;
    const RegisteredFeatureSet reg = build_registered_features(s.mesh, T_CpO, s.crop.camera, s.field);
    CHECK(reg.entries.size() > 50);
    double worst = 0;
    for (const RegisteredFeature& e : reg.entries) {
      const Vec2 uv = project(s.crop.camera, T_CpO * e.point);
      worst = std::max(worst, (sample_bilinear(q, uv) - e.descriptor).norm());
    }
    CHECK(worst < 1e-6);
    int zeros = 0;
    const DepthMap depth = rasterize_depth(s.mesh, T_CpO, s.crop.camera);
    for (int r = 0; r < q.height(); ++r)
      for (int c = 0; c < q.width(); ++c) {
        const Vec2 ctr = q.cell_center(r, c);
        const int pi = static_cast<int>(ctr.y()), pj = static_cast<int>(ctr.x());
        if (!depth.valid(pi, pj) && !depth.valid(pi - 1, pj) && !depth.valid(pi, pj - 1) &&
            !depth.valid(pi - 1, pj - 1)) {
          CHECK(q.cell(r, c).norm() == 0.0f);
          ++zeros;
        }
      }
    CHECK(zeros > 0);
  }
}

TEST_CASE("query map occlusion follows depth order") {
  const CropSetup s = crop_setup(4);
  const TriangleMesh other = random_convex_mesh("far", 77, 16, {60, 60, 60});
  const SyntheticFeatureField far_field = SyntheticFeatureField::generate("far", 78, 15.0);
  // Behind the first object along the crop axis.
  const RigidTransform T_CpW = s.crop.T_CpW;
  const Vec3 near_c = T_CpW * s.T_WO.translation();
  const RigidTransform T_W_far(Mat3::Identity(), inverse(T_CpW) * Vec3(near_c.x() + 20, near_c.y(), near_c.z() + 150));

  const FeatureMap both = build_query_feature_map({{&s.mesh, s.T_WO, &s.field}, {&other, T_W_far, &far_field}},
                                                  s.crop.camera, T_CpW);
  const FeatureMap near_only = build_query_feature_map({{&s.mesh, s.T_WO, &s.field}}, s.crop.camera, T_CpW);
  const FeatureMap far_only = build_query_feature_map({{&other, T_W_far, &far_field}}, s.crop.camera, T_CpW);
  int overlap = 0, far_visible = 0;
  for (int r = 0; r < both.height(); ++r)
    for (int c = 0; c < both.width(); ++c) {
      if (near_only.cell(r, c).norm() > 0) {
        CHECK(both.cell(r, c) == near_only.cell(r, c));
        overlap += far_only.cell(r, c).norm() > 0;
      } else if (far_only.cell(r, c).norm() > 0) {
        CHECK(both.cell(r, c) == far_only.cell(r, c));
        ++far_visible;
      }
    }
  CHECK(overlap > 10);
  CHECK(far_visible > 0);
}

TEST_CASE("noise background and corruption are seeded") {
  const CropSetup s = crop_setup(5);
  QueryOptions o;
  o.background = BackgroundMode::Noise;
  o.seed = 42;
  o.corrupt_rate = 0.2;
  const FeatureMap a = build_query_feature_map({{&s.mesh, s.T_WO, &s.field}}, s.crop.camera, s.crop.T_CpW, o);
  const FeatureMap b = build_query_feature_map({{&s.mesh, s.T_WO, &s.field}}, s.crop.camera, s.crop.T_CpW, o);
  CHECK(a == b);
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c) CHECK(std::abs(a.cell(r, c).norm() - 1.0f) < 1e-5f);
}

TEST_CASE("FMAP tensor files") {
  const auto dir = testutil::tmp_dir("fmap");
  const FeatureMap m = random_map(10, 12, 32, 14, 8);
  save_feature_tensor(m, dir / "a.fmap");
  const std::string bytes = testutil::slurp(dir / "a.fmap");
  CHECK(bytes.size() == 24 + 10 * 12 * 32 * 4);
  CHECK(bytes.substr(0, 4) == "FMAP");
  uint32_t header[5];
  std::memcpy(header, bytes.data() + 4, sizeof header);
  CHECK(header[0] == 1);
  CHECK(header[1] == 10);
  CHECK(header[2] == 12);
  CHECK(header[3] == 32);
  CHECK(header[4] == 14);
  CHECK(load_feature_tensor(dir / "a.fmap") == m);

  auto kind_of = [](const std::filesystem::path& p) {
    try {
      load_feature_tensor(p);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Schema;
  };
  std::string bad = bytes;
  bad[0] = 'X';
  testutil::spit(dir / "magic.fmap", bad);
  CHECK(kind_of(dir / "magic.fmap") == ErrorKind::BadMagic);
  testutil::spit(dir / "short.fmap", bytes.substr(0, bytes.size() - 100));
  CHECK(kind_of(dir / "short.fmap") == ErrorKind::TruncatedFile);
}
