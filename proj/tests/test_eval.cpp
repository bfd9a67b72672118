#include <numbers>
#include <random>

#include "doctest.h"
#include "mvpose/eval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mvpose;

namespace {

TriangleMesh box(const Vec3& half) {
  TriangleMesh m = testutil::unit_cube();
  m.object_id = "box";
  for (Vec3& v : m.vertices) v = 2.0 * v.cwiseProduct(half);
  return m;
}

RigidTransform rot_z(double deg, const Vec3& t = Vec3::Zero()) {
  return RigidTransform(Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Vec3::UnitZ()).toRotationMatrix(), t);
}

const PinholeCamera kCam{600, 600, 320, 240, 640, 480};

struct Fixture {
  TriangleMesh mesh = testutil::unit_cube();
  EvalContext ctx;
  Fixture() {
    mesh.object_id = "o";
    ctx.meshes["o"] = &mesh;
    ctx.cameras.push_back({kCam, RigidTransform(Mat3::Identity(), Vec3(0, 0, 20))});
  }
};

}  // namespace

TEST_CASE("mssd examples") {
  const TriangleMesh m = box({1.0, 0.5, 0.25});
  const SymmetrySet none;
  std::mt19937_64 rng(1);
  const RigidTransform gt = testutil::random_pose(rng, 3.0);
  CHECK(mssd(gt, gt, m, none) == 0.0);
  const Vec3 d(0.3, -0.4, 1.2);
  const RigidTransform shifted(gt.rotation(), gt.translation() + d);
  CHECK(mssd(shifted, gt, m, none) == doctest::Approx(d.norm()).epsilon(1e-12));

  const RigidTransform flipped = compose(gt, rot_z(180));
  const SymmetrySet sym({rot_z(180)});
  CHECK(mssd(flipped, gt, m, sym) < 1e-12);
  CHECK(mssd(flipped, gt, m, none) > 1.0);
}

TEST_CASE("mspd examples") {
  const TriangleMesh m = box({1.0, 0.5, 0.25});
  const RigidTransform T_CW(Mat3::Identity(), Vec3(0, 0, 0));
  const RigidTransform gt = rot_z(20, Vec3(0, 0, 100));
  const SymmetrySet none;
  CHECK(mspd(gt, gt, m, none, kCam, T_CW) == 0.0);
  const Vec3 d(0.3, 0.4, 0);
  const RigidTransform shifted(gt.rotation(), gt.translation() + d);
  const double expect = kCam.fx * d.norm() / 100.0;
  CHECK(std::abs(mspd(shifted, gt, m, none, kCam, T_CW) - expect) < 0.01 * expect);

  const RigidTransform flipped = compose(gt, rot_z(180));
  CHECK(mspd(flipped, gt, m, SymmetrySet({rot_z(180)}), kCam, T_CW) < 1e-9);
  CHECK(mspd(flipped, gt, m, none, kCam, T_CW) > 1.0);

  const RigidTransform behind = rot_z(0, Vec3(0, 0, -100));
  CHECK(std::isinf(mspd(behind, gt, m, none, kCam, T_CW)));
}

TEST_CASE("metrics equal brute force and respect supersets and rigid motion") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    TriangleMesh m = box(testutil::random_vec(rng, 0.2, 1.0).cwiseAbs());
    const RigidTransform gt = RigidTransform(testutil::random_pose(rng, 0).rotation(), Vec3(0, 0, 30) + testutil::random_vec(rng, -1, 1));
    const RigidTransform est(testutil::random_pose(rng, 0).rotation(), gt.translation() + testutil::random_vec(rng, -0.5, 0.5));
    const SymmetrySet id;
    const RigidTransform T_CW = RigidTransform::identity();
    CHECK(mssd(est, gt, m, id) == oracle::mssd_brute(est, gt, m, id.transforms()));
    CHECK(mspd(est, gt, m, id, kCam, T_CW) == oracle::mspd_brute(est, gt, m, id.transforms(), kCam, T_CW));

    std::vector<RigidTransform> more{testutil::random_pose(rng, 0.2), rot_z(180)};
    const SymmetrySet bigger(more);
    CHECK(mssd(est, gt, m, bigger) <= mssd(est, gt, m, id));
    CHECK(mspd(est, gt, m, bigger, kCam, T_CW) <= mspd(est, gt, m, id, kCam, T_CW));
    CHECK(mssd(est, gt, m, bigger) == oracle::mssd_brute(est, gt, m, bigger.transforms()));

    const RigidTransform W = testutil::random_pose(rng, 10.0);
    CHECK(std::abs(mssd(compose(W, est), compose(W, gt), m, bigger) - mssd(est, gt, m, bigger)) < 1e-12);
  }
}

TEST_CASE("threshold grids") {
  const std::vector<double> t = mssd_thresholds(4.0);
  REQUIRE(t.size() == 10);
  CHECK(t.front() == doctest::Approx(0.2));
  CHECK(t.back() == doctest::Approx(2.0));
  const std::vector<double> p = mspd_thresholds(1.0);
  REQUIRE(p.size() == 10);
  CHECK(p.front() == doctest::Approx(5.0));
  CHECK(p.back() == doctest::Approx(50.0));
}

TEST_CASE("average recall examples") {
  Fixture f;
  const std::vector<EvalGroundTruth> gt{{"o", RigidTransform::identity()}};
  const RecallReport exact = average_recall({{"o", RigidTransform::identity(), 0.5}}, gt, f.ctx);
  CHECK(exact.ar == 1.0);
  CHECK(exact.ar_mssd == 1.0);
  CHECK(exact.ar_mspd == 1.0);
  const RecallReport none = average_recall({}, gt, f.ctx);
  CHECK(none.ar == 0.0);

  f.ctx.diameters["o"] = 4.0;
  const RecallReport quarter =
      average_recall({{"o", RigidTransform(Mat3::Identity(), Vec3(1, 0, 0)), 0.5}}, gt, f.ctx);
  CHECK(quarter.ar_mssd == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(quarter.mssd.values[4] == 0.0);
  CHECK(quarter.mssd.values[5] == 1.0);

  const RecallReport wrong_id = average_recall({{"p", RigidTransform::identity(), 0.5}}, gt, f.ctx);
  CHECK(wrong_id.ar == 0.0);
}

TEST_CASE("average precision examples") {
  Fixture f;
  const std::vector<EvalGroundTruth> gt{{"o", RigidTransform::identity()}};
  const EvalEstimate correct{"o", RigidTransform::identity(), 0.9};
  EvalEstimate duplicate{"o", RigidTransform(Mat3::Identity(), Vec3(5, 0, 0)), 0.5};

  CHECK(average_precision({correct}, gt, f.ctx).ap == 1.0);
  const PrecisionReport good = average_precision({correct, duplicate}, gt, f.ctx);
  CHECK(good.ap == 1.0);
  duplicate.score = 0.95;
  const PrecisionReport reversed = average_precision({correct, duplicate}, gt, f.ctx);
  CHECK(reversed.ap < good.ap);
  CHECK(reversed.ap == doctest::Approx(0.5));
  CHECK(average_precision({}, gt, f.ctx).ap == 0.0);
}

TEST_CASE("AR and AP are invariant to monotone score rescaling") {
  Fixture f;
  std::mt19937_64 rng(3);
  std::vector<EvalGroundTruth> gt;
  std::vector<EvalEstimate> est;
  for (int i = 0; i < 5; ++i) {
    const RigidTransform g(Mat3::Identity(), Vec3(3.0 * i, 0, 0));
    gt.push_back({"o", g});
    for (int j = 0; j < 3; ++j) {
      const RigidTransform e(Mat3::Identity(), g.translation() + testutil::random_vec(rng, -0.4, 0.4));
      est.push_back({"o", e, std::uniform_real_distribution<double>(0.01, 1.0)(rng)});
    }
  }
  const RecallReport ar = average_recall(est, gt, f.ctx);
  const PrecisionReport ap = average_precision(est, gt, f.ctx);
  CHECK(ap.ap > 0.0);
  CHECK(ap.ap < 1.0);
  std::vector<EvalEstimate> rescaled = est;
  for (EvalEstimate& e : rescaled) e.score = 0.1 + 0.5 * e.score * e.score;
  CHECK(average_recall(rescaled, gt, f.ctx).ar == ar.ar);
  CHECK(average_precision(rescaled, gt, f.ctx).ap == ap.ap);
}

TEST_CASE("symmetry set always contains the identity") {
  const SymmetrySet s({rot_z(90)});
  REQUIRE(s.transforms().size() == 2);
  CHECK(s.transforms().front().matrix() == Mat4::Identity());
}
