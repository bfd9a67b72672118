#include "mvpose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kNearPiMargin = 1e-6;

Vec3 vee(const Mat3& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

}  // namespace

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

std::array<double, 12> RigidTransform::to_row_major() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 4 + c] = rotation_(r, c);
    out[r * 4 + 3] = translation_(r);
  }
  return out;
}

RigidTransform RigidTransform::from_row_major(const std::array<double, 12>& v) {
  Mat3 r;
  Vec3 t;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) r(i, c) = v[i * 4 + c];
    t(i) = v[i * 4 + 3];
  }
  return {r, t};
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(),
       w.z(), 0, -w.x(),
       -w.y(), w.x(), 0;
  return m;
}

RigidTransform exp_se3(const Twist& xi) {
  const double theta2 = xi.omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = hat(xi.omega);
  const Mat3 w2 = w * w;
  double a, b, c;
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Mat3 r = Mat3::Identity() + a * w + b * w2;
  const Mat3 v = Mat3::Identity() + b * w + c * w2;
  return {r, v * xi.v};
}

double rotation_angle(const Mat3& r) {
  const double s = 0.5 * vee(r).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

Twist log_se3(const RigidTransform& t) {
  const Mat3& r = t.rotation();
  const double theta = rotation_angle(r);
  if (std::numbers::pi - theta < kNearPiMargin) {
    throw Error(ErrorKind::AngleNearPi, "rotation angle " + std::to_string(theta) + " too close to pi");
  }
  Vec3 omega;
  double k;  // coefficient of hat^2 in V^-1
  if (theta < kSmallAngle) {
    omega = 0.5 * vee(r);
    k = 1.0 / 12.0;
  } else {
    omega = (theta / (2.0 * std::sin(theta))) * vee(r);
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    k = (1.0 - a / (2.0 * b)) / (theta * theta);
  }
  const Mat3 w = hat(omega);
  const Mat3 v_inv = Mat3::Identity() - 0.5 * w + k * w * w;
  return {omega, v_inv * t.translation()};
}

void PinholeCamera::validate() const {
  if (!(fx > 0) || !(fy > 0) || width < 1 || height < 1) {
    throw Error(ErrorKind::InvalidArgument, "pinhole camera needs fx, fy > 0 and a nonempty image");
  }
}

Mat3 PinholeCamera::K() const {
  Mat3 k;
  k << fx, 0, cx,
       0, fy, cy,
       0, 0, 1;
  return k;
}

Vec2 project(const PinholeCamera& cam, const Vec3& x_cam) {
  if (x_cam.z() <= kMinDepth) throw Error(ErrorKind::BehindCamera, "point at z <= 0");
  return {cam.fx * x_cam.x() / x_cam.z() + cam.cx, cam.fy * x_cam.y() / x_cam.z() + cam.cy};
}

Mat23 project_jacobian(const PinholeCamera& cam, const Vec3& x_cam) {
  const double z = x_cam.z();
  if (z <= kMinDepth) throw Error(ErrorKind::BehindCamera, "point at z <= 0");
  const double iz = 1.0 / z;
  Mat23 j;
  j << cam.fx * iz, 0, -cam.fx * x_cam.x() * iz * iz,
       0, cam.fy * iz, -cam.fy * x_cam.y() * iz * iz;
  return j;
}

Vec3 unproject(const PinholeCamera& cam, const Vec2& uv, double depth) {
  return {(uv.x() - cam.cx) / cam.fx * depth, (uv.y() - cam.cy) / cam.fy * depth, depth};
}

RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitY());  // looking along up
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r_wc;
  r_wc.col(0) = x;
  r_wc.col(1) = y;
  r_wc.col(2) = z;
  const Mat3 r_cw = r_wc.transpose();
  return {r_cw, -(r_cw * eye)};
}

CropCamera make_crop_camera(const PinholeCamera& cam, const RigidTransform& T_CW,
                            const BBox2& bbox, int crop_size) {
  cam.validate();
  if (!(bbox.width() > 0) || !(bbox.height() > 0)) {
    throw Error(ErrorKind::DegenerateBox, "bounding box has zero area");
  }
  if (!bbox.intersects_image(cam.width, cam.height)) {
    throw Error(ErrorKind::DegenerateBox, "bounding box does not intersect the image");
  }
  if (crop_size < 1) throw Error(ErrorKind::InvalidArgument, "crop size must be positive");

  const Vec2 center{0.5 * (bbox.x_min + bbox.x_max), 0.5 * (bbox.y_min + bbox.y_max)};
  const Vec3 axis = unproject(cam, center, 1.0).normalized();
  // Minimal rotation taking the box-center ray onto the crop optical axis.
  const Mat3 r_cpc =
      Eigen::Quaterniond::FromTwoVectors(axis, Vec3::UnitZ()).toRotationMatrix();

  double extent = 0.0;  // max |x/z|, |y/z| of the box corners in the crop frame
  const std::array<Vec2, 4> corners{Vec2{bbox.x_min, bbox.y_min}, Vec2{bbox.x_max, bbox.y_min},
                                    Vec2{bbox.x_max, bbox.y_max}, Vec2{bbox.x_min, bbox.y_max}};
  for (const Vec2& corner : corners) {
    const Vec3 ray = r_cpc * unproject(cam, corner, 1.0);
    if (ray.z() <= kMinDepth) throw Error(ErrorKind::DegenerateBox, "box spans more than a hemisphere");
    extent = std::max({extent, std::abs(ray.x() / ray.z()), std::abs(ray.y() / ray.z())});
  }

  CropCamera out;
  const double f = 0.5 * crop_size / (kCropMargin * extent);
  out.camera = PinholeCamera{f, f, 0.5 * crop_size, 0.5 * crop_size, crop_size, crop_size};
  out.R_CpC = r_cpc;
  out.T_CpW = compose(RigidTransform(r_cpc, Vec3::Zero()), T_CW);
  return out;
}

}  // namespace mvpose
