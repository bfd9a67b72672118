#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mvpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Rigid transform in SE(3). Maps points from a source frame into a target
/// frame: x_target = rotation * x_source + translation. Named by the
/// T_<target><source> convention used throughout (T_WO, T_CW, T_CO).
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  RigidTransform inverse() const;
  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }
  RigidTransform operator*(const RigidTransform& b) const {
    return {rotation_ * b.rotation_, rotation_ * b.translation_ + translation_};
  }

  /// Row-major (R|t), the 12-number layout used by the file formats.
  std::array<double, 12> to_row_major() const;
  static RigidTransform from_row_major(const std::array<double, 12>& v);

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }
inline Vec3 transform_point(const RigidTransform& t, const Vec3& x) { return t * x; }

/// Tangent-space increment of SE(3): rotation part omega (radians), translation
/// part v. Stacked as (v, omega) when used as a 6-vector by the solver.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 out;
    out << v, omega;
    return out;
  }
  static Twist from_stacked(const Vec6& x) { return {x.tail<3>(), x.head<3>()}; }
};

Mat3 hat(const Vec3& w);

RigidTransform exp_se3(const Twist& xi);
/// Throws Error(AngleNearPi) when the rotation angle is within 1e-6 of pi.
Twist log_se3(const RigidTransform& t);

/// Geodesic rotation distance in radians.
double rotation_angle(const Mat3& r);

struct PinholeCamera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws Error(InvalidArgument) unless fx, fy > 0 and width, height >= 1.
  void validate() const;
  Mat3 K() const;
};

constexpr double kMinDepth = 1e-9;

/// Throws Error(BehindCamera) when x_cam.z <= 1e-9.
Vec2 project(const PinholeCamera& cam, const Vec3& x_cam);
Mat23 project_jacobian(const PinholeCamera& cam, const Vec3& x_cam);

/// Camera-frame point on the ray through pixel uv at the given z depth.
Vec3 unproject(const PinholeCamera& cam, const Vec2& uv, double depth);

/// World-to-camera transform of a camera at `eye` looking at `target`, with
/// image y pointing away from `up`.
RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Pixel-space box (x_min, y_min, x_max, y_max).
struct BBox2 {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool intersects_image(int width, int height) const {
    return x_max > 0 && y_max > 0 && x_min < width && y_min < height;
  }
};

struct CropCamera {
  PinholeCamera camera;
  RigidTransform T_CpW;  // world -> crop camera
  Mat3 R_CpC;            // original camera -> crop camera (pure rotation)
};

inline constexpr double kCropMargin = 1.1;

/// Virtual camera sharing the optical center of `cam` whose principal axis
/// passes through the box center and whose focal length maps the box onto a
/// crop_size x crop_size image with a 10% margin.
CropCamera make_crop_camera(const PinholeCamera& cam, const RigidTransform& T_CW,
                            const BBox2& bbox, int crop_size);

}  // namespace mvpose
