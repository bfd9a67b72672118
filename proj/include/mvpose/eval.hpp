#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mvpose/geometry.hpp"
#include "mvpose/mesh_render.hpp"

namespace mvpose {

/// Object-frame symmetries. The identity is always a member.
class SymmetrySet {
 public:
  SymmetrySet() : transforms_{RigidTransform::identity()} {}
  explicit SymmetrySet(const std::vector<RigidTransform>& transforms);

  const std::vector<RigidTransform>& transforms() const { return transforms_; }

 private:
  std::vector<RigidTransform> transforms_;
};

struct PoseError {
  double mssd = 0.0;
  double mspd = 0.0;
};

constexpr double kBehindCameraError = std::numeric_limits<double>::infinity();

double mssd(const RigidTransform& T_est, const RigidTransform& T_gt, const TriangleMesh& mesh,
            const SymmetrySet& sym);

/// Returns +infinity when any vertex of either pose is behind the camera.
double mspd(const RigidTransform& T_est, const RigidTransform& T_gt, const TriangleMesh& mesh,
            const SymmetrySet& sym, const PinholeCamera& cam, const RigidTransform& T_CW);

struct EvalEstimate {
  std::string object_id;
  RigidTransform T_WO;
  double score = 1.0;
};

struct EvalGroundTruth {
  std::string object_id;
  RigidTransform T_WO;
};

struct EvalCamera {
  PinholeCamera camera;
  RigidTransform T_CW;
};

/// Meshes, symmetries, and cameras needed to score estimates. MSPD is the
/// worst case over all cameras.
struct EvalContext {
  std::map<std::string, const TriangleMesh*> meshes;
  std::map<std::string, SymmetrySet> symmetries;
  std::map<std::string, double> diameters;  // optional; computed from the mesh when absent
  std::vector<EvalCamera> cameras;
  /// Per-object camera lists, used instead of `cameras` when present (pooled
  /// evaluation over several scenes).
  std::map<std::string, std::vector<EvalCamera>> object_cameras;
  /// MSPD threshold unit; <= 0 means image_width / 640 of the first camera.
  double mspd_r = 0.0;

  double diameter(const std::string& object_id) const;
  const SymmetrySet& symmetry(const std::string& object_id) const;
  const TriangleMesh& mesh(const std::string& object_id) const;
  double mspd_unit() const;
  const std::vector<EvalCamera>& cameras_for(const std::string& object_id) const;
};

PoseError pose_error(const EvalEstimate& est, const EvalGroundTruth& gt, const EvalContext& ctx);

/// 5%..50% of the diameter (MSSD) and 5r..50r pixels (MSPD), ten steps each.
std::vector<double> mssd_thresholds(double diameter);
std::vector<double> mspd_thresholds(double r);

struct ThresholdTable {
  std::vector<double> thresholds;  // fractions of diameter (MSSD) or pixels (MSPD)
  std::vector<double> values;      // recall or AP at each threshold
  double mean() const;
};

struct RecallReport {
  ThresholdTable mssd;
  ThresholdTable mspd;
  double ar_mssd = 0.0;
  double ar_mspd = 0.0;
  double ar = 0.0;
};

struct PrecisionReport {
  ThresholdTable mssd;
  ThresholdTable mspd;
  double ap_mssd = 0.0;
  double ap_mspd = 0.0;
  double ap = 0.0;
};

/// Score-ordered greedy matching per threshold: each estimate claims the
/// unmatched ground truth of its object with the smallest error below the
/// threshold. A pose is correct when error < threshold.
RecallReport average_recall(const std::vector<EvalEstimate>& results,
                            const std::vector<EvalGroundTruth>& ground_truth, const EvalContext& ctx);

/// All-point interpolated precision-recall area, averaged over thresholds
/// and then over the two metrics.
PrecisionReport average_precision(const std::vector<EvalEstimate>& results,
                                  const std::vector<EvalGroundTruth>& ground_truth, const EvalContext& ctx);

}  // namespace mvpose
