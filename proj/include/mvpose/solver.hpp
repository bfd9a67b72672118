#pragma once

#include <map>
#include <string>
#include <vector>

#include "mvpose/features.hpp"
#include "mvpose/geometry.hpp"
#include "mvpose/robust.hpp"

namespace mvpose {

/// One camera's term of the multi-view objective.
struct ViewContext {
  std::string view_id;
  PinholeCamera crop_cam;
  RigidTransform T_CpW;  // world -> crop camera
  FeatureMap query;
  RegisteredFeatureSet registered;
};

enum class OobPolicy { Drop, Clamp };

struct RefineConfig {
  int max_iters = 30;
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double step_tol = 1e-6;
  double loss_tol = 1e-8;
  OobPolicy oob_policy = OobPolicy::Drop;
  BarronParams barron{-5.0, 0.5};
  /// Negative control for gradient checking: flips the sign of the
  /// projection-Jacobian depth column. Never set outside diagnostics.
  bool debug_corrupt_jacobian = false;

  void validate() const;
};

struct ViewLoss {
  double sum_loss = 0.0;
  /// Mean loss per feature, excluded features counted at the loss supremum,
  /// divided by that supremum. Unnormalized when alpha >= 0.
  double mean_normalized_loss = 0.0;
  int n_inliers = 0;
  int n_total = 0;
  bool normalized = true;
};

/// Evaluates one view at the world pose T_WO.
ViewLoss per_view_loss(const ViewContext& view, const RigidTransform& T_WO, const RefineConfig& cfg);

/// Robustly weighted residual and Jacobian stacks. Rows come in blocks of
/// D, one block per inlier feature, scaled by sqrt(w(|r_i|)). Jacobian columns
/// are the left-multiplied world twist in (v, omega) order.
struct WeightedSystem {
  VecX residuals;
  MatX jacobian;  // n x 6
  double cost = 0.0;
  int n_inliers = 0;
  int n_total = 0;
};

WeightedSystem residuals_and_jacobian(const ViewContext& view, const RigidTransform& T_WO,
                                      const RefineConfig& cfg);

/// Sum of per-view sum_loss, the quantity LM minimizes.
double total_objective(const std::vector<ViewContext>& views, const RigidTransform& T_WO,
                       const RefineConfig& cfg);

/// Analytic gradient of total_objective w.r.t. the left world twist.
Vec6 objective_gradient(const std::vector<ViewContext>& views, const RigidTransform& T_WO,
                        const RefineConfig& cfg);

struct RefineResult {
  RigidTransform pose;
  bool converged = false;
  bool singular = false;  // stopped on singular normal equations
  int iterations = 0;
  std::vector<double> loss_trace;  // objective after every accepted step, initial value first
  std::map<std::string, double> per_view_loss;  // normalized mean loss at the final pose
};

/// Levenberg-Marquardt over the shared world pose. Views are reduced in
/// view_id order so that the result does not depend on the input order.
RefineResult lm_refine(const std::vector<ViewContext>& views, const RigidTransform& T_init,
                       const RefineConfig& cfg);

enum class ScoreMode { Average, Min, Max };

/// Confidence in [0, 1]: one minus the (average / worst / best) normalized
/// per-view loss. Requires a saturating cost (alpha < 0).
double score_pose(const std::vector<ViewContext>& views, const RigidTransform& T_WO, ScoreMode mode,
                  const RefineConfig& cfg);

const char* to_string(ScoreMode mode);
const char* to_string(OobPolicy policy);

}  // namespace mvpose
