#include "mvpose/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mvpose/error.hpp"

namespace mvpose {

void RefineConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::InvalidArgument, "max_iters must be >= 1");
  if (!(lambda_init > 0)) throw Error(ErrorKind::InvalidArgument, "lambda_init must be > 0");
  if (!(lambda_up > 1.0) || !(lambda_down > 0.0) || !(lambda_down < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "need lambda_up > 1 > lambda_down > 0");
  }
  barron.validate();
}

const char* to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::Average: return "average";
    case ScoreMode::Min: return "min";
    case ScoreMode::Max: return "max";
  }
  return "?";
}

const char* to_string(OobPolicy policy) { return policy == OobPolicy::Drop ? "drop" : "clamp"; }

namespace {

// Loss charged for a feature that cannot be evaluated.
double exclusion_penalty(const BarronParams& p) { return p.saturating() ? p.sup() : 0.0; }

struct ViewEvaluation {
  double cost = 0.0;
  double inlier_cost = 0.0;
  int n_inliers = 0;
  int n_total = 0;
};

// Shared evaluation of one view. When `system` is non-null the weighted
// residual and Jacobian blocks are appended to it.
ViewEvaluation evaluate_view(const ViewContext& view, const RigidTransform& T_WO, const RefineConfig& cfg,
                             WeightedSystem* system) {
  const FeatureMap& q = view.query;
  const auto& entries = view.registered.entries;
  const int dim = q.dim();
  if (!entries.empty() && view.registered.dim() != dim) {
    throw Error(ErrorKind::DimMismatch, "view '" + view.view_id + "': query and registered dims differ");
  }
  const RigidTransform T_CpO = compose(view.T_CpW, T_WO);
  const Mat3& R_CpW = view.T_CpW.rotation();

  ViewEvaluation ev;
  ev.n_total = static_cast<int>(entries.size());
  std::vector<int> inliers;
  std::vector<VecX> residuals;
  std::vector<MatX> jacobians;

  VecX sampled;
  MatX2 grad;
  for (const RegisteredFeature& f : entries) {
    const Vec3 x_cam = T_CpO * f.point;
    if (x_cam.z() <= kMinDepth) continue;
    Vec2 uv = project(view.crop_cam, x_cam);
    bool clamped_u = false;
    bool clamped_v = false;
    if (!in_gradient_domain(q, uv)) {
      if (cfg.oob_policy == OobPolicy::Drop || q.width() < 2 || q.height() < 2) continue;
      const double cell = q.cell_size();
      const double lo = 0.5 * cell;
      const double hi_u = (q.width() - 0.5) * cell;
      const double hi_v = (q.height() - 0.5) * cell;
      const Vec2 c{std::clamp(uv.x(), lo, hi_u), std::clamp(uv.y(), lo, hi_v)};
      clamped_u = c.x() != uv.x();
      clamped_v = c.y() != uv.y();
      uv = c;
    }
    sample_with_gradient(q, uv, sampled, grad);
    VecX r = f.descriptor - sampled;
    const double rn = r.norm();
    const double loss = rho(rn, cfg.barron);
    ev.inlier_cost += loss;
    ++ev.n_inliers;
    if (system == nullptr) continue;

    if (clamped_u) grad.col(0).setZero();
    if (clamped_v) grad.col(1).setZero();
    Mat23 proj = project_jacobian(view.crop_cam, x_cam);
    if (cfg.debug_corrupt_jacobian) proj.col(2) *= -1.0;
    const Vec3 x_w = T_WO * f.point;
    Mat36 dxw;
    dxw.leftCols<3>() = Mat3::Identity();
    dxw.rightCols<3>() = -hat(x_w);
    const Eigen::Matrix<double, 2, 6> duv = proj * (R_CpW * dxw);
    const double sw = std::sqrt(rho_weight(rn, cfg.barron));
    residuals.push_back(sw * r);
    jacobians.push_back(-sw * (grad * duv));
  }
  ev.cost = ev.inlier_cost + (ev.n_total - ev.n_inliers) * exclusion_penalty(cfg.barron);

  if (system != nullptr) {
    const Eigen::Index rows = static_cast<Eigen::Index>(residuals.size()) * dim;
    system->residuals.resize(rows);
    system->jacobian.resize(rows, 6);
    for (size_t i = 0; i < residuals.size(); ++i) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(i) * dim;
      system->residuals.segment(r0, dim) = residuals[i];
      system->jacobian.middleRows(r0, dim) = jacobians[i];
    }
    system->cost = ev.cost;
    system->n_inliers = ev.n_inliers;
    system->n_total = ev.n_total;
  }
  return ev;
}

std::vector<const ViewContext*> canonical_order(const std::vector<ViewContext>& views) {
  std::vector<const ViewContext*> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(&v);
  std::stable_sort(out.begin(), out.end(),
                   [](const ViewContext* a, const ViewContext* b) { return a->view_id < b->view_id; });
  return out;
}

struct Linearization {
  double cost = 0.0;
  Mat6 H = Mat6::Zero();
  Vec6 g = Vec6::Zero();
};

Linearization linearize(const std::vector<const ViewContext*>& views, const RigidTransform& T,
                        const RefineConfig& cfg) {
  Linearization lin;
  for (const ViewContext* v : views) {
    WeightedSystem sys;
    evaluate_view(*v, T, cfg, &sys);
    lin.cost += sys.cost;
    lin.H += sys.jacobian.transpose() * sys.jacobian;
    lin.g += sys.jacobian.transpose() * sys.residuals;
  }
  return lin;
}

double objective(const std::vector<const ViewContext*>& views, const RigidTransform& T,
                 const RefineConfig& cfg) {
  double cost = 0.0;
  for (const ViewContext* v : views) cost += evaluate_view(*v, T, cfg, nullptr).cost;
  return cost;
}

bool numerically_singular(const Mat6& a) {
  if (!a.allFinite()) return true;
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(a, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  return !(hi > 0) || !(lo > 1e-12 * hi);
}

}  // namespace

ViewLoss per_view_loss(const ViewContext& view, const RigidTransform& T_WO, const RefineConfig& cfg) {
  const ViewEvaluation ev = evaluate_view(view, T_WO, cfg, nullptr);
  ViewLoss out;
  out.sum_loss = ev.cost;
  out.n_inliers = ev.n_inliers;
  out.n_total = ev.n_total;
  out.normalized = cfg.barron.saturating();
  if (ev.n_total == 0) {
    out.mean_normalized_loss = out.normalized ? 1.0 : 0.0;
    return out;
  }
  if (ev.n_inliers == 0 && out.normalized) {
    out.mean_normalized_loss = 1.0;
    return out;
  }
  const double mean = ev.cost / ev.n_total;
  out.mean_normalized_loss = out.normalized ? mean / cfg.barron.sup() : mean;
  return out;
}

WeightedSystem residuals_and_jacobian(const ViewContext& view, const RigidTransform& T_WO,
                                      const RefineConfig& cfg) {
  WeightedSystem sys;
  evaluate_view(view, T_WO, cfg, &sys);
  return sys;
}

double total_objective(const std::vector<ViewContext>& views, const RigidTransform& T_WO,
                       const RefineConfig& cfg) {
  return objective(canonical_order(views), T_WO, cfg);
}

Vec6 objective_gradient(const std::vector<ViewContext>& views, const RigidTransform& T_WO,
                        const RefineConfig& cfg) {
  return linearize(canonical_order(views), T_WO, cfg).g;
}

RefineResult lm_refine(const std::vector<ViewContext>& views, const RigidTransform& T_init,
                       const RefineConfig& cfg) {
  cfg.validate();
  if (views.empty()) throw Error(ErrorKind::InvalidArgument, "lm_refine needs at least one view");
  const auto ordered = canonical_order(views);

  RefineResult res;
  RigidTransform T = T_init;
  Linearization lin = linearize(ordered, T, cfg);
  res.loss_trace.push_back(lin.cost);
  double lambda = cfg.lambda_init;

  while (res.iterations < cfg.max_iters) {
    ++res.iterations;
    Mat6 a = lin.H;
    a.diagonal() += lambda * lin.H.diagonal();
    if (numerically_singular(a)) {
      res.singular = true;
      break;
    }
    const Vec6 delta = a.ldlt().solve(-lin.g);
    if (!delta.allFinite()) {
      res.singular = true;
      break;
    }
    if (delta.norm() < cfg.step_tol) {
      res.converged = true;
      break;
    }
    const RigidTransform candidate = compose(exp_se3(Twist::from_stacked(delta)), T);
    const double cost = objective(ordered, candidate, cfg);
    if (cost < lin.cost) {
      const double rel = (lin.cost - cost) / std::max(lin.cost, 1e-300);
      T = candidate;
      lambda *= cfg.lambda_down;
      res.loss_trace.push_back(cost);
      if (rel < cfg.loss_tol) {
        res.converged = true;
        break;
      }
      lin = linearize(ordered, T, cfg);
    } else {
      lambda *= cfg.lambda_up;
    }
  }

  res.pose = T;
  for (const ViewContext* v : ordered) res.per_view_loss[v->view_id] = per_view_loss(*v, T, cfg).mean_normalized_loss;
  return res;
}

double score_pose(const std::vector<ViewContext>& views, const RigidTransform& T_WO, ScoreMode mode,
                  const RefineConfig& cfg) {
  if (!cfg.barron.saturating()) {
    throw Error(ErrorKind::InvalidArgument, "scoring needs a saturating cost (alpha < 0)");
  }
  if (views.empty()) return 0.0;
  std::vector<double> losses;
  for (const ViewContext* v : canonical_order(views)) {
    losses.push_back(per_view_loss(*v, T_WO, cfg).mean_normalized_loss);
  }
  double loss = 0.0;
  switch (mode) {
    case ScoreMode::Average:
      loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
      break;
    case ScoreMode::Min:  // worst view
      loss = *std::max_element(losses.begin(), losses.end());
      break;
    case ScoreMode::Max:  // best view
      loss = *std::min_element(losses.begin(), losses.end());
      break;
  }
  return std::clamp(1.0 - loss, 0.0, 1.0);
}

}  // namespace mvpose
