#include "mvpose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvpose/error.hpp"

namespace mvpose {

SymmetrySet::SymmetrySet(const std::vector<RigidTransform>& transforms) : transforms_(transforms) {
  const bool has_identity = std::any_of(transforms_.begin(), transforms_.end(), [](const RigidTransform& t) {
    return t.rotation().isIdentity(1e-12) && t.translation().isZero(1e-12);
  });
  if (!has_identity) transforms_.insert(transforms_.begin(), RigidTransform::identity());
}

double mssd(const RigidTransform& T_est, const RigidTransform& T_gt, const TriangleMesh& mesh,
            const SymmetrySet& sym) {
  double best = std::numeric_limits<double>::infinity();
  for (const RigidTransform& s : sym.transforms()) {
    const RigidTransform gt_s = compose(T_gt, s);
    double worst = 0.0;
    for (const Vec3& v : mesh.vertices) worst = std::max(worst, (T_est * v - gt_s * v).norm());
    best = std::min(best, worst);
  }
  return best;
}

double mspd(const RigidTransform& T_est, const RigidTransform& T_gt, const TriangleMesh& mesh,
            const SymmetrySet& sym, const PinholeCamera& cam, const RigidTransform& T_CW) {
  const RigidTransform est_c = compose(T_CW, T_est);
  for (const Vec3& v : mesh.vertices) {
    if ((est_c * v).z() <= kMinDepth) return kBehindCameraError;
  }
  double best = std::numeric_limits<double>::infinity();
  for (const RigidTransform& s : sym.transforms()) {
    const RigidTransform gt_c = compose(T_CW, compose(T_gt, s));
    double worst = 0.0;
    for (const Vec3& v : mesh.vertices) {
      const Vec3 a = est_c * v;
      const Vec3 b = gt_c * v;
      if (b.z() <= kMinDepth) return kBehindCameraError;
      worst = std::max(worst, (project(cam, a) - project(cam, b)).norm());
    }
    best = std::min(best, worst);
  }
  return best;
}

double EvalContext::diameter(const std::string& object_id) const {
  const auto it = diameters.find(object_id);
  if (it != diameters.end() && it->second > 0) return it->second;
  return mesh_diameter(mesh(object_id));
}

const SymmetrySet& EvalContext::symmetry(const std::string& object_id) const {
  static const SymmetrySet kIdentityOnly;
  const auto it = symmetries.find(object_id);
  return it == symmetries.end() ? kIdentityOnly : it->second;
}

const TriangleMesh& EvalContext::mesh(const std::string& object_id) const {
  const auto it = meshes.find(object_id);
  if (it == meshes.end() || it->second == nullptr) {
    throw Error(ErrorKind::UnknownObject, "no mesh for object '" + object_id + "'");
  }
  return *it->second;
}

const std::vector<EvalCamera>& EvalContext::cameras_for(const std::string& object_id) const {
  const auto it = object_cameras.find(object_id);
  return it == object_cameras.end() ? cameras : it->second;
}

double EvalContext::mspd_unit() const {
  if (mspd_r > 0) return mspd_r;
  if (!cameras.empty()) return cameras.front().camera.width / 640.0;
  if (!object_cameras.empty() && !object_cameras.begin()->second.empty()) {
    return object_cameras.begin()->second.front().camera.width / 640.0;
  }
  return 1.0;
}

PoseError pose_error(const EvalEstimate& est, const EvalGroundTruth& gt, const EvalContext& ctx) {
  const TriangleMesh& mesh = ctx.mesh(gt.object_id);
  const SymmetrySet& sym = ctx.symmetry(gt.object_id);
  PoseError e;
  e.mssd = mssd(est.T_WO, gt.T_WO, mesh, sym);
  for (const EvalCamera& cam : ctx.cameras_for(gt.object_id)) {
    e.mspd = std::max(e.mspd, mspd(est.T_WO, gt.T_WO, mesh, sym, cam.camera, cam.T_CW));
  }
  return e;
}

std::vector<double> mssd_thresholds(double diameter) {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(i / 20.0 * diameter);
  return out;
}

std::vector<double> mspd_thresholds(double r) {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(5.0 * i * r);
  return out;
}

double ThresholdTable::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

constexpr int kSteps = 10;

struct ErrorTables {
  std::vector<size_t> order;               // estimates by descending score
  std::vector<std::vector<double>> mssd;   // [estimate][gt], normalized by diameter
  std::vector<std::vector<double>> mspd;   // [estimate][gt], normalized by r
};

ErrorTables error_tables(const std::vector<EvalEstimate>& results,
                         const std::vector<EvalGroundTruth>& gt, const EvalContext& ctx) {
  ErrorTables t;
  const double inf = std::numeric_limits<double>::infinity();
  const double r = ctx.mspd_unit();
  t.mssd.assign(results.size(), std::vector<double>(gt.size(), inf));
  t.mspd.assign(results.size(), std::vector<double>(gt.size(), inf));
  for (size_t e = 0; e < results.size(); ++e) {
    for (size_t g = 0; g < gt.size(); ++g) {
      if (results[e].object_id != gt[g].object_id) continue;
      const PoseError pe = pose_error(results[e], gt[g], ctx);
      t.mssd[e][g] = pe.mssd / ctx.diameter(gt[g].object_id);
      t.mspd[e][g] = pe.mspd / r;
    }
  }
  t.order.resize(results.size());
  std::iota(t.order.begin(), t.order.end(), size_t{0});
  std::stable_sort(t.order.begin(), t.order.end(),
                   [&](size_t a, size_t b) { return results[a].score > results[b].score; });
  return t;
}

// True-positive flags in score order for one normalized threshold.
std::vector<bool> match(const ErrorTables& t, const std::vector<std::vector<double>>& err, double threshold,
                        size_t n_gt) {
  std::vector<bool> gt_taken(n_gt, false);
  std::vector<bool> tp;
  tp.reserve(t.order.size());
  for (size_t e : t.order) {
    size_t best = n_gt;
    double best_err = threshold;
    for (size_t g = 0; g < n_gt; ++g) {
      if (!gt_taken[g] && err[e][g] < best_err) {
        best = g;
        best_err = err[e][g];
      }
    }
    if (best < n_gt) gt_taken[best] = true;
    tp.push_back(best < n_gt);
  }
  return tp;
}

double recall_of(const std::vector<bool>& tp, size_t n_gt) {
  if (n_gt == 0) return 0.0;
  return static_cast<double>(std::count(tp.begin(), tp.end(), true)) / static_cast<double>(n_gt);
}

double ap_of(const std::vector<bool>& tp, size_t n_gt) {
  if (n_gt == 0 || tp.empty()) return 0.0;
  std::vector<double> precision(tp.size()), recall(tp.size());
  size_t hits = 0;
  for (size_t k = 0; k < tp.size(); ++k) {
    hits += tp[k] ? 1 : 0;
    precision[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(hits) / static_cast<double>(n_gt);
  }
  // Precision envelope from the right, then area under the step curve.
  for (size_t k = tp.size() - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (size_t k = 0; k < tp.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

template <typename Reduce>
void fill_tables(const ErrorTables& t, size_t n_gt, double r, ThresholdTable& mssd_tab, ThresholdTable& mspd_tab,
                 Reduce reduce) {
  for (int i = 1; i <= kSteps; ++i) {
    const double frac = i / 20.0;
    mssd_tab.thresholds.push_back(frac);
    mssd_tab.values.push_back(reduce(match(t, t.mssd, frac, n_gt), n_gt));
    const double px = 5.0 * i;
    mspd_tab.thresholds.push_back(px * r);
    mspd_tab.values.push_back(reduce(match(t, t.mspd, px, n_gt), n_gt));
  }
}

}  // namespace

RecallReport average_recall(const std::vector<EvalEstimate>& results,
                            const std::vector<EvalGroundTruth>& ground_truth, const EvalContext& ctx) {
  const ErrorTables t = error_tables(results, ground_truth, ctx);
  RecallReport rep;
  fill_tables(t, ground_truth.size(), ctx.mspd_unit(), rep.mssd, rep.mspd, recall_of);
  rep.ar_mssd = rep.mssd.mean();
  rep.ar_mspd = rep.mspd.mean();
  rep.ar = 0.5 * (rep.ar_mssd + rep.ar_mspd);
  return rep;
}

PrecisionReport average_precision(const std::vector<EvalEstimate>& results,
                                  const std::vector<EvalGroundTruth>& ground_truth, const EvalContext& ctx) {
  const ErrorTables t = error_tables(results, ground_truth, ctx);
  PrecisionReport rep;
  fill_tables(t, ground_truth.size(), ctx.mspd_unit(), rep.mssd, rep.mspd, ap_of);
  rep.ap_mssd = rep.mssd.mean();
  rep.ap_mspd = rep.mspd.mean();
  rep.ap = 0.5 * (rep.ap_mssd + rep.ap_mspd);
  return rep;
}

}  // namespace mvpose
