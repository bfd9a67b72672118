#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "mvpose/eval.hpp"
#include "mvpose/pipeline.hpp"

namespace oracle {

using namespace mvpose;

/// Ranking used by the greedy NMS: score, then object, view, pose.
inline bool ranks_before(const WorldCandidate& a, const WorldCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.object_id != b.object_id) return a.object_id < b.object_id;
  if (a.source_view != b.source_view) return a.source_view < b.source_view;
  return a.T_WO.to_row_major() < b.T_WO.to_row_major();
}

inline double box_iou(const Aabb3& a, const Aabb3& b) {
  const Vec3 lo = a.min.cwiseMax(b.min), hi = a.max.cwiseMin(b.max);
  const double inter = (hi - lo).cwiseMax(0.0).prod();
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Exhaustive NMS: candidate i survives iff no higher-ranked survivor
/// overlaps it beyond the threshold (within scope). Checks every pair.
inline std::vector<WorldCandidate> nms_reference(std::vector<WorldCandidate> c, double thr, NmsScope scope) {
  std::sort(c.begin(), c.end(), ranks_before);
  std::vector<bool> keep(c.size(), true);
  for (size_t i = 0; i < c.size(); ++i) {
    for (size_t j = 0; j < i; ++j) {
      if (!keep[j]) continue;
      const bool same_scope = scope == NmsScope::InterClass || c[i].object_id == c[j].object_id;
      if (same_scope && box_iou(c[i].aabb, c[j].aabb) > thr) keep[i] = false;
    }
  }
  std::vector<WorldCandidate> out;
  for (size_t i = 0; i < c.size(); ++i)
    if (keep[i]) out.push_back(c[i]);
  return out;
}

inline bool same_candidates(const std::vector<WorldCandidate>& a, const std::vector<WorldCandidate>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].object_id != b[i].object_id || a[i].source_view != b[i].source_view || a[i].score != b[i].score ||
        a[i].T_WO.to_row_major() != b[i].T_WO.to_row_major())
      return false;
  }
  return true;
}

inline std::vector<WorldCandidate> random_candidates(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> pos(0.0, 10.0), size(0.5, 3.0);
  std::uniform_int_distribution<int> score10(0, 10), obj(0, 2), view(0, 3);
  std::normal_distribution<double> nrm;
  std::vector<WorldCandidate> out;
  for (int i = 0; i < n; ++i) {
    WorldCandidate w;
    w.object_id = std::string("obj_") + char('a' + obj(rng));
    w.source_view = "cam_" + std::to_string(view(rng));
    w.score = score10(rng) / 10.0;  // coarse scores force tie-breaks
    const Vec3 c(pos(rng), pos(rng), pos(rng));
    const Vec3 h(size(rng), size(rng), size(rng));
    w.aabb = {c - 0.5 * h, c + 0.5 * h};
    Eigen::Quaterniond q(nrm(rng), nrm(rng), nrm(rng), nrm(rng));
    w.T_WO = RigidTransform(q.normalized().toRotationMatrix(), c);
    out.push_back(w);
  }
  return out;
}

/// Monte-Carlo IoU: uniform samples in the bounding box of the union.
inline double monte_carlo_iou(const Aabb3& a, const Aabb3& b, int n, uint64_t seed) {
  const Vec3 lo = a.min.cwiseMin(b.min), hi = a.max.cwiseMax(b.max);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long in_both = 0, in_any = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3 p = lo + (hi - lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
    const bool ia = a.contains(p), ib = b.contains(p);
    in_both += ia && ib;
    in_any += ia || ib;
  }
  return in_any ? static_cast<double>(in_both) / static_cast<double>(in_any) : 0.0;
}

/// Overlapping random box pair (about half of the pairs share volume).
inline std::pair<Aabb3, Aabb3> random_box_pair(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 2.0), size(0.5, 2.0);
  auto box = [&] {
    const Vec3 c(pos(rng), pos(rng), pos(rng)), h(size(rng), size(rng), size(rng));
    return Aabb3{c - 0.5 * h, c + 0.5 * h};
  };
  Aabb3 a = box();
  return {a, box()};
}

inline double mssd_brute(const RigidTransform& est, const RigidTransform& gt, const TriangleMesh& mesh,
                         const std::vector<RigidTransform>& syms) {
  double best = std::numeric_limits<double>::infinity();
  for (const RigidTransform& s : syms) {
    double worst = 0;
    for (const Vec3& v : mesh.vertices) worst = std::max(worst, (est * v - compose(gt, s) * v).norm());
    best = std::min(best, worst);
  }
  return best;
}

inline double mspd_brute(const RigidTransform& est, const RigidTransform& gt, const TriangleMesh& mesh,
                         const std::vector<RigidTransform>& syms, const PinholeCamera& cam,
                         const RigidTransform& T_CW) {
  double best = std::numeric_limits<double>::infinity();
  for (const RigidTransform& s : syms) {
    double worst = 0;
    for (const Vec3& v : mesh.vertices) {
      const Vec3 a = compose(T_CW, est) * v, b = compose(T_CW, compose(gt, s)) * v;
      if (a.z() <= kMinDepth || b.z() <= kMinDepth) return kBehindCameraError;
      worst = std::max(worst, (project(cam, a) - project(cam, b)).norm());
    }
    best = std::min(best, worst);
  }
  return best;
}

}  // namespace oracle
