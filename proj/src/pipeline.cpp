#include "mvpose/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>
#include <tuple>

#include "mvpose/error.hpp"

namespace mvpose {

const char* to_string(NmsScope scope) {
  return scope == NmsScope::InterClass ? "inter_class" : "intra_class";
}

void SceneConfig::validate() const {
  if (cameras.empty()) throw Error(ErrorKind::InvalidArgument, "scene needs at least one camera");
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw Error(ErrorKind::InvalidArgument, "nms_iou must be in (0, 1)");
  if (crop_size < 1 || cell_size < 1 || cell_size > crop_size) {
    throw Error(ErrorKind::InvalidArgument, "crop_size and cell_size must be positive, cell <= crop");
  }
  std::set<std::string> seen;
  for (const auto& c : cameras) {
    c.camera.validate();
    if (!seen.insert(c.view_id).second) throw Error(ErrorKind::InvalidArgument, "duplicate view_id " + c.view_id);
  }
  seen.clear();
  for (const auto& o : objects) {
    if (!seen.insert(o.object_id).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate object_id " + o.object_id);
    }
  }
}

const SceneCamera& SceneConfig::camera(const std::string& view_id) const {
  for (const auto& c : cameras) {
    if (c.view_id == view_id) return c;
  }
  throw Error(ErrorKind::UnknownView, "unknown view '" + view_id + "'");
}

const SceneObject& SceneConfig::object(const std::string& object_id) const {
  for (const auto& o : objects) {
    if (o.object_id == object_id) return o;
  }
  throw Error(ErrorKind::UnknownObject, "unknown object '" + object_id + "'");
}

WorldCandidate to_world(const PoseCandidate& c, const RigidTransform& T_CW, const TriangleMesh& mesh) {
  WorldCandidate w;
  w.object_id = c.object_id;
  w.T_WO = compose(T_CW.inverse(), c.T_CO);
  w.score = c.score;
  w.source_view = c.view_id;
  w.aabb = aabb_world(mesh, w.T_WO);
  return w;
}

WorldCandidate to_world(const SceneConfig& scene, const PoseCandidate& c) {
  return to_world(c, scene.camera(c.view_id).T_CW, scene.object(c.object_id).mesh);
}

double iou3d(const Aabb3& a, const Aabb3& b) {
  const Vec3 lo = a.min.cwiseMax(b.min);
  const Vec3 hi = a.max.cwiseMin(b.max);
  const double inter = (hi - lo).cwiseMax(0.0).prod();
  if (!(inter > 0)) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<WorldCandidate> nms3d(std::vector<WorldCandidate> candidates, double iou_thr, NmsScope scope) {
  std::sort(candidates.begin(), candidates.end(), [](const WorldCandidate& a, const WorldCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.object_id, a.source_view) < std::tie(b.object_id, b.source_view) ||
           (std::tie(a.object_id, a.source_view) == std::tie(b.object_id, b.source_view) &&
            a.T_WO.to_row_major() < b.T_WO.to_row_major());
  });
  std::vector<WorldCandidate> kept;
  for (auto& c : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const WorldCandidate& k) {
      return (scope == NmsScope::InterClass || k.object_id == c.object_id) && iou3d(k.aabb, c.aabb) > iou_thr;
    });
    if (!suppressed) kept.push_back(std::move(c));
  }
  return kept;
}

FeatureMap TensorQueryProvider::query(const SceneCamera& view, const CropCamera& crop, int cell_size) const {
  const auto it = maps_.find(view.view_id);
  if (it == maps_.end()) throw Error(ErrorKind::UnknownView, "no feature tensor for view '" + view.view_id + "'");
  return crop_feature_map(it->second, view.camera, crop, cell_size);
}

namespace {

std::optional<BBox2> projected_box(const TriangleMesh& mesh, const RigidTransform& T_WO, const SceneCamera& view) {
  BBox2 out{1e300, 1e300, -1e300, -1e300};
  const RigidTransform T_CO = compose(view.T_CW, T_WO);
  for (const Vec3& v : mesh.vertices) {
    const Vec3 x_cam = T_CO * v;
    if (x_cam.z() <= kMinDepth) return std::nullopt;
    const Vec2 uv = project(view.camera, x_cam);
    out.x_min = std::min(out.x_min, uv.x());
    out.y_min = std::min(out.y_min, uv.y());
    out.x_max = std::max(out.x_max, uv.x());
    out.y_max = std::max(out.y_max, uv.y());
  }
  if (!out.intersects_image(view.camera.width, view.camera.height)) return std::nullopt;
  return out;
}

struct RefineOutcome {
  std::optional<PipelineResult> result;
  std::optional<CandidateFailure> failure;
};

}  // namespace

std::vector<ViewContext> build_views(const SceneConfig& scene, const WorldCandidate& candidate,
                                     const QueryProvider& queries, const DescriptorSource& source,
                                     const PcaBasis* pca) {
  const TriangleMesh& mesh = scene.object(candidate.object_id).mesh;
  std::vector<ViewContext> views;
  for (const SceneCamera& cam : scene.cameras) {
    const auto box = projected_box(mesh, candidate.T_WO, cam);
    if (!box) continue;
    const CropCamera crop = make_crop_camera(cam.camera, cam.T_CW, *box, scene.crop_size);
    ViewContext view;
    view.view_id = cam.view_id;
    view.crop_cam = crop.camera;
    view.T_CpW = crop.T_CpW;
    try {
      view.registered = build_registered_features(mesh, compose(crop.T_CpW, candidate.T_WO), crop.camera,
                                                  source, pca, scene.cell_size, cam.view_id);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NoVisibleSurface || e.kind() == ErrorKind::FullyBehindCamera) continue;
      throw;
    }
    view.query = queries.query(cam, crop, scene.cell_size);
    if (pca != nullptr) view.query = project_feature_map(view.query, *pca);
    views.push_back(std::move(view));
  }
  return views;
}

double resolve_score(const std::vector<ViewContext>& views, const RigidTransform& T_WO,
                     const PipelineOptions& options) {
  RefineConfig cfg = options.refine;
  if (options.score_cost) {
    cfg.barron = *options.score_cost;
  } else if (!cfg.barron.saturating()) {
    cfg.barron = BarronParams{-5.0, 0.5};
  }
  return score_pose(views, T_WO, options.score_mode, cfg);
}

PipelineOutput run_pipeline(const SceneConfig& scene, const std::vector<PoseCandidate>& candidates,
                            const QueryProvider& queries, const DescriptorSources& sources,
                            const PipelineOptions& options) {
  scene.validate();
  options.refine.validate();
  PipelineOutput out;

  std::vector<WorldCandidate> world;
  world.reserve(candidates.size());
  for (const auto& c : candidates) world.push_back(to_world(scene, c));
  const std::vector<WorldCandidate> survivors = nms3d(std::move(world), scene.nms_iou, scene.nms_scope);
  out.stage1_survivors = static_cast<int>(survivors.size());

  std::vector<RefineOutcome> outcomes(survivors.size());
  auto refine_one = [&](size_t i) {
    const WorldCandidate& cand = survivors[i];
    RefineOutcome& slot = outcomes[i];
    try {
      const auto src = sources.find(cand.object_id);
      if (src == sources.end() || src->second == nullptr) {
        throw Error(ErrorKind::UnknownObject, "no descriptor source for object '" + cand.object_id + "'");
      }
      const auto pca_it = options.pca.find(cand.object_id);
      const PcaBasis* pca = pca_it == options.pca.end() ? nullptr : &pca_it->second;
      const std::vector<ViewContext> views = build_views(scene, cand, queries, *src->second, pca);
      if (views.empty()) throw Error(ErrorKind::NoVisibleSurface, "candidate not visible in any view");
      const RefineResult refined = lm_refine(views, cand.T_WO, options.refine);
      PipelineResult r;
      r.object_id = cand.object_id;
      r.source_view = cand.source_view;
      r.T_WO = refined.pose;
      r.T_WO_initial = cand.T_WO;
      r.converged = refined.converged;
      r.iterations = refined.iterations;
      r.per_view_loss = refined.per_view_loss;
      r.score = resolve_score(views, refined.pose, options);
      slot.result = std::move(r);
    } catch (const std::exception& e) {
      slot.failure = CandidateFailure{cand.object_id, cand.source_view, e.what()};
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t n_threads =
      std::min<size_t>(survivors.size(), options.threads > 0 ? static_cast<size_t>(options.threads) : hw);
  if (n_threads <= 1) {
    for (size_t i = 0; i < survivors.size(); ++i) refine_one(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < survivors.size(); i = next++) refine_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<WorldCandidate> refined;
  std::map<std::tuple<std::string, std::string, std::array<double, 12>>, size_t> index;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].failure) {
      out.failures.push_back(*outcomes[i].failure);
      continue;
    }
    const PipelineResult& r = *outcomes[i].result;
    WorldCandidate w{r.object_id, r.T_WO, r.score, r.source_view, aabb_world(scene.object(r.object_id).mesh, r.T_WO)};
    index.emplace(std::make_tuple(w.object_id, w.source_view, w.T_WO.to_row_major()), i);
    refined.push_back(std::move(w));
  }
  for (const WorldCandidate& w : nms3d(std::move(refined), scene.nms_iou, scene.nms_scope)) {
    const size_t i = index.at(std::make_tuple(w.object_id, w.source_view, w.T_WO.to_row_major()));
    out.results.push_back(*outcomes[i].result);
  }
  return out;
}

}  // namespace mvpose
