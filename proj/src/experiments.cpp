#include "mvpose/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "json.hpp"
#include "mvpose/error.hpp"
#include "mvpose/seed.hpp"

namespace mvpose {

namespace {

constexpr int kSmoothAttempts = 200;

WorldCandidate world_candidate(const SceneObject& obj, const RigidTransform& T_WO) {
  return {obj.object_id, T_WO, 1.0, "", aabb_world(obj.mesh, T_WO)};
}

// Piecewise-smoothness signature of the objective at T: inlier status and
// bilinear cell of every feature in every view.
std::vector<int> smoothness_signature(const std::vector<ViewContext>& views, const RigidTransform& T) {
  std::vector<int> sig;
  for (const ViewContext& v : views) {
    const RigidTransform T_CpO = compose(v.T_CpW, T);
    const double cell = v.query.cell_size();
    for (const RegisteredFeature& f : v.registered.entries) {
      const Vec3 x = T_CpO * f.point;
      if (x.z() <= kMinDepth) {
        sig.insert(sig.end(), {-2, -2});
        continue;
      }
      const Vec2 uv = project(v.crop_cam, x);
      if (!in_gradient_domain(v.query, uv)) {
        sig.insert(sig.end(), {-1, -1});
        continue;
      }
      sig.push_back(static_cast<int>(std::floor(uv.x() / cell - 0.5)));
      sig.push_back(static_cast<int>(std::floor(uv.y() / cell - 0.5)));
    }
  }
  return sig;
}

RigidTransform nudge(const RigidTransform& T, int k, double h) {
  Vec6 d = Vec6::Zero();
  d[k] = h;
  return compose(exp_se3(Twist::from_stacked(d)), T);
}

SynthSpec single_object(const SynthSpec& base, uint64_t seed) {
  SynthSpec spec = base;
  spec.seed = seed;
  spec.n_objects = 1;
  spec.decoy_rate = 0.0;
  spec.full_query_maps = false;
  return spec;
}

TrialResult measure(const std::vector<ViewContext>& views, const RigidTransform& init, const RigidTransform& gt,
                    double diameter, const RefineConfig& cfg, double setup_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const RefineResult r = lm_refine(views, init, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  TrialResult out;
  out.rotation_error_deg = rotation_angle(r.pose.rotation() * gt.rotation().transpose()) * 180.0 / std::numbers::pi;
  out.translation_error = (r.pose.translation() - gt.translation()).norm() / diameter;
  out.seconds = setup_seconds + secs;
  out.iterations = r.iterations;
  out.converged = r.converged;
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  GradcheckReport rep;
  RefineConfig cfg;
  cfg.debug_corrupt_jacobian = opt.break_jacobian;
  SynthSpec base;
  base.n_objects = 1;
  for (int i = 0; i < opt.n_configs; ++i) {
    const SynthScene scene = generate(single_object(base, mix_seed({opt.seed, 0x67726164ULL, uint64_t(i)})));
    const SceneObject& obj = scene.scene.objects.front();
    const RigidTransform& gt = scene.gt_poses.at(obj.object_id);
    const SyntheticQueryProvider queries(scene);
    const RigidTransform cand = perturb_pose(gt, 3.0, 0.02 * obj.diameter, mix_seed({opt.seed, uint64_t(i), 1}));
    const std::vector<ViewContext> views =
        build_views(scene.scene, world_candidate(obj, cand), queries, scene.fields.at(obj.object_id), nullptr);
    if (views.empty()) throw Error(ErrorKind::NoVisibleSurface, "gradient check scene without visible views");

    RigidTransform T = cand;
    Vec6 h;
    for (int attempt = 0; attempt < kSmoothAttempts; ++attempt) {
      T = perturb_pose(cand, 1.0, 0.005 * obj.diameter, mix_seed({opt.seed, uint64_t(i), 2, uint64_t(attempt)}));
      const double lever = std::max(1.0, T.translation().norm());
      h << opt.step, opt.step, opt.step, opt.step / lever, opt.step / lever, opt.step / lever;
      const std::vector<int> sig = smoothness_signature(views, T);
      bool smooth = true;
      for (int k = 0; k < 6 && smooth; ++k) {
        smooth = smoothness_signature(views, nudge(T, k, h[k])) == sig &&
                 smoothness_signature(views, nudge(T, k, -h[k])) == sig;
      }
      if (smooth) break;
    }

    const Vec6 g = objective_gradient(views, T, cfg);
    RefineConfig plain = cfg;
    plain.debug_corrupt_jacobian = false;
    Vec6 fd;
    for (int k = 0; k < 6; ++k) {
      fd[k] = (total_objective(views, nudge(T, k, h[k]), plain) - total_objective(views, nudge(T, k, -h[k]), plain)) /
              (2.0 * h[k]);
    }
    const double nv = std::max(fd.head<3>().norm(), 1e-300);
    const double nw = std::max(fd.tail<3>().norm(), 1e-300);
    for (int k = 0; k < 6; ++k) {
      const double e = std::abs(g[k] - fd[k]) / (k < 3 ? nv : nw);
      rep.max_error[k] = std::max(rep.max_error[k], e);
      rep.max_relative_error = std::max(rep.max_relative_error, e);
    }
    ++rep.n_configs;
  }
  rep.pass = rep.n_configs > 0 && rep.max_relative_error < opt.tolerance;
  return rep;
}

std::vector<EvalGroundTruth> ground_truth(const SynthScene& scene) {
  std::vector<EvalGroundTruth> out;
  for (const SceneObject& o : scene.scene.objects) out.push_back({o.object_id, scene.gt_poses.at(o.object_id)});
  return out;
}

EvalContext eval_context(const SceneConfig& scene) {
  EvalContext ctx;
  for (const SceneObject& o : scene.objects) {
    ctx.meshes[o.object_id] = &o.mesh;
    if (o.diameter > 0) ctx.diameters[o.object_id] = o.diameter;
    if (!o.symmetries.empty()) ctx.symmetries[o.object_id] = SymmetrySet(o.symmetries);
  }
  for (const SceneCamera& c : scene.cameras) ctx.cameras.push_back({c.camera, c.T_CW});
  return ctx;
}

EvalContext eval_context(const SynthScene& scene) { return eval_context(scene.scene); }

std::vector<EvalEstimate> estimates(const PipelineOutput& out) {
  std::vector<EvalEstimate> est;
  for (const PipelineResult& r : out.results) est.push_back({r.object_id, r.T_WO, r.score});
  return est;
}

std::vector<EvalEstimate> aggregated_estimates(const SynthScene& scene) {
  std::vector<EvalEstimate> est;
  for (const PoseCandidate& c : scene.candidates) {
    const WorldCandidate w = to_world(scene.scene, c);
    est.push_back({w.object_id, w.T_WO, w.score});
  }
  return est;
}

std::vector<EvalEstimate> suppressed_estimates(const SynthScene& scene) {
  std::vector<WorldCandidate> world;
  for (const PoseCandidate& c : scene.candidates) world.push_back(to_world(scene.scene, c));
  std::vector<EvalEstimate> est;
  for (const WorldCandidate& w : nms3d(std::move(world), scene.scene.nms_iou, scene.scene.nms_scope)) {
    est.push_back({w.object_id, w.T_WO, w.score});
  }
  return est;
}

PipelineOutput run_oracle_pipeline(const SynthScene& scene, const PipelineOptions& options) {
  const SyntheticQueryProvider queries(scene);
  return run_pipeline(scene.scene, scene.candidates, queries, scene.sources(), options);
}

std::vector<TrialResult> convergence_study(uint64_t seed, int n_trials, double rot_deg, double trans_frac,
                                           const RefineConfig& cfg, const SynthSpec& base) {
  std::vector<TrialResult> out;
  for (int i = 0; i < n_trials; ++i) {
    const SynthScene scene = generate(single_object(base, mix_seed({seed, 0x636f6e76ULL, uint64_t(i)})));
    const SceneObject& obj = scene.scene.objects.front();
    const RigidTransform& gt = scene.gt_poses.at(obj.object_id);
    const RigidTransform init =
        perturb_pose(gt, rot_deg, trans_frac * obj.diameter, mix_seed({seed, uint64_t(i), 0x70ULL}));
    const auto t0 = std::chrono::steady_clock::now();
    const SyntheticQueryProvider queries(scene);
    const std::vector<ViewContext> views =
        build_views(scene.scene, world_candidate(obj, init), queries, scene.fields.at(obj.object_id), nullptr);
    const double setup = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (views.empty()) throw Error(ErrorKind::NoVisibleSurface, "convergence trial without visible views");
    out.push_back(measure(views, init, gt, obj.diameter, cfg, setup));
  }
  return out;
}

std::vector<ViewCountTrial> view_count_study(uint64_t seed, int n_trials, double trans_frac, const RefineConfig& cfg,
                                             const SynthSpec& base) {
  std::vector<ViewCountTrial> out;
  for (int i = 0; i < n_trials; ++i) {
    const SynthScene scene = generate(single_object(base, mix_seed({seed, 0x76696577ULL, uint64_t(i)})));
    const SceneObject& obj = scene.scene.objects.front();
    const RigidTransform& gt = scene.gt_poses.at(obj.object_id);
    const SceneCamera& first = scene.scene.cameras.front();
    const Vec3 axis = first.T_CW.rotation().transpose() * Vec3::UnitZ();
    const double sign = (mix_seed({seed, uint64_t(i), 0x73ULL}) & 1) ? 1.0 : -1.0;
    const RigidTransform init(gt.rotation(), gt.translation() + sign * trans_frac * obj.diameter * axis);
    const SyntheticQueryProvider queries(scene);
    const std::vector<ViewContext> views =
        build_views(scene.scene, world_candidate(obj, init), queries, scene.fields.at(obj.object_id), nullptr);
    std::vector<ViewContext> single;
    for (const ViewContext& v : views) {
      if (v.view_id == first.view_id) single.push_back(v);
    }
    if (single.empty()) throw Error(ErrorKind::NoVisibleSurface, "first view does not see the object");
    out.push_back({measure(single, init, gt, obj.diameter, cfg, 0.0), measure(views, init, gt, obj.diameter, cfg, 0.0)});
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- ablations ---------------------------------------------------------------

SynthSpec duplicate_heavy_spec(uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.n_views = 4;
  spec.n_objects = 3;
  spec.decoy_rate = 0.5;
  spec.perturb_rot_deg = 15.0;
  spec.perturb_trans_frac = 0.1;
  return spec;
}

SynthSpec corrupted_cells_spec(uint64_t seed, double rate) {
  SynthSpec spec;
  spec.seed = seed;
  spec.n_objects = 2;
  spec.corrupt_rate = rate;
  spec.perturb_rot_deg = 15.0;
  spec.perturb_trans_frac = 0.1;
  spec.query_noise = 0.8;
  return spec;
}

SynthSpec corrupted_view_spec(uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.n_objects = 2;
  spec.decoy_rate = 0.5;
  spec.corrupt_view = 0;
  return spec;
}

std::vector<SynthScene> ablation_scenes(const std::string& kind, uint64_t seed, int n_scenes) {
  std::vector<SynthScene> out;
  for (int i = 0; i < n_scenes; ++i) {
    const uint64_t s = mix_seed({seed, 0x61626cULL, uint64_t(i)});
    if (kind == "nms" || kind == "stage") {
      out.push_back(generate(duplicate_heavy_spec(s)));
    } else if (kind == "cost") {
      out.push_back(generate(corrupted_cells_spec(s, 0.2)));
    } else if (kind == "scoring") {
      out.push_back(generate(corrupted_view_spec(s)));
    } else {
      throw Error(ErrorKind::InvalidArgument, "unknown ablation kind '" + kind + "'");
    }
  }
  return out;
}

PooledMetrics pooled_metrics(const std::vector<SynthScene>& scenes,
                             const std::vector<std::vector<EvalEstimate>>& per_scene) {
  EvalContext ctx;
  std::vector<EvalGroundTruth> gt;
  std::vector<EvalEstimate> est;
  for (size_t s = 0; s < scenes.size(); ++s) {
    const std::string prefix = "s" + std::to_string(s) + "/";
    std::vector<EvalCamera> cams;
    for (const SceneCamera& c : scenes[s].scene.cameras) cams.push_back({c.camera, c.T_CW});
    for (const SceneObject& o : scenes[s].scene.objects) {
      const std::string id = prefix + o.object_id;
      ctx.meshes[id] = &o.mesh;
      ctx.diameters[id] = o.diameter;
      ctx.object_cameras[id] = cams;
      gt.push_back({id, scenes[s].gt_poses.at(o.object_id)});
    }
    for (const EvalEstimate& e : per_scene.at(s)) est.push_back({prefix + e.object_id, e.T_WO, e.score});
  }
  return {average_recall(est, gt, ctx).ar, average_precision(est, gt, ctx).ap};
}

const AblationCell& AblationTable::at(const std::string& row, const std::string& col) const {
  for (const AblationCell& c : cells) {
    if (c.row == row && c.col == col) return c;
  }
  throw Error(ErrorKind::InvalidArgument, "no ablation cell " + row + " / " + col);
}

std::string AblationTable::format() const {
  size_t w0 = kind.size();
  for (const auto& r : rows) w0 = std::max(w0, r.size());
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w0), kind.c_str());
  out += buf;
  for (const auto& c : cols) {
    std::snprintf(buf, sizeof buf, " | %-13s", c.c_str());
    out += buf;
  }
  out += "\n";
  size_t i = 0;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w0), r.c_str());
    out += buf;
    for (size_t j = 0; j < cols.size(); ++j, ++i) {
      std::snprintf(buf, sizeof buf, " | %.3f / %.3f", cells[i].ar, cells[i].ap);
      out += buf;
    }
    out += "\n";
  }
  out += "(cells: AR / AP)\n";
  return out;
}

std::string AblationTable::format_rows() const {
  std::string out;
  for (const AblationCell& c : cells) {
    nlohmann::ordered_json j{{"kind", kind}, {"row", c.row}, {"col", c.col}, {"ar", c.ar}, {"ap", c.ap}};
    out += j.dump() + "\n";
  }
  return out;
}

AblationTable ablate_cost(const std::vector<SynthScene>& scenes, const std::vector<double>& alphas,
                          const std::vector<double>& scales) {
  AblationTable t;
  t.kind = "cost";
  for (double a : alphas) t.rows.push_back("alpha=" + fmt("%g", a));
  for (double c : scales) t.cols.push_back("c=" + fmt("%g", c));
  for (size_t i = 0; i < alphas.size(); ++i) {
    for (size_t j = 0; j < scales.size(); ++j) {
      PipelineOptions opt;
      opt.refine.barron = {alphas[i], scales[j]};
      std::vector<std::vector<EvalEstimate>> per_scene;
      for (const SynthScene& s : scenes) per_scene.push_back(estimates(run_oracle_pipeline(s, opt)));
      const PooledMetrics m = pooled_metrics(scenes, per_scene);
      t.cells.push_back({t.rows[i], t.cols[j], m.ar, m.ap});
    }
  }
  return t;
}

AblationTable ablate_scoring(const std::vector<SynthScene>& scenes) {
  AblationTable t;
  t.kind = "scoring";
  t.cols = {"score"};
  for (ScoreMode mode : {ScoreMode::Min, ScoreMode::Max, ScoreMode::Average}) {
    PipelineOptions opt;
    opt.score_mode = mode;
    std::vector<std::vector<EvalEstimate>> per_scene;
    for (const SynthScene& s : scenes) per_scene.push_back(estimates(run_oracle_pipeline(s, opt)));
    const PooledMetrics m = pooled_metrics(scenes, per_scene);
    t.rows.push_back(to_string(mode));
    t.cells.push_back({t.rows.back(), "score", m.ar, m.ap});
  }
  return t;
}

AblationTable ablate_nms(const std::vector<SynthScene>& scenes, const std::vector<double>& ious) {
  AblationTable t;
  t.kind = "nms";
  t.cols = {to_string(NmsScope::InterClass), to_string(NmsScope::IntraClass)};
  for (double iou : ious) {
    t.rows.push_back("iou=" + fmt("%g", iou));
    for (NmsScope scope : {NmsScope::InterClass, NmsScope::IntraClass}) {
      std::vector<SynthScene> variant = scenes;
      for (SynthScene& s : variant) {
        s.scene.nms_iou = iou;
        s.scene.nms_scope = scope;
      }
      std::vector<std::vector<EvalEstimate>> per_scene;
      for (const SynthScene& s : variant) per_scene.push_back(estimates(run_oracle_pipeline(s, {})));
      const PooledMetrics m = pooled_metrics(variant, per_scene);
      t.cells.push_back({t.rows.back(), to_string(scope), m.ar, m.ap});
    }
  }
  return t;
}

}  // namespace mvpose
