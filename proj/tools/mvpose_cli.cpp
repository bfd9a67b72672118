// mvpose: synthetic scenes, multi-view refinement, evaluation and ablations.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvpose/error.hpp"
#include "mvpose/experiments.hpp"
#include "mvpose/io.hpp"
#include "mvpose/pipeline.hpp"
#include "mvpose/synth.hpp"

namespace fs = std::filesystem;
using namespace mvpose;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

void print_warnings(const io::Warnings& w) {
  for (const std::string& s : w) std::cerr << "warning: " << s << "\n";
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  uint64_t seed = 0;
  int views = 4;
  int objects = 2;
  double rot_deg = 10.0;
  double trans_frac = 0.05;
  double decoy_rate = 0.0;
  double corrupt_rate = 0.0;
  double query_noise = 0.0;
  int cell = 4;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.seed = a.seed;
  spec.n_views = a.views;
  spec.n_objects = a.objects;
  spec.perturb_rot_deg = a.rot_deg;
  spec.perturb_trans_frac = a.trans_frac;
  spec.decoy_rate = a.decoy_rate;
  spec.corrupt_rate = a.corrupt_rate;
  spec.query_noise = a.query_noise;
  spec.full_query_maps = true;
  spec.full_map_cell_size = a.cell;
  const SynthScene s = generate(spec);

  const fs::path out(a.out);
  std::error_code ec;
  fs::create_directories(out / "features", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + (out / "features").string() + ": " + ec.message());

  io::SceneFile file;
  file.scene = s.scene;
  const FieldParams params{spec.feature_dim, spec.feature_components, spec.field_min_wavelength,
                           spec.field_max_wavelength};
  for (const SceneObject& o : s.scene.objects) {
    save_obj(o.mesh, out / o.mesh_path);
    file.fields[o.object_id] = {s.fields.at(o.object_id).seed(), spec.field_scale_frac * o.diameter, params};
  }
  io::save_scene(file, out / "scene.json");
  for (const auto& [view, map] : s.query_maps) save_feature_tensor(map, out / "features" / (view + ".fmap"));
  io::save_candidates(s.candidates, out / "candidates.json");
  std::vector<EvalGroundTruth> gt = ground_truth(s);
  io::save_ground_truth(gt, out / "gt.json");

  std::printf("wrote %zu objects, %zu views, %zu candidates to %s\n", s.scene.objects.size(),
              s.scene.cameras.size(), s.candidates.size(), out.string().c_str());
  return kExitOk;
}

// ---- refine ---------------------------------------------------------------

struct RefineArgs {
  std::string scene, candidates, features, out;
  double alpha = -5.0;
  double c = 0.5;
  int max_iters = 30;
  double nms_iou = -1.0;
  std::string nms_scope, oob_policy = "drop", score_mode = "average";
  int threads = 0;
};

int run_refine(const RefineArgs& a) {
  io::Warnings warn;
  io::SceneFile file = io::load_scene(a.scene, &warn);
  const std::vector<PoseCandidate> candidates = io::load_candidates(a.candidates, &warn);
  print_warnings(warn);

  SceneConfig& scene = file.scene;
  if (a.nms_iou >= 0) scene.nms_iou = a.nms_iou;
  if (!a.nms_scope.empty()) scene.nms_scope = io::parse_nms_scope(a.nms_scope);
  scene.validate();

  std::map<std::string, FeatureMap> maps;
  for (const SceneCamera& cam : scene.cameras) {
    const fs::path p = fs::path(a.features) / (cam.view_id + ".fmap");
    if (!fs::exists(p)) {
      throw Error(ErrorKind::UnknownView, "missing feature tensor for view '" + cam.view_id + "' (" + p.string() + ")");
    }
    maps.emplace(cam.view_id, load_feature_tensor(p));
  }

  std::map<std::string, SyntheticFeatureField> fields;
  DescriptorSources sources;
  for (const SceneObject& o : scene.objects) {
    auto it = file.fields.find(o.object_id);
    if (it == file.fields.end()) {
      throw Error(ErrorKind::Schema, "object '" + o.object_id + "' has no feature_field descriptor source");
    }
    fields.emplace(o.object_id, it->second.build(o.object_id));
    sources[o.object_id] = &fields.at(o.object_id);
  }

  PipelineOptions opt;
  opt.refine.barron = {a.alpha, a.c};
  opt.refine.max_iters = a.max_iters;
  opt.refine.oob_policy = io::parse_oob_policy(a.oob_policy);
  opt.score_mode = io::parse_score_mode(a.score_mode);
  opt.threads = a.threads;
  opt.refine.validate();

  const TensorQueryProvider queries(std::move(maps));
  const PipelineOutput out = run_pipeline(scene, candidates, queries, sources, opt);

  io::ResultFile rf;
  rf.metadata.barron = opt.refine.barron;
  rf.metadata.max_iters = opt.refine.max_iters;
  rf.metadata.nms_iou = scene.nms_iou;
  rf.metadata.nms_scope = scene.nms_scope;
  rf.metadata.oob_policy = opt.refine.oob_policy;
  rf.metadata.score_mode = opt.score_mode;
  rf.metadata.n_candidates = static_cast<int>(candidates.size());
  rf.metadata.stage1_survivors = out.stage1_survivors;
  rf.results = out.results;
  rf.failures = out.failures;
  io::save_results(rf, a.out);

  std::printf("%zu candidates, %d after NMS, %zu results, %zu failures\n", candidates.size(), out.stage1_survivors,
              out.results.size(), out.failures.size());
  for (const PipelineResult& r : out.results) {
    std::printf("  %-12s from %-8s score %.4f iters %2d %s\n", r.object_id.c_str(), r.source_view.c_str(), r.score,
                r.iterations, r.converged ? "converged" : "not converged");
  }
  for (const CandidateFailure& f : out.failures) {
    std::printf("  failed %s from %s: %s\n", f.object_id.c_str(), f.source_view.c_str(), f.message.c_str());
  }
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string results, gt, scene, out;
};

int run_eval(const EvalArgs& a) {
  io::Warnings warn;
  const io::SceneFile file = io::load_scene(a.scene, &warn);
  const io::ResultFile rf = io::load_results(a.results, &warn);
  const std::vector<EvalGroundTruth> gt = io::load_ground_truth(a.gt, &warn);
  print_warnings(warn);

  std::set<std::string> known;
  for (const SceneObject& o : file.scene.objects) known.insert(o.object_id);
  for (const EvalGroundTruth& g : gt) {
    if (!known.count(g.object_id)) {
      throw Error(ErrorKind::UnknownObject, "ground truth object '" + g.object_id + "' is not in the scene");
    }
  }
  std::vector<EvalEstimate> est;
  for (const PipelineResult& r : rf.results) {
    if (!known.count(r.object_id)) {
      throw Error(ErrorKind::UnknownObject, "result object '" + r.object_id + "' is not in the scene");
    }
    est.push_back({r.object_id, r.T_WO, r.score});
  }

  const EvalContext ctx = eval_context(file.scene);
  io::EvalReport rep;
  rep.recall = average_recall(est, gt, ctx);
  rep.precision = average_precision(est, gt, ctx);
  rep.n_results = static_cast<int>(est.size());
  rep.n_ground_truth = static_cast<int>(gt.size());
  std::fputs(io::format_eval_report(rep).c_str(), stdout);
  if (!a.out.empty()) io::save_eval_report(rep, a.out);
  return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------

int run_gradcheck_cmd(const GradcheckOptions& o) {
  const GradcheckReport r = run_gradcheck(o);
  static const char* names[6] = {"v_x", "v_y", "v_z", "w_x", "w_y", "w_z"};
  std::printf("gradcheck: %d configurations, step %g, tolerance %g\n", r.n_configs, o.step, o.tolerance);
  for (int k = 0; k < 6; ++k) std::printf("  %-4s max relative error %.3e\n", names[k], r.max_error[k]);
  std::printf("  max  %.3e\n%s\n", r.max_relative_error, r.pass ? "PASS" : "FAIL");
  return r.pass ? kExitOk : kExitData;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::string kind;
  uint64_t seed = 0;
  int scenes = 0;
  std::string out;
};

int run_ablate(const AblateArgs& a) {
  static const std::map<std::string, int> default_scenes{{"nms", 3}, {"cost", 4}, {"scoring", 5}};
  const int n = a.scenes > 0 ? a.scenes : default_scenes.at(a.kind);
  const std::vector<SynthScene> scenes = ablation_scenes(a.kind, a.seed, n);
  AblationTable t;
  if (a.kind == "nms") t = ablate_nms(scenes);
  else if (a.kind == "cost") t = ablate_cost(scenes);
  else t = ablate_scoring(scenes);
  std::fputs(t.format().c_str(), stdout);
  if (a.out.empty()) std::fputs(t.format_rows().c_str(), stdout);
  else io::write_text(a.out, t.format_rows());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view feature-metric object pose refinement"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene with feature tensors and candidates");
  synth->add_option("--seed", sa.seed, "scene seed");
  synth->add_option("--views", sa.views, "number of cameras")->check(CLI::PositiveNumber);
  synth->add_option("--objects", sa.objects, "number of objects")->check(CLI::PositiveNumber);
  synth->add_option("--rot-deg", sa.rot_deg, "candidate rotation noise (deg)")->check(CLI::NonNegativeNumber);
  synth->add_option("--trans-frac", sa.trans_frac, "candidate translation noise (diameter fraction)")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--decoy-rate", sa.decoy_rate, "spurious candidates per real one")->check(CLI::NonNegativeNumber);
  synth->add_option("--corrupt-rate", sa.corrupt_rate, "fraction of noise query cells")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--query-noise", sa.query_noise, "inlier descriptor noise")->check(CLI::NonNegativeNumber);
  synth->add_option("--cell", sa.cell, "feature tensor cell size (px)")->check(CLI::PositiveNumber);
  synth->add_option("--out", sa.out, "output directory")->required();

  RefineArgs ra;
  auto* refine = app.add_subcommand("refine", "aggregate, suppress, refine and score candidates");
  refine->add_option("--scene", ra.scene)->required();
  refine->add_option("--candidates", ra.candidates)->required();
  refine->add_option("--features", ra.features, "directory of <view_id>.fmap tensors")->required();
  refine->add_option("--out", ra.out, "result file")->required();
  refine->add_option("--barron-alpha", ra.alpha)->capture_default_str();
  refine->add_option("--barron-c", ra.c)->check(CLI::PositiveNumber)->capture_default_str();
  refine->add_option("--max-iters", ra.max_iters)->check(CLI::NonNegativeNumber)->capture_default_str();
  refine->add_option("--nms-iou", ra.nms_iou, "overrides the scene config")->check(CLI::Range(0.0, 1.0));
  refine->add_option("--nms-scope", ra.nms_scope)->check(CLI::IsMember({"inter_class", "intra_class"}));
  refine->add_option("--oob-policy", ra.oob_policy)->check(CLI::IsMember({"drop", "clamp"}))->capture_default_str();
  refine->add_option("--score-mode", ra.score_mode)
      ->check(CLI::IsMember({"average", "min", "max"}))
      ->capture_default_str();
  refine->add_option("--threads", ra.threads, "0: all cores")->check(CLI::NonNegativeNumber);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "AR / AP of a result file against ground truth");
  eval->add_option("--results", ea.results)->required();
  eval->add_option("--gt", ea.gt)->required();
  eval->add_option("--scene", ea.scene)->required();
  eval->add_option("--out", ea.out, "report file");

  GradcheckOptions go;
  auto* grad = app.add_subcommand("gradcheck", "analytic gradient vs central differences");
  grad->add_option("--seed", go.seed);
  grad->add_option("--configs", go.n_configs)->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--step", go.step, "translation step; rotation step is divided by max(1, |t|)")->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--tolerance", go.tolerance)->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_flag("--break-jacobian", go.break_jacobian, "corrupt one chain-rule term (negative control)");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "AR / AP sweeps on seeded synthetic scene sets");
  ablate->add_option("kind", aa.kind)->required()->check(CLI::IsMember({"nms", "cost", "scoring"}));
  ablate->add_option("--seed", aa.seed);
  ablate->add_option("--scenes", aa.scenes, "scene count (default 3 / 4 / 5)")->check(CLI::PositiveNumber);
  ablate->add_option("--out", aa.out, "machine-readable rows (JSON lines)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*refine) return run_refine(ra);
    if (*eval) return run_eval(ea);
    if (*grad) return run_gradcheck_cmd(go);
    if (*ablate) return run_ablate(aa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
