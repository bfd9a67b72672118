#include "mvpose/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/SVD>

#include "json.hpp"
#include "mvpose/error.hpp"

namespace mvpose::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kReorthoTol = 1e-6;
constexpr double kRejectTol = 1e-3;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& context) {
  if (!j.is_object()) throw Error(ErrorKind::Schema, context + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw Error(ErrorKind::Schema, context + ": unknown key '" + key + "'");
  }
}

const json& require(const json& j, const char* key, const std::string& context) {
  const auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorKind::Schema, context + ": missing key '" + key + "'");
  return *it;
}

template <typename T>
T get(const json& j, const char* key, const std::string& context) {
  const json& v = require(j, key, context);
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, context + "." + key + ": " + e.what());
  }
}

const json& require_array(const json& j, const char* key, const std::string& context) {
  const json& v = require(j, key, context);
  if (!v.is_array()) throw Error(ErrorKind::Schema, context + "." + key + ": expected a list");
  return v;
}

json transform_json(const RigidTransform& t) {
  json a = json::array();
  for (double x : t.to_row_major()) a.push_back(x);
  return a;
}

RigidTransform transform_from(const json& j, const char* key, const std::string& context, Warnings* warnings) {
  return parse_transform(get<std::vector<double>>(j, key, context), context + "." + key, warnings);
}

double score_from(const json& j, const std::string& context) {
  const double s = get<double>(j, "score", context);
  if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorKind::Schema, context + ".score: must lie in [0, 1]");
  return s;
}

json parse_document(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

template <typename Fn>
auto with_path(const fs::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io || e.kind() == ErrorKind::ParseError) throw;
    throw Error(e.kind(), path.string() + ": " + std::string(e.what()));
  }
}

json table_json(const ThresholdTable& t) {
  json rows = json::array();
  for (size_t i = 0; i < std::min(t.thresholds.size(), t.values.size()); ++i) {
    rows.push_back(json{{"threshold", t.thresholds[i]}, {"value", t.values[i]}});
  }
  return rows;
}

}  // namespace

SyntheticFeatureField FieldSpec::build(const std::string& object_id) const {
  return SyntheticFeatureField::generate(object_id, seed, length_scale, params);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RigidTransform parse_transform(const std::vector<double>& values, const std::string& context, Warnings* warnings) {
  if (values.size() != 12) {
    throw Error(ErrorKind::Schema, context + ": transform needs 12 numbers, got " + std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::Schema, context + ": non-finite transform entry");
  }
  std::array<double, 12> a;
  std::copy(values.begin(), values.end(), a.begin());
  RigidTransform t = RigidTransform::from_row_major(a);
  const Mat3& r = t.rotation();
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = r.determinant();
  const double dev = std::max(ortho, std::abs(det - 1.0));
  if (!(dev <= kRejectTol)) {
    throw Error(ErrorKind::Schema, context + ": rotation is not orthonormal (deviation " + std::to_string(dev) + ")");
  }
  if (dev > kReorthoTol) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    t = RigidTransform(svd.matrixU() * svd.matrixV().transpose(), t.translation());
    if (warnings) warnings->push_back(context + ": rotation re-orthonormalized (deviation " + std::to_string(dev) + ")");
  }
  return t;
}

NmsScope parse_nms_scope(const std::string& s) {
  if (s == "inter_class") return NmsScope::InterClass;
  if (s == "intra_class") return NmsScope::IntraClass;
  throw Error(ErrorKind::InvalidArgument, "nms_scope must be inter_class or intra_class, got '" + s + "'");
}

OobPolicy parse_oob_policy(const std::string& s) {
  if (s == "drop") return OobPolicy::Drop;
  if (s == "clamp") return OobPolicy::Clamp;
  throw Error(ErrorKind::InvalidArgument, "oob_policy must be drop or clamp, got '" + s + "'");
}

ScoreMode parse_score_mode(const std::string& s) {
  if (s == "average") return ScoreMode::Average;
  if (s == "min") return ScoreMode::Min;
  if (s == "max") return ScoreMode::Max;
  throw Error(ErrorKind::InvalidArgument, "score_mode must be average, min or max, got '" + s + "'");
}

// --- scene ------------------------------------------------------------------

SceneFile load_scene(const fs::path& path, Warnings* warnings) {
  const json doc = parse_document(path);
  return with_path(path, [&] {
    SceneFile out;
    check_keys(doc, {"cameras", "objects", "config"}, "scene");
    const json& cams = require_array(doc, "cameras", "scene");
    for (size_t i = 0; i < cams.size(); ++i) {
      const std::string ctx = "cameras[" + std::to_string(i) + "]";
      const json& c = cams[i];
      check_keys(c, {"view_id", "fx", "fy", "cx", "cy", "width", "height", "T_CW"}, ctx);
      SceneCamera cam;
      cam.view_id = get<std::string>(c, "view_id", ctx);
      cam.camera.fx = get<double>(c, "fx", ctx);
      cam.camera.fy = get<double>(c, "fy", ctx);
      cam.camera.cx = get<double>(c, "cx", ctx);
      cam.camera.cy = get<double>(c, "cy", ctx);
      cam.camera.width = get<int>(c, "width", ctx);
      cam.camera.height = get<int>(c, "height", ctx);
      cam.T_CW = transform_from(c, "T_CW", ctx, warnings);
      out.scene.cameras.push_back(std::move(cam));
    }
    const json& objs = require_array(doc, "objects", "scene");
    for (size_t i = 0; i < objs.size(); ++i) {
      const std::string ctx = "objects[" + std::to_string(i) + "]";
      const json& o = objs[i];
      check_keys(o, {"object_id", "mesh_path", "diameter", "symmetries", "feature_field"}, ctx);
      SceneObject obj;
      obj.object_id = get<std::string>(o, "object_id", ctx);
      obj.mesh_path = get<std::string>(o, "mesh_path", ctx);
      if (o.contains("diameter")) {
        obj.diameter = get<double>(o, "diameter", ctx);
        if (!(obj.diameter > 0)) throw Error(ErrorKind::Schema, ctx + ".diameter: must be positive");
      }
      if (o.contains("symmetries")) {
        const json& syms = require_array(o, "symmetries", ctx);
        for (size_t k = 0; k < syms.size(); ++k) {
          const std::string sctx = ctx + ".symmetries[" + std::to_string(k) + "]";
          std::vector<double> v;
          try {
            v = syms[k].get<std::vector<double>>();
          } catch (const json::exception& e) {
            throw Error(ErrorKind::Schema, sctx + ": " + e.what());
          }
          obj.symmetries.push_back(parse_transform(v, sctx, warnings));
        }
      }
      if (o.contains("feature_field")) {
        const std::string fctx = ctx + ".feature_field";
        const json& f = o.at("feature_field");
        check_keys(f, {"seed", "length_scale", "dim", "components", "min_wavelength", "max_wavelength"}, fctx);
        FieldSpec fs;
        fs.seed = get<uint64_t>(f, "seed", fctx);
        fs.length_scale = get<double>(f, "length_scale", fctx);
        fs.params.dim = get<int>(f, "dim", fctx);
        fs.params.components = get<int>(f, "components", fctx);
        fs.params.min_wavelength = get<double>(f, "min_wavelength", fctx);
        fs.params.max_wavelength = get<double>(f, "max_wavelength", fctx);
        out.fields[obj.object_id] = fs;
      }
      const fs::path mesh_file = path.parent_path() / obj.mesh_path;
      if (!fs::exists(mesh_file)) {
        throw Error(ErrorKind::Io, ctx + ": mesh file " + mesh_file.string() + " does not exist");
      }
      obj.mesh = load_obj(mesh_file, obj.object_id);
      obj.mesh.validate();
      if (obj.diameter <= 0) obj.diameter = mesh_diameter(obj.mesh);
      out.scene.objects.push_back(std::move(obj));
    }
    if (doc.contains("config")) {
      const json& c = doc.at("config");
      check_keys(c, {"nms_iou", "nms_scope", "crop_size", "cell_size"}, "config");
      if (c.contains("nms_iou")) out.scene.nms_iou = get<double>(c, "nms_iou", "config");
      if (c.contains("nms_scope")) out.scene.nms_scope = parse_nms_scope(get<std::string>(c, "nms_scope", "config"));
      if (c.contains("crop_size")) out.scene.crop_size = get<int>(c, "crop_size", "config");
      if (c.contains("cell_size")) out.scene.cell_size = get<int>(c, "cell_size", "config");
    }
    try {
      out.scene.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::Schema, e.what());
    }
    return out;
  });
}

void save_scene(const SceneFile& file, const fs::path& path) {
  json doc;
  json cams = json::array();
  for (const SceneCamera& c : file.scene.cameras) {
    cams.push_back(json{{"view_id", c.view_id},
                        {"fx", c.camera.fx},
                        {"fy", c.camera.fy},
                        {"cx", c.camera.cx},
                        {"cy", c.camera.cy},
                        {"width", c.camera.width},
                        {"height", c.camera.height},
                        {"T_CW", transform_json(c.T_CW)}});
  }
  json objs = json::array();
  for (const SceneObject& o : file.scene.objects) {
    json j{{"object_id", o.object_id}, {"mesh_path", o.mesh_path}};
    if (o.diameter > 0) j["diameter"] = o.diameter;
    if (!o.symmetries.empty()) {
      json syms = json::array();
      for (const auto& s : o.symmetries) syms.push_back(transform_json(s));
      j["symmetries"] = syms;
    }
    const auto it = file.fields.find(o.object_id);
    if (it != file.fields.end()) {
      const FieldSpec& f = it->second;
      j["feature_field"] = json{{"seed", f.seed},
                                {"length_scale", f.length_scale},
                                {"dim", f.params.dim},
                                {"components", f.params.components},
                                {"min_wavelength", f.params.min_wavelength},
                                {"max_wavelength", f.params.max_wavelength}};
    }
    objs.push_back(j);
  }
  doc["cameras"] = cams;
  doc["objects"] = objs;
  doc["config"] = json{{"nms_iou", file.scene.nms_iou},
                       {"nms_scope", to_string(file.scene.nms_scope)},
                       {"crop_size", file.scene.crop_size},
                       {"cell_size", file.scene.cell_size}};
  write_text(path, dump(doc));
}

// --- candidates -------------------------------------------------------------

std::vector<PoseCandidate> load_candidates(const fs::path& path, Warnings* warnings) {
  const json doc = parse_document(path);
  return with_path(path, [&] {
    check_keys(doc, {"candidates"}, "candidate file");
    const json& list = require_array(doc, "candidates", "candidate file");
    std::vector<PoseCandidate> out;
    for (size_t i = 0; i < list.size(); ++i) {
      const std::string ctx = "candidates[" + std::to_string(i) + "]";
      const json& c = list[i];
      check_keys(c, {"object_id", "view_id", "transform", "score"}, ctx);
      PoseCandidate p;
      p.object_id = get<std::string>(c, "object_id", ctx);
      p.view_id = get<std::string>(c, "view_id", ctx);
      p.T_CO = transform_from(c, "transform", ctx, warnings);
      p.score = score_from(c, ctx);
      out.push_back(std::move(p));
    }
    return out;
  });
}

void save_candidates(const std::vector<PoseCandidate>& candidates, const fs::path& path) {
  json list = json::array();
  for (const PoseCandidate& c : candidates) {
    list.push_back(json{{"object_id", c.object_id},
                        {"view_id", c.view_id},
                        {"transform", transform_json(c.T_CO)},
                        {"score", c.score}});
  }
  write_text(path, dump(json{{"candidates", list}}));
}

// --- results ----------------------------------------------------------------

namespace {

ResultFile results_from(const json& doc, Warnings* warnings) {
  ResultFile out;
  check_keys(doc, {"metadata", "results", "failures"}, "result file");
  const json& m = require(doc, "metadata", "result file");
  check_keys(m,
             {"barron_alpha", "barron_c", "max_iters", "nms_iou", "nms_scope", "oob_policy", "score_mode",
              "n_candidates", "stage1_survivors"},
             "metadata");
  out.metadata.barron.alpha = get<double>(m, "barron_alpha", "metadata");
  out.metadata.barron.c = get<double>(m, "barron_c", "metadata");
  out.metadata.max_iters = get<int>(m, "max_iters", "metadata");
  out.metadata.nms_iou = get<double>(m, "nms_iou", "metadata");
  out.metadata.nms_scope = parse_nms_scope(get<std::string>(m, "nms_scope", "metadata"));
  out.metadata.oob_policy = parse_oob_policy(get<std::string>(m, "oob_policy", "metadata"));
  out.metadata.score_mode = parse_score_mode(get<std::string>(m, "score_mode", "metadata"));
  out.metadata.n_candidates = get<int>(m, "n_candidates", "metadata");
  out.metadata.stage1_survivors = get<int>(m, "stage1_survivors", "metadata");

  const json& list = require_array(doc, "results", "result file");
  for (size_t i = 0; i < list.size(); ++i) {
    const std::string ctx = "results[" + std::to_string(i) + "]";
    const json& r = list[i];
    check_keys(r,
               {"object_id", "source_view", "transform", "initial_transform", "score", "converged", "iterations",
                "per_view_loss"},
               ctx);
    PipelineResult p;
    p.object_id = get<std::string>(r, "object_id", ctx);
    p.source_view = get<std::string>(r, "source_view", ctx);
    p.T_WO = transform_from(r, "transform", ctx, warnings);
    p.T_WO_initial = transform_from(r, "initial_transform", ctx, warnings);
    p.score = score_from(r, ctx);
    p.converged = get<bool>(r, "converged", ctx);
    p.iterations = get<int>(r, "iterations", ctx);
    p.per_view_loss = get<std::map<std::string, double>>(r, "per_view_loss", ctx);
    out.results.push_back(std::move(p));
  }
  const json& fails = require_array(doc, "failures", "result file");
  for (size_t i = 0; i < fails.size(); ++i) {
    const std::string ctx = "failures[" + std::to_string(i) + "]";
    check_keys(fails[i], {"object_id", "source_view", "message"}, ctx);
    out.failures.push_back({get<std::string>(fails[i], "object_id", ctx),
                            get<std::string>(fails[i], "source_view", ctx),
                            get<std::string>(fails[i], "message", ctx)});
  }
  return out;
}

}  // namespace

ResultFile load_results(const fs::path& path, Warnings* warnings) {
  const json doc = parse_document(path);
  return with_path(path, [&] { return results_from(doc, warnings); });
}

void save_results(const ResultFile& file, const fs::path& path) {
  const ResultMetadata& m = file.metadata;
  json doc;
  doc["metadata"] = json{{"barron_alpha", m.barron.alpha},
                         {"barron_c", m.barron.c},
                         {"max_iters", m.max_iters},
                         {"nms_iou", m.nms_iou},
                         {"nms_scope", to_string(m.nms_scope)},
                         {"oob_policy", to_string(m.oob_policy)},
                         {"score_mode", to_string(m.score_mode)},
                         {"n_candidates", m.n_candidates},
                         {"stage1_survivors", m.stage1_survivors}};
  json list = json::array();
  for (const PipelineResult& r : file.results) {
    json losses = json::object();
    for (const auto& [view, loss] : r.per_view_loss) losses[view] = loss;
    list.push_back(json{{"object_id", r.object_id},
                        {"source_view", r.source_view},
                        {"transform", transform_json(r.T_WO)},
                        {"initial_transform", transform_json(r.T_WO_initial)},
                        {"score", r.score},
                        {"converged", r.converged},
                        {"iterations", r.iterations},
                        {"per_view_loss", losses}});
  }
  doc["results"] = list;
  json fails = json::array();
  for (const CandidateFailure& f : file.failures) {
    fails.push_back(json{{"object_id", f.object_id}, {"source_view", f.source_view}, {"message", f.message}});
  }
  doc["failures"] = fails;
  const std::string text = dump(doc);
  try {
    results_from(json::parse(text), nullptr);
  } catch (const Error& e) {
    throw Error(ErrorKind::Schema, "refusing to write invalid result file " + path.string() + ": " + e.what());
  }
  write_text(path, text);
}

// --- ground truth -------------------------------------------------------------

std::vector<EvalGroundTruth> load_ground_truth(const fs::path& path, Warnings* warnings) {
  const json doc = parse_document(path);
  return with_path(path, [&] {
    check_keys(doc, {"ground_truth"}, "ground-truth file");
    const json& list = require_array(doc, "ground_truth", "ground-truth file");
    std::vector<EvalGroundTruth> out;
    for (size_t i = 0; i < list.size(); ++i) {
      const std::string ctx = "ground_truth[" + std::to_string(i) + "]";
      check_keys(list[i], {"object_id", "transform"}, ctx);
      out.push_back({get<std::string>(list[i], "object_id", ctx), transform_from(list[i], "transform", ctx, warnings)});
    }
    return out;
  });
}

void save_ground_truth(const std::vector<EvalGroundTruth>& gt, const fs::path& path) {
  json list = json::array();
  for (const EvalGroundTruth& g : gt) {
    list.push_back(json{{"object_id", g.object_id}, {"transform", transform_json(g.T_WO)}});
  }
  write_text(path, dump(json{{"ground_truth", list}}));
}

// --- eval report ------------------------------------------------------------

void save_eval_report(const EvalReport& r, const fs::path& path) {
  json doc{{"n_results", r.n_results},
           {"n_ground_truth", r.n_ground_truth},
           {"ar", r.recall.ar},
           {"ar_mssd", r.recall.ar_mssd},
           {"ar_mspd", r.recall.ar_mspd},
           {"ap", r.precision.ap},
           {"ap_mssd", r.precision.ap_mssd},
           {"ap_mspd", r.precision.ap_mspd},
           {"recall", json{{"mssd", table_json(r.recall.mssd)}, {"mspd", table_json(r.recall.mspd)}}},
           {"precision", json{{"mssd", table_json(r.precision.mssd)}, {"mspd", table_json(r.precision.mspd)}}}};
  write_text(path, dump(doc));
}

std::string format_eval_report(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "results %d  ground truth %d\n", r.n_results, r.n_ground_truth);
  out += line;
  std::snprintf(line, sizeof line, "AR %.4f  (MSSD %.4f, MSPD %.4f)\n", r.recall.ar, r.recall.ar_mssd, r.recall.ar_mspd);
  out += line;
  std::snprintf(line, sizeof line, "AP %.4f  (MSSD %.4f, MSPD %.4f)\n", r.precision.ap, r.precision.ap_mssd,
                r.precision.ap_mspd);
  out += line;
  out += "  MSSD thr   recall  precision |  MSPD thr   recall  precision\n";
  const auto at = [](const std::vector<double>& v, size_t i) { return i < v.size() ? v[i] : NAN; };
  const size_t rows = std::max(r.recall.mssd.thresholds.size(), r.recall.mspd.thresholds.size());
  for (size_t i = 0; i < rows; ++i) {
    std::snprintf(line, sizeof line, "  %8.2f  %7.4f  %9.4f | %9.2f  %7.4f  %9.4f\n", at(r.recall.mssd.thresholds, i),
                  at(r.recall.mssd.values, i), at(r.precision.mssd.values, i), at(r.recall.mspd.thresholds, i),
                  at(r.recall.mspd.values, i), at(r.precision.mspd.values, i));
    out += line;
  }
  return out;
}

}  // namespace mvpose::io
