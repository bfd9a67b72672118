#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mvpose/eval.hpp"
#include "mvpose/features.hpp"
#include "mvpose/pipeline.hpp"

namespace mvpose::io {

/// Non-fatal load diagnostics (re-orthonormalized transforms and the like).
using Warnings = std::vector<std::string>;

/// Parameters of a synthetic feature field, stored per object in scene files
/// so that refinement can regenerate the descriptor source.
struct FieldSpec {
  uint64_t seed = 0;
  double length_scale = 1.0;
  FieldParams params;

  SyntheticFeatureField build(const std::string& object_id) const;
};

struct SceneFile {
  SceneConfig scene;
  std::map<std::string, FieldSpec> fields;
};

/// Mesh paths are resolved relative to the scene file's directory; meshes are
/// loaded and diameters filled in when absent.
SceneFile load_scene(const std::filesystem::path& path, Warnings* warnings = nullptr);
void save_scene(const SceneFile& scene, const std::filesystem::path& path);

std::vector<PoseCandidate> load_candidates(const std::filesystem::path& path, Warnings* warnings = nullptr);
void save_candidates(const std::vector<PoseCandidate>& candidates, const std::filesystem::path& path);

struct ResultMetadata {
  BarronParams barron;
  int max_iters = 30;
  double nms_iou = 0.4;
  NmsScope nms_scope = NmsScope::InterClass;
  OobPolicy oob_policy = OobPolicy::Drop;
  ScoreMode score_mode = ScoreMode::Average;
  int n_candidates = 0;
  int stage1_survivors = 0;
};

struct ResultFile {
  ResultMetadata metadata;
  std::vector<PipelineResult> results;
  std::vector<CandidateFailure> failures;
};

ResultFile load_results(const std::filesystem::path& path, Warnings* warnings = nullptr);
/// Validates the serialized document with the loader before writing.
void save_results(const ResultFile& results, const std::filesystem::path& path);

std::vector<EvalGroundTruth> load_ground_truth(const std::filesystem::path& path, Warnings* warnings = nullptr);
void save_ground_truth(const std::vector<EvalGroundTruth>& gt, const std::filesystem::path& path);

struct EvalReport {
  RecallReport recall;
  PrecisionReport precision;
  int n_results = 0;
  int n_ground_truth = 0;
};

void save_eval_report(const EvalReport& report, const std::filesystem::path& path);
std::string format_eval_report(const EvalReport& report);

/// Parses 12 row-major numbers. Rotations off by more than 1e-6 are
/// re-orthonormalized (nearest rotation) with a warning; beyond 1e-3 the
/// transform is rejected with Error(Schema).
RigidTransform parse_transform(const std::vector<double>& values, const std::string& context,
                               Warnings* warnings = nullptr);

NmsScope parse_nms_scope(const std::string& s);
OobPolicy parse_oob_policy(const std::string& s);
ScoreMode parse_score_mode(const std::string& s);

/// Writes text atomically enough for tests: truncates and writes the bytes,
/// throwing Error(Io) with the path on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mvpose::io
