#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvpose/eval.hpp"
#include "mvpose/pipeline.hpp"
#include "mvpose/synth.hpp"

namespace mvpose {

// --- Gradient check -----------------------------------------------------------

struct GradcheckOptions {
  uint64_t seed = 0;
  int n_configs = 50;
  double step = 1e-5;  // translation; rotation uses step / max(1, |t_WO|)
  double tolerance = 1e-4;
  bool break_jacobian = false;
};

struct GradcheckReport {
  /// Worst relative error per twist coordinate (v_x, v_y, v_z, w_x, w_y, w_z)
  /// over all configurations; each coordinate is normalized by the norm of its
  /// block (translation or rotation) of the finite-difference gradient.
  std::array<double, 6> max_error{};
  double max_relative_error = 0.0;
  int n_configs = 0;
  bool pass = false;
};

/// Compares objective_gradient with central differences of total_objective
/// on seeded synthetic scenes. Evaluation poses are drawn where the objective
/// is smooth over the whole stencil (no feature crosses a bilinear cell
/// boundary or changes inlier status).
GradcheckReport run_gradcheck(const GradcheckOptions& options);

// --- Oracle pipeline helpers ------------------------------------------------------

std::vector<EvalGroundTruth> ground_truth(const SynthScene& scene);
/// Eval context over the scene's meshes and cameras. References `scene`.
EvalContext eval_context(const SynthScene& scene);
EvalContext eval_context(const SceneConfig& scene);
std::vector<EvalEstimate> estimates(const PipelineOutput& out);
/// World candidates as estimates, without suppression or refinement.
std::vector<EvalEstimate> aggregated_estimates(const SynthScene& scene);
/// Stage-one NMS survivors as estimates, unrefined.
std::vector<EvalEstimate> suppressed_estimates(const SynthScene& scene);

PipelineOutput run_oracle_pipeline(const SynthScene& scene, const PipelineOptions& options);

// --- Refinement studies -------------------------------------------------------

struct TrialResult {
  double rotation_error_deg = 0.0;
  double translation_error = 0.0;  // fraction of the diameter
  double seconds = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// One single-object scene per trial; the ground truth is perturbed by exactly
/// rot_deg and trans_frac * diameter and refined with `cfg`.
std::vector<TrialResult> convergence_study(uint64_t seed, int n_trials, double rot_deg, double trans_frac,
                                           const RefineConfig& cfg, const SynthSpec& base = {});

/// Ground truth shifted along the optical axis of the first view by
/// trans_frac * diameter, refined once with only that view and once with all.
struct ViewCountTrial {
  TrialResult single;
  TrialResult multi;
};
std::vector<ViewCountTrial> view_count_study(uint64_t seed, int n_trials, double trans_frac, const RefineConfig& cfg,
                                             const SynthSpec& base = {});

double median(std::vector<double> v);

// --- Ablations -----------------------------------------------------------------

struct AblationCell {
  std::string row;
  std::string col;
  double ar = 0.0;
  double ap = 0.0;
};

struct AblationTable {
  std::string kind;
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<AblationCell> cells;  // row-major

  const AblationCell& at(const std::string& row, const std::string& col) const;
  std::string format() const;      // aligned text
  std::string format_rows() const; // one JSON object per line
};

/// Scene presets used by the ablations and the acceptance suite.
SynthSpec duplicate_heavy_spec(uint64_t seed);
SynthSpec corrupted_cells_spec(uint64_t seed, double rate);
SynthSpec corrupted_view_spec(uint64_t seed);

/// Seeded scene set for one ablation kind: "nms" and "stage" (duplicate-heavy),
/// "cost" (20% corrupted cells) or "scoring" (one corrupted view).
std::vector<SynthScene> ablation_scenes(const std::string& kind, uint64_t seed, int n_scenes);

inline const std::vector<double> kAblationAlphas{2.0, 1.0, 0.0, -2.0, -5.0, -100.0};
inline const std::vector<double> kAblationScales{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
inline const std::vector<double> kAblationIous{0.2, 0.4, 0.6, 0.8};

/// Pooled AR/AP of the full pipeline over `scenes` for each cost (alpha, c).
AblationTable ablate_cost(const std::vector<SynthScene>& scenes, const std::vector<double>& alphas = kAblationAlphas,
                          const std::vector<double>& scales = kAblationScales);
/// Rows min / max / average.
AblationTable ablate_scoring(const std::vector<SynthScene>& scenes);
/// Rows are IoU thresholds, columns the two scopes.
AblationTable ablate_nms(const std::vector<SynthScene>& scenes, const std::vector<double>& ious = kAblationIous);

struct PooledMetrics {
  double ar = 0.0;
  double ap = 0.0;
};

/// Evaluates per-scene estimates against one pooled ground-truth set.
PooledMetrics pooled_metrics(const std::vector<SynthScene>& scenes,
                             const std::vector<std::vector<EvalEstimate>>& per_scene);

}  // namespace mvpose
