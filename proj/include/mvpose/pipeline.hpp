#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvpose/features.hpp"
#include "mvpose/geometry.hpp"
#include "mvpose/mesh_render.hpp"
#include "mvpose/solver.hpp"

namespace mvpose {

struct PoseCandidate {
  std::string object_id;
  std::string view_id;
  RigidTransform T_CO;
  double score = 0.0;
};

struct WorldCandidate {
  std::string object_id;
  RigidTransform T_WO;
  double score = 0.0;
  std::string source_view;
  Aabb3 aabb;
};

struct SceneCamera {
  std::string view_id;
  PinholeCamera camera;
  RigidTransform T_CW;
};

struct SceneObject {
  std::string object_id;
  std::string mesh_path;
  TriangleMesh mesh;
  double diameter = 0.0;
  std::vector<RigidTransform> symmetries;
};

enum class NmsScope { InterClass, IntraClass };

struct SceneConfig {
  std::vector<SceneCamera> cameras;
  std::vector<SceneObject> objects;
  double nms_iou = 0.4;
  NmsScope nms_scope = NmsScope::InterClass;
  int crop_size = 420;
  int cell_size = 14;

  /// Throws Error(InvalidArgument) on an empty camera list, a threshold
  /// outside (0, 1), or duplicate ids.
  void validate() const;
  const SceneCamera& camera(const std::string& view_id) const;  // Error(UnknownView)
  const SceneObject& object(const std::string& object_id) const;  // Error(UnknownObject)
};

const char* to_string(NmsScope scope);

WorldCandidate to_world(const PoseCandidate& c, const RigidTransform& T_CW, const TriangleMesh& mesh);
/// Looks up the candidate's camera and mesh in the scene.
WorldCandidate to_world(const SceneConfig& scene, const PoseCandidate& c);

double iou3d(const Aabb3& a, const Aabb3& b);

/// Greedy 3D NMS. Ordering: score descending, then object_id, source_view,
/// and the row-major pose, so the output is independent of input order.
std::vector<WorldCandidate> nms3d(std::vector<WorldCandidate> candidates, double iou_thr, NmsScope scope);

/// Supplies the query feature map seen through a crop camera of one view.
/// Implementations must be safe to call concurrently.
class QueryProvider {
 public:
  virtual ~QueryProvider() = default;
  virtual FeatureMap query(const SceneCamera& view, const CropCamera& crop, int cell_size) const = 0;
};

/// Query maps cropped out of precomputed full-image feature tensors.
class TensorQueryProvider final : public QueryProvider {
 public:
  explicit TensorQueryProvider(std::map<std::string, FeatureMap> maps) : maps_(std::move(maps)) {}
  FeatureMap query(const SceneCamera& view, const CropCamera& crop, int cell_size) const override;

 private:
  std::map<std::string, FeatureMap> maps_;
};

struct PipelineOptions {
  RefineConfig refine;
  ScoreMode score_mode = ScoreMode::Average;
  /// Cost used for scoring. Defaults to the refinement cost when it saturates,
  /// otherwise to alpha = -5, c = 0.5.
  std::optional<BarronParams> score_cost;
  /// Per-object PCA bases applied to both registered and query descriptors.
  std::map<std::string, PcaBasis> pca;
  int threads = 0;  // 0: hardware concurrency
};

struct PipelineResult {
  std::string object_id;
  std::string source_view;
  RigidTransform T_WO;
  RigidTransform T_WO_initial;
  double score = 0.0;
  bool converged = false;
  int iterations = 0;
  std::map<std::string, double> per_view_loss;
};

struct CandidateFailure {
  std::string object_id;
  std::string source_view;
  std::string message;
};

struct PipelineOutput {
  std::vector<PipelineResult> results;
  std::vector<CandidateFailure> failures;
  int stage1_survivors = 0;
};

using DescriptorSources = std::map<std::string, const DescriptorSource*>;

/// Refinement views for one world candidate: every camera that sees the whole
/// mesh in front of it and whose projected mesh box intersects the image. The
/// crop is fitted to that box. Empty when no camera qualifies.
std::vector<ViewContext> build_views(const SceneConfig& scene, const WorldCandidate& candidate,
                                     const QueryProvider& queries, const DescriptorSource& source,
                                     const PcaBasis* pca);

double resolve_score(const std::vector<ViewContext>& views, const RigidTransform& T_WO,
                     const PipelineOptions& options);

/// Full pipeline: world aggregation, NMS, joint refinement of every
/// survivor, scoring, and a second NMS on the refined poses.
PipelineOutput run_pipeline(const SceneConfig& scene, const std::vector<PoseCandidate>& candidates,
                            const QueryProvider& queries, const DescriptorSources& sources,
                            const PipelineOptions& options);

}  // namespace mvpose
