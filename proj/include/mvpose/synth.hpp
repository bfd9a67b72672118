#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mvpose/features.hpp"
#include "mvpose/pipeline.hpp"

namespace mvpose {

struct SynthSpec {
  uint64_t seed = 0;
  int n_views = 4;
  int n_objects = 2;
  double camera_ring_radius = 500.0;
  double camera_elevation_deg = 30.0;
  double perturb_rot_deg = 10.0;
  double perturb_trans_frac = 0.05;
  double decoy_rate = 0.0;
  int feature_dim = 32;
  int feature_components = 64;

  double object_radius = 50.0;
  /// Per-axis radius scale is drawn from [1 - axis_jitter, 1 + axis_jitter].
  double axis_jitter = 0.3;
  int min_vertices = 12;
  int max_vertices = 24;
  double workspace_half_extent = 150.0;
  int image_width = 640;
  int image_height = 480;
  double focal = 600.0;
  /// Feature-field length scale as a fraction of each object's diameter.
  double field_scale_frac = 0.15;
  double field_min_wavelength = 0.8;  // in length-scale units
  double field_max_wavelength = 2.5;

  BackgroundMode background = BackgroundMode::Zeros;
  /// Fraction of query cells replaced by unit noise in every view.
  double corrupt_rate = 0.0;
  /// Inlier descriptor noise of every surface query cell.
  double query_noise = 0.0;
  /// Index of a view whose query is pure noise; -1 for none.
  int corrupt_view = -1;
  /// Also render full-image query maps (needed only when writing tensors).
  bool full_query_maps = false;
  int full_map_cell_size = 4;

  /// Throws Error(InvalidArgument) on n_views < 1 or negative noise.
  void validate() const;
};

struct SynthScene {
  SynthSpec spec;
  SceneConfig scene;
  std::map<std::string, RigidTransform> gt_poses;
  std::map<std::string, SyntheticFeatureField> fields;
  std::map<std::string, FeatureMap> query_maps;  // full-image maps, when requested
  std::vector<PoseCandidate> candidates;
  std::vector<bool> decoy;  // parallel to candidates

  DescriptorSources sources() const;
  /// Query options for one view, including its corruption settings.
  QueryOptions query_options(const std::string& view_id, int cell_size) const;
};

/// Throws Error(PlacementFailure) when objects cannot be placed without box
/// overlap in 1000 attempts.
SynthScene generate(const SynthSpec& spec);

/// Rotates by exactly rot_deg about a random axis through the object origin
/// and translates by exactly `trans` along a random direction.
RigidTransform perturb_pose(const RigidTransform& T, double rot_deg, double trans, uint64_t seed);

/// Convex hull of random points on an axis-scaled sphere, centered on the
/// vertex centroid.
TriangleMesh random_convex_mesh(const std::string& object_id, uint64_t seed, int n_vertices,
                                const Vec3& radii);

/// Smallest vertex-set misalignment over proper rotations induced by
/// non-identity vertex correspondences. Zero for meshes with a rotational
/// symmetry.
double symmetry_alignment_error(const TriangleMesh& mesh);

/// Exact per-crop query maps rendered from the ground-truth scene.
class SyntheticQueryProvider final : public QueryProvider {
 public:
  explicit SyntheticQueryProvider(const SynthScene& scene) : scene_(scene) {}
  FeatureMap query(const SceneCamera& view, const CropCamera& crop, int cell_size) const override;

 private:
  const SynthScene& scene_;
};

/// Query map seen by a (crop) camera in a generated scene.
FeatureMap render_query(const SynthScene& scene, const std::string& view_id, const PinholeCamera& cam,
                        const RigidTransform& T_CW, int cell_size);

}  // namespace mvpose
