#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvpose/geometry.hpp"
#include "mvpose/mesh_render.hpp"

namespace mvpose {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatX2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Patch-grid descriptor map. Cell (row, col) covers pixels
/// [col * cell_size, (col + 1) * cell_size) x [row * cell_size, ...), and its
/// descriptor is attached to the cell center.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int height, int width, int dim, int cell_size);

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  int cell_size() const { return cell_size_; }

  Eigen::Map<const Eigen::VectorXf> cell(int row, int col) const {
    return {data_.data() + offset(row, col), dim_};
  }
  Eigen::Map<Eigen::VectorXf> cell(int row, int col) { return {data_.data() + offset(row, col), dim_}; }

  void set_cell(int row, int col, const VecX& d) { cell(row, col) = d.cast<float>(); }

  /// Pixel coordinates of a cell center.
  Vec2 cell_center(int row, int col) const {
    return {(col + 0.5) * cell_size_, (row + 0.5) * cell_size_};
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool operator==(const FeatureMap& o) const = default;

 private:
  size_t offset(int row, int col) const {
    return (static_cast<size_t>(row) * width_ + col) * dim_;
  }

  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  int cell_size_ = 14;
  std::vector<float> data_;
};

/// True iff `uv` lies where sample_gradient is defined: between the outermost
/// cell centers.
bool in_gradient_domain(const FeatureMap& map, const Vec2& uv);

/// Bilinear interpolation of cell-center descriptors at pixel `uv`. The half
/// cell outside the outermost centers replicates the border. Throws
/// Error(OutOfBounds) outside [0, width*cell) x [0, height*cell).
VecX sample_bilinear(const FeatureMap& map, const Vec2& uv);

/// D x 2 gradient of the bilinear interpolant w.r.t. (u, v) in pixels^-1.
/// Throws Error(OutOfBounds) outside the gradient domain.
MatX2 sample_gradient(const FeatureMap& map, const Vec2& uv);

/// Value and gradient in one pass; `uv` must be inside the gradient domain.
void sample_with_gradient(const FeatureMap& map, const Vec2& uv, VecX& value, MatX2& grad);

// --- PCA ------------------------------------------------------------------

struct PcaBasis {
  VecX mean;
  MatX components;  // k x D_in, orthonormal rows
  VecX eigenvalues; // k, descending
  bool rank_deficient = false;

  int input_dim() const { return static_cast<int>(mean.size()); }
  int output_dim() const { return static_cast<int>(components.rows()); }
};

/// Fewer than k nonzero eigenvalues yields zero-padded components and
/// rank_deficient = true rather than an exception.
PcaBasis fit_pca(const std::vector<VecX>& descriptors, int k);
VecX apply_pca(const PcaBasis& basis, const VecX& d);
VecX reconstruct_pca(const PcaBasis& basis, const VecX& y);

// --- Descriptor sources -----------------------------------------------------

/// Per-object surface descriptor, evaluated at object-frame points.
class DescriptorSource {
 public:
  virtual ~DescriptorSource() = default;
  virtual int dim() const = 0;
  virtual VecX describe(const Vec3& x_object) const = 0;
};

struct FieldParams {
  int dim = 32;
  int components = 64;
  /// Wavelengths are drawn from [min, max] times the length scale.
  double min_wavelength = 0.8;
  double max_wavelength = 2.5;
};

/// Smooth deterministic feature field: normalize(mixing * sin(freq * x + phase)).
class SyntheticFeatureField final : public DescriptorSource {
 public:
  SyntheticFeatureField(std::string object_id, MatX frequencies, VecX phases, MatX mixing,
                        uint64_t seed);

  static SyntheticFeatureField generate(const std::string& object_id, uint64_t seed,
                                        double length_scale, const FieldParams& params = {});

  int dim() const override { return static_cast<int>(mixing_.rows()); }
  VecX describe(const Vec3& x_object) const override;
  /// The unnormalized field mixing * sin(freq * x + phase).
  VecX raw(const Vec3& x_object) const;

  const std::string& object_id() const { return object_id_; }
  const MatX& frequencies() const { return frequencies_; }
  const VecX& phases() const { return phases_; }
  const MatX& mixing() const { return mixing_; }
  uint64_t seed() const { return seed_; }

 private:
  std::string object_id_;
  MatX frequencies_;  // m x 3
  VecX phases_;       // m
  MatX mixing_;       // D x m
  uint64_t seed_;
};

inline VecX synth_descriptor(const SyntheticFeatureField& field, const Vec3& x) {
  return field.describe(x);
}

// --- Registered features ------------------------------------------------------

struct RegisteredFeature {
  VecX descriptor;
  Vec3 point;  // object frame
  Vec2 source_pixel;
};

struct RegisteredFeatureSet {
  std::string view_id;
  std::vector<RegisteredFeature> entries;

  int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().descriptor.size()); }
};

/// Renders the mesh with the crop camera, keeps cells whose center and eight
/// neighboring centers are on the object, and lifts each kept center onto the
/// surface. Throws Error(NoVisibleSurface) when no cell survives the mask.
RegisteredFeatureSet build_registered_features(const TriangleMesh& mesh, const RigidTransform& T_CpO,
                                               const PinholeCamera& crop_cam,
                                               const DescriptorSource& source,
                                               const PcaBasis* pca = nullptr, int cell_size = 14,
                                               std::string view_id = {});

/// L2 normalization followed by optional PCA projection and renormalization,
/// the shared descriptor post-processing for registered and query features.
VecX finalize_descriptor(const VecX& d, const PcaBasis* pca);

/// Per-object PCA fitted on masked render descriptors from `n_viewpoints`
/// viewpoints spread over the sphere (Fibonacci lattice).
PcaBasis fit_object_pca(const TriangleMesh& mesh, const DescriptorSource& source, int k,
                        int n_viewpoints = 64, int crop_size = 420, int cell_size = 14);

/// Unit directions of a Fibonacci lattice on the sphere.
std::vector<Vec3> fibonacci_sphere(int n);

// --- Query maps -------------------------------------------------------------

enum class BackgroundMode { Zeros, Noise };

struct QueryObject {
  const TriangleMesh* mesh = nullptr;
  RigidTransform T_WO;
  const DescriptorSource* source = nullptr;
};

struct QueryOptions {
  BackgroundMode background = BackgroundMode::Zeros;
  uint64_t seed = 0;
  /// Fraction of cells overwritten with unit-norm noise (outlier injection).
  double corrupt_rate = 0.0;
  /// Inlier noise: surface cells become normalize(d + noise_sigma * n) with n
  /// a unit-norm random vector, mimicking an imperfect extractor.
  double noise_sigma = 0.0;
  int cell_size = 14;
};

/// Synthesizes the query map a frozen extractor would produce for this crop:
/// each cell takes the descriptor of the nearest surface under its center.
FeatureMap build_query_feature_map(const std::vector<QueryObject>& objects,
                                   const PinholeCamera& crop_cam, const RigidTransform& T_CpW,
                                   const QueryOptions& options = {});

/// Resamples a full-image map into the grid of a crop camera that shares the
/// original optical center. Cells whose ray leaves the source image are zero.
FeatureMap crop_feature_map(const FeatureMap& full, const PinholeCamera& cam, const CropCamera& crop,
                            int cell_size = 14);

/// Applies finalize_descriptor to every nonzero cell.
FeatureMap project_feature_map(const FeatureMap& map, const PcaBasis& pca);

/// Unit-norm gaussian noise vector, deterministic in (seed, key).
VecX unit_noise(int dim, uint64_t seed, uint64_t key);

// --- FMAP tensor files ------------------------------------------------------

void save_feature_tensor(const FeatureMap& map, const std::filesystem::path& path);
FeatureMap load_feature_tensor(const std::filesystem::path& path);

}  // namespace mvpose
