#include "mvpose/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "mvpose/error.hpp"
#include "mvpose/seed.hpp"

namespace mvpose {

FeatureMap::FeatureMap(int height, int width, int dim, int cell_size)
    : height_(height), width_(width), dim_(dim), cell_size_(cell_size) {
  if (height < 1 || width < 1 || dim < 1 || cell_size < 1) {
    throw Error(ErrorKind::InvalidArgument, "feature map dimensions must be positive");
  }
  data_.assign(static_cast<size_t>(height) * width * dim, 0.0f);
}

// --- Sampling -----------------------------------------------------------------

namespace {

struct GridPos {
  int x0, y0;      // top-left neighbor
  double ax, ay;   // fractional offsets in [0, 1]
};

// Grid coordinates of pixel uv: cell centers sit at integers.
Vec2 to_grid(const FeatureMap& map, const Vec2& uv) {
  return uv / map.cell_size() - Vec2::Constant(0.5);
}

int lower_index(double g, int n) {
  if (n < 2) return 0;
  return std::clamp(static_cast<int>(std::floor(g)), 0, n - 2);
}

GridPos locate(const FeatureMap& map, const Vec2& g_clamped) {
  GridPos p{};
  p.x0 = lower_index(g_clamped.x(), map.width());
  p.y0 = lower_index(g_clamped.y(), map.height());
  p.ax = map.width() < 2 ? 0.0 : g_clamped.x() - p.x0;
  p.ay = map.height() < 2 ? 0.0 : g_clamped.y() - p.y0;
  return p;
}

void corners(const FeatureMap& map, const GridPos& p, VecX& c00, VecX& c01, VecX& c10, VecX& c11) {
  const int x1 = std::min(p.x0 + 1, map.width() - 1);
  const int y1 = std::min(p.y0 + 1, map.height() - 1);
  c00 = map.cell(p.y0, p.x0).cast<double>();
  c01 = map.cell(p.y0, x1).cast<double>();
  c10 = map.cell(y1, p.x0).cast<double>();
  c11 = map.cell(y1, x1).cast<double>();
}

}  // namespace

bool in_gradient_domain(const FeatureMap& map, const Vec2& uv) {
  if (map.width() < 2 || map.height() < 2) return false;
  const Vec2 g = to_grid(map, uv);
  return g.x() >= 0.0 && g.y() >= 0.0 && g.x() <= map.width() - 1 && g.y() <= map.height() - 1;
}

VecX sample_bilinear(const FeatureMap& map, const Vec2& uv) {
  const double w = static_cast<double>(map.width()) * map.cell_size();
  const double h = static_cast<double>(map.height()) * map.cell_size();
  if (!(uv.x() >= 0.0 && uv.x() < w && uv.y() >= 0.0 && uv.y() < h)) {
    throw Error(ErrorKind::OutOfBounds, "sample outside feature map");
  }
  Vec2 g = to_grid(map, uv);
  g.x() = std::clamp(g.x(), 0.0, static_cast<double>(map.width() - 1));
  g.y() = std::clamp(g.y(), 0.0, static_cast<double>(map.height() - 1));
  const GridPos p = locate(map, g);
  VecX c00, c01, c10, c11;
  corners(map, p, c00, c01, c10, c11);
  return (1 - p.ax) * (1 - p.ay) * c00 + p.ax * (1 - p.ay) * c01 + (1 - p.ax) * p.ay * c10 +
         p.ax * p.ay * c11;
}

void sample_with_gradient(const FeatureMap& map, const Vec2& uv, VecX& value, MatX2& grad) {
  const GridPos p = locate(map, to_grid(map, uv));
  VecX c00, c01, c10, c11;
  corners(map, p, c00, c01, c10, c11);
  value = (1 - p.ax) * (1 - p.ay) * c00 + p.ax * (1 - p.ay) * c01 + (1 - p.ax) * p.ay * c10 +
          p.ax * p.ay * c11;
  const double inv_cell = 1.0 / map.cell_size();
  grad.resize(map.dim(), 2);
  grad.col(0) = ((1 - p.ay) * (c01 - c00) + p.ay * (c11 - c10)) * inv_cell;
  grad.col(1) = ((1 - p.ax) * (c10 - c00) + p.ax * (c11 - c01)) * inv_cell;
}

MatX2 sample_gradient(const FeatureMap& map, const Vec2& uv) {
  if (!in_gradient_domain(map, uv)) throw Error(ErrorKind::OutOfBounds, "gradient outside feature map");
  VecX value;
  MatX2 grad;
  sample_with_gradient(map, uv, value, grad);
  return grad;
}

// --- PCA --------------------------------------------------------------------

PcaBasis fit_pca(const std::vector<VecX>& descriptors, int k) {
  if (descriptors.empty()) throw Error(ErrorKind::InvalidArgument, "PCA needs descriptors");
  const int d = static_cast<int>(descriptors.front().size());
  if (k < 1 || k > d) throw Error(ErrorKind::InvalidArgument, "PCA output dim must be in [1, D_in]");
  if (static_cast<int>(descriptors.size()) < k) {
    throw Error(ErrorKind::InvalidArgument, "PCA needs at least k descriptors");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(descriptors.size());
  MatX x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (descriptors[i].size() != d) throw Error(ErrorKind::DimMismatch, "PCA descriptors differ in size");
    x.row(i) = descriptors[i].transpose();
  }
  PcaBasis basis;
  basis.mean = x.colwise().mean().transpose();
  x.rowwise() -= basis.mean.transpose();
  const MatX cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<MatX> eig(cov);
  // Eigen sorts ascending; take the top k from the back.
  const double top = std::max(eig.eigenvalues()(d - 1), 0.0);
  const double zero_tol = 1e-12 * std::max(top, 1e-300);
  basis.components = MatX::Zero(k, d);
  basis.eigenvalues = VecX::Zero(k);
  for (int i = 0; i < k; ++i) {
    const double lambda = eig.eigenvalues()(d - 1 - i);
    if (!(lambda > zero_tol)) {
      basis.rank_deficient = true;
      continue;
    }
    VecX v = eig.eigenvectors().col(d - 1 - i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.components.row(i) = v.transpose();
    basis.eigenvalues(i) = lambda;
  }
  return basis;
}

VecX apply_pca(const PcaBasis& basis, const VecX& d) {
  if (d.size() != basis.mean.size()) throw Error(ErrorKind::DimMismatch, "descriptor does not match PCA input dim");
  return basis.components * (d - basis.mean);
}

VecX reconstruct_pca(const PcaBasis& basis, const VecX& y) {
  return basis.components.transpose() * y + basis.mean;
}

// --- Synthetic field ------------------------------------------------------------

SyntheticFeatureField::SyntheticFeatureField(std::string object_id, MatX frequencies, VecX phases,
                                             MatX mixing, uint64_t seed)
    : object_id_(std::move(object_id)),
      frequencies_(std::move(frequencies)),
      phases_(std::move(phases)),
      mixing_(std::move(mixing)),
      seed_(seed) {
  if (frequencies_.cols() != 3 || phases_.size() != frequencies_.rows() ||
      mixing_.cols() != frequencies_.rows() || mixing_.rows() < 1) {
    throw Error(ErrorKind::DimMismatch, "inconsistent feature field shapes");
  }
}

SyntheticFeatureField SyntheticFeatureField::generate(const std::string& object_id, uint64_t seed,
                                                      double length_scale, const FieldParams& params) {
  if (params.dim < 1 || params.components < 1 || !(length_scale > 0) ||
      !(params.min_wavelength > 0) || params.max_wavelength < params.min_wavelength) {
    throw Error(ErrorKind::InvalidArgument, "bad feature field parameters");
  }
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int m = params.components;
  MatX freq(m, 3);
  VecX phase(m);
  for (int i = 0; i < m; ++i) {
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    const double wavelength =
        length_scale * (params.min_wavelength + (params.max_wavelength - params.min_wavelength) * unit(rng));
    freq.row(i) = (2.0 * std::numbers::pi / wavelength) * dir.transpose();
    phase(i) = 2.0 * std::numbers::pi * unit(rng);
  }
  MatX mixing(params.dim, m);
  for (int r = 0; r < params.dim; ++r) {
    for (int c = 0; c < m; ++c) mixing(r, c) = normal(rng) / std::sqrt(static_cast<double>(m));
  }
  return {object_id, std::move(freq), std::move(phase), std::move(mixing), seed};
}

VecX SyntheticFeatureField::raw(const Vec3& x) const {
  const VecX arg = frequencies_ * x + phases_;
  return mixing_ * arg.array().sin().matrix();
}

VecX SyntheticFeatureField::describe(const Vec3& x) const {
  VecX d = raw(x);
  const double n = d.norm();
  return n > 0 ? VecX(d / n) : d;
}

// --- Registered features ------------------------------------------------------

VecX finalize_descriptor(const VecX& d, const PcaBasis* pca) {
  const double n = d.norm();
  if (!(n > 0)) return pca ? VecX::Zero(pca->output_dim()) : d;
  VecX out = d / n;
  if (pca != nullptr) {
    out = apply_pca(*pca, out);
    const double m = out.norm();
    if (m > 0) out /= m;
  }
  return out;
}

RegisteredFeatureSet build_registered_features(const TriangleMesh& mesh, const RigidTransform& T_CpO,
                                               const PinholeCamera& crop_cam,
                                               const DescriptorSource& source, const PcaBasis* pca,
                                               int cell_size, std::string view_id) {
  if (cell_size < 1) throw Error(ErrorKind::InvalidArgument, "cell size must be positive");
  const RasterBuffer buf = rasterize({PosedMesh{&mesh, T_CpO}}, crop_cam);
  const int rows = crop_cam.height / cell_size;
  const int cols = crop_cam.width / cell_size;

  // Center pixel of every cell: the pixel containing the exact cell center.
  auto center_pixel = [&](int r, int c) {
    const Vec2 uv{(c + 0.5) * cell_size, (r + 0.5) * cell_size};
    return std::pair<int, int>{std::min(static_cast<int>(uv.y()), crop_cam.height - 1),
                               std::min(static_cast<int>(uv.x()), crop_cam.width - 1)};
  };
  std::vector<char> on_object(static_cast<size_t>(rows) * cols, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto [pr, pc] = center_pixel(r, c);
      on_object[static_cast<size_t>(r) * cols + c] = buf.depth.valid(pr, pc);
    }
  }

  RegisteredFeatureSet out;
  out.view_id = std::move(view_id);
  const RigidTransform T_OCp = T_CpO.inverse();
  for (int r = 1; r + 1 < rows; ++r) {
    for (int c = 1; c + 1 < cols; ++c) {
      bool interior = true;
      for (int dr = -1; dr <= 1 && interior; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (!on_object[static_cast<size_t>(r + dr) * cols + (c + dc)]) {
            interior = false;
            break;
          }
        }
      }
      if (!interior) continue;
      const auto [pr, pc] = center_pixel(r, c);
      const Vec2 uv{(c + 0.5) * cell_size, (r + 0.5) * cell_size};
      const Vec3 x_cam = intersect_triangle_plane(mesh, buf.triangle_at(pr, pc), T_CpO, crop_cam, uv);
      if (!x_cam.allFinite() || x_cam.z() <= 0) continue;
      const Vec3 x_obj = T_OCp * x_cam;
      // Stored at feature-tensor precision, like the query maps.
      const VecX d = finalize_descriptor(source.describe(x_obj), pca).cast<float>().cast<double>();
      out.entries.push_back({d, x_obj, uv});
    }
  }
  if (out.entries.empty()) throw Error(ErrorKind::NoVisibleSurface, "no interior patch on the object");
  return out;
}

std::vector<Vec3> fibonacci_sphere(int n) {
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(std::max(n, 0)));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return out;
}

PcaBasis fit_object_pca(const TriangleMesh& mesh, const DescriptorSource& source, int k,
                        int n_viewpoints, int crop_size, int cell_size) {
  const double radius = 0.5 * mesh_diameter(mesh);
  Vec3 center = Vec3::Zero();
  for (const Vec3& v : mesh.vertices) center += v;
  center /= static_cast<double>(mesh.vertices.size());
  const double distance = 4.0 * radius;
  const double f = 0.5 * crop_size / (kCropMargin * radius / std::sqrt(distance * distance - radius * radius));
  const PinholeCamera cam{f, f, 0.5 * crop_size, 0.5 * crop_size, crop_size, crop_size};

  std::vector<VecX> descriptors;
  for (const Vec3& dir : fibonacci_sphere(n_viewpoints)) {
    const Vec3 up = std::abs(dir.z()) > 0.99 ? Vec3::UnitY() : Vec3::UnitZ();
    const RigidTransform T_CO = look_at(center + distance * dir, center, up);
    try {
      for (auto& e : build_registered_features(mesh, T_CO, cam, source, nullptr, cell_size).entries) {
        descriptors.push_back(std::move(e.descriptor));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoVisibleSurface) throw;
    }
  }
  return fit_pca(descriptors, k);
}

// --- Query maps -------------------------------------------------------------

VecX unit_noise(int dim, uint64_t seed, uint64_t key) {
  std::mt19937_64 rng(mix_seed({seed, key}));
  std::normal_distribution<double> normal(0.0, 1.0);
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  return v / v.norm();
}

FeatureMap build_query_feature_map(const std::vector<QueryObject>& objects,
                                   const PinholeCamera& crop_cam, const RigidTransform& T_CpW,
                                   const QueryOptions& options) {
  if (objects.empty()) throw Error(ErrorKind::InvalidArgument, "query map needs at least one object");
  const int dim = objects.front().source->dim();
  for (const auto& o : objects) {
    if (o.source->dim() != dim) throw Error(ErrorKind::DimMismatch, "objects disagree on descriptor dim");
  }
  const int cell = options.cell_size;
  FeatureMap map(crop_cam.height / cell, crop_cam.width / cell, dim, cell);

  std::vector<PosedMesh> posed;
  posed.reserve(objects.size());
  for (const auto& o : objects) posed.push_back({o.mesh, compose(T_CpW, o.T_WO)});
  RasterBuffer buf;
  bool rendered = true;
  try {
    buf = rasterize(posed, crop_cam);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::FullyBehindCamera) throw;
    rendered = false;
  }

  std::mt19937_64 corrupt_rng(mix_seed({options.seed, 0xc0ffeeULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      const uint64_t key = static_cast<uint64_t>(r) * map.width() + c;
      const bool corrupt = unit(corrupt_rng) < options.corrupt_rate;
      const Vec2 uv = map.cell_center(r, c);
      if (corrupt) {
        map.set_cell(r, c, unit_noise(dim, options.seed ^ 0x5eedULL, key));
        continue;
      }
      const int pr = std::min(static_cast<int>(uv.y()), crop_cam.height - 1);
      const int pc = std::min(static_cast<int>(uv.x()), crop_cam.width - 1);
      const int m = rendered ? buf.mesh_at(pr, pc) : -1;
      if (m < 0) {
        if (options.background == BackgroundMode::Noise) map.set_cell(r, c, unit_noise(dim, options.seed, key));
        continue;
      }
      const Vec3 x_cam = intersect_triangle_plane(*posed[m].mesh, buf.triangle_at(pr, pc), posed[m].T_CO,
                                                  crop_cam, uv);
      if (!x_cam.allFinite()) continue;
      const Vec3 x_obj = posed[m].T_CO.inverse() * x_cam;
      VecX d = finalize_descriptor(objects[m].source->describe(x_obj), nullptr);
      if (options.noise_sigma > 0) {
        d += options.noise_sigma * unit_noise(dim, options.seed ^ 0x6e6f697365ULL, key);
        d.normalize();
      }
      map.set_cell(r, c, d);
    }
  }
  return map;
}

FeatureMap crop_feature_map(const FeatureMap& full, const PinholeCamera& cam, const CropCamera& crop,
                            int cell_size) {
  FeatureMap out(crop.camera.height / cell_size, crop.camera.width / cell_size, full.dim(), cell_size);
  const Mat3 r_ccp = crop.R_CpC.transpose();
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) {
      const Vec3 ray = r_ccp * unproject(crop.camera, out.cell_center(r, c), 1.0);
      if (ray.z() <= kMinDepth) continue;
      const Vec2 uv = project(cam, ray);
      if (uv.x() < 0 || uv.y() < 0 || uv.x() >= full.width() * static_cast<double>(full.cell_size()) ||
          uv.y() >= full.height() * static_cast<double>(full.cell_size())) {
        continue;
      }
      out.set_cell(r, c, sample_bilinear(full, uv));
    }
  }
  return out;
}

FeatureMap project_feature_map(const FeatureMap& map, const PcaBasis& pca) {
  if (map.dim() != pca.input_dim()) throw Error(ErrorKind::DimMismatch, "map dim does not match PCA basis");
  FeatureMap out(map.height(), map.width(), pca.output_dim(), map.cell_size());
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      const VecX d = map.cell(r, c).cast<double>();
      if (d.squaredNorm() == 0.0) continue;
      out.set_cell(r, c, finalize_descriptor(d, &pca));
    }
  }
  return out;
}

// --- FMAP files ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void save_feature_tensor(const FeatureMap& map, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(24 + map.data().size() * 4);
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(map.height()));
  put_u32(buf, static_cast<uint32_t>(map.width()));
  put_u32(buf, static_cast<uint32_t>(map.dim()));
  put_u32(buf, static_cast<uint32_t>(map.cell_size()));
  for (float f : map.data()) put_u32(buf, std::bit_cast<uint32_t>(f));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

FeatureMap load_feature_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::BadMagic, path.string() + " is not an FMAP tensor");
  }
  if (bytes.size() < 24) throw Error(ErrorKind::TruncatedFile, path.string() + ": header truncated");
  if (get_u32(p + 4) != kVersion) {
    throw Error(ErrorKind::DimMismatch, path.string() + ": unsupported FMAP version");
  }
  const uint32_t height = get_u32(p + 8);
  const uint32_t width = get_u32(p + 12);
  const uint32_t dim = get_u32(p + 16);
  const uint32_t cell = get_u32(p + 20);
  if (height == 0 || width == 0 || dim == 0 || cell == 0) {
    throw Error(ErrorKind::DimMismatch, path.string() + ": zero dimension in header");
  }
  const uint64_t count = static_cast<uint64_t>(height) * width * dim;
  const uint64_t expected = 24 + 4 * count;
  if (bytes.size() < expected) {
    throw Error(ErrorKind::TruncatedFile, path.string() + ": expected " + std::to_string(count) + " floats");
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::DimMismatch, path.string() + ": trailing bytes after tensor data");
  }
  FeatureMap map(static_cast<int>(height), static_cast<int>(width), static_cast<int>(dim), static_cast<int>(cell));
  for (uint64_t i = 0; i < count; ++i) map.data()[i] = std::bit_cast<float>(get_u32(p + 24 + 4 * i));
  return map;
}

}  // namespace mvpose
