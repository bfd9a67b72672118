#include "mvpose/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <Eigen/SVD>

#include "mvpose/error.hpp"
#include "mvpose/seed.hpp"

namespace mvpose {

namespace {

constexpr int kPlacementAttempts = 1000;
constexpr int kMeshAttempts = 100;
constexpr double kAsymmetryFrac = 0.05;
constexpr double kJitterDeg = 10.0;
constexpr double kDecoyMaxScore = 0.3;
constexpr double kMinSpacing = 0.7;

enum Stream : uint64_t { kMesh = 1, kField = 2, kQuery = 3, kPlace = 4, kCamera = 5, kCandidate = 6, kDecoy = 7 };

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 d;
  do {
    d = Vec3(n(rng), n(rng), n(rng));
  } while (d.norm() < 1e-12);
  return d.normalized();
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-12);
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

std::string indexed(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02d", prefix, i);
  return buf;
}

// Rotation R minimizing sum |R a_i - b_i|^2.
Mat3 kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < a.size(); ++i) h += a[i] * b[i].transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1.0;
  return svd.matrixV() * d * svd.matrixU().transpose();
}

// Projected convex silhouettes of every object pair are disjoint in every
// view: separating-axis test over all point-pair directions of either set.
bool silhouettes_disjoint(const SynthScene& s) {
  for (const SceneCamera& cam : s.scene.cameras) {
    std::vector<std::vector<Vec2>> pts;
    for (const SceneObject& o : s.scene.objects) {
      const RigidTransform T_CO = compose(cam.T_CW, s.gt_poses.at(o.object_id));
      std::vector<Vec2> p;
      for (const Vec3& v : o.mesh.vertices) {
        const Vec3 x = T_CO * v;
        if (x.z() <= kMinDepth) return false;
        p.push_back(x.head<2>() / x.z());
      }
      pts.push_back(std::move(p));
    }
    const auto separated_along = [&](const std::vector<Vec2>& a, const std::vector<Vec2>& b, const Vec2& n) {
      double lo_a = INFINITY, hi_a = -INFINITY, lo_b = INFINITY, hi_b = -INFINITY;
      for (const Vec2& p : a) lo_a = std::min(lo_a, n.dot(p)), hi_a = std::max(hi_a, n.dot(p));
      for (const Vec2& p : b) lo_b = std::min(lo_b, n.dot(p)), hi_b = std::max(hi_b, n.dot(p));
      return hi_a < lo_b || hi_b < lo_a;
    };
    for (size_t a = 0; a < pts.size(); ++a) {
      for (size_t b = a + 1; b < pts.size(); ++b) {
        bool split = false;
        for (const std::vector<Vec2>* set : {&pts[a], &pts[b]}) {
          for (size_t i = 0; i < set->size() && !split; ++i) {
            for (size_t j = i + 1; j < set->size() && !split; ++j) {
              const Vec2 e = (*set)[j] - (*set)[i];
              split = separated_along(pts[a], pts[b], Vec2(-e.y(), e.x()));
            }
          }
        }
        if (!split) return false;
      }
    }
  }
  return true;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_views < 1) throw Error(ErrorKind::InvalidArgument, "n_views must be >= 1");
  if (n_objects < 1) throw Error(ErrorKind::InvalidArgument, "n_objects must be >= 1");
  if (perturb_rot_deg < 0 || perturb_trans_frac < 0 || decoy_rate < 0) {
    throw Error(ErrorKind::InvalidArgument, "noise magnitudes must be >= 0");
  }
  if (query_noise < 0) throw Error(ErrorKind::InvalidArgument, "query_noise must be >= 0");
  if (corrupt_rate < 0 || corrupt_rate > 1) throw Error(ErrorKind::InvalidArgument, "corrupt_rate must be in [0, 1]");
  if (!(axis_jitter >= 0 && axis_jitter < 1)) throw Error(ErrorKind::InvalidArgument, "axis_jitter must be in [0, 1)");
  if (min_vertices < 4 || max_vertices < min_vertices) {
    throw Error(ErrorKind::InvalidArgument, "vertex count range must satisfy 4 <= min <= max");
  }
  if (feature_dim < 1 || feature_components < 1) throw Error(ErrorKind::InvalidArgument, "feature sizes must be >= 1");
  if (!(camera_ring_radius > 0) || !(object_radius > 0) || !(focal > 0) || !(field_scale_frac > 0)) {
    throw Error(ErrorKind::InvalidArgument, "lengths must be positive");
  }
  if (image_width < 1 || image_height < 1 || full_map_cell_size < 1) {
    throw Error(ErrorKind::InvalidArgument, "image and cell sizes must be positive");
  }
}

TriangleMesh random_convex_mesh(const std::string& object_id, uint64_t seed, int n_vertices, const Vec3& radii) {
  if (n_vertices < 4) throw Error(ErrorKind::InvalidArgument, "a polyhedron needs at least 4 vertices");
  std::mt19937_64 rng(seed);
  TriangleMesh mesh;
  mesh.object_id = object_id;
  // Dart throwing on the unit sphere with a minimum chord spacing keeps faces
  // of comparable size.
  const double spacing = kMinSpacing * std::sqrt(4.0 * std::numbers::pi / n_vertices);
  std::vector<Vec3> dirs;
  while (static_cast<int>(dirs.size()) < n_vertices) {
    dirs.clear();
    for (int tries = 0; tries < 100 * n_vertices && static_cast<int>(dirs.size()) < n_vertices; ++tries) {
      const Vec3 d = random_direction(rng);
      if (std::all_of(dirs.begin(), dirs.end(), [&](const Vec3& e) { return (d - e).norm() >= spacing; })) {
        dirs.push_back(d);
      }
    }
  }
  for (const Vec3& d : dirs) mesh.vertices.push_back(d.cwiseProduct(radii));
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& v : mesh.vertices) centroid += v;
  centroid /= n_vertices;
  for (Vec3& v : mesh.vertices) v -= centroid;

  const int n = n_vertices;
  const double tol = 1e-9 * radii.maxCoeff() * radii.maxCoeff() * radii.maxCoeff();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        const Vec3& a = mesh.vertices[i];
        const Vec3 normal = (mesh.vertices[j] - a).cross(mesh.vertices[k] - a);
        int above = 0, below = 0;
        for (int m = 0; m < n && !(above && below); ++m) {
          if (m == i || m == j || m == k) continue;
          const double s = normal.dot(mesh.vertices[m] - a);
          if (s > tol) ++above;
          if (s < -tol) ++below;
        }
        if (above && below) continue;
        if (above) {
          mesh.triangles.push_back({i, k, j});
        } else {
          mesh.triangles.push_back({i, j, k});
        }
      }
    }
  }
  mesh.validate();
  return mesh;
}

double symmetry_alignment_error(const TriangleMesh& mesh) {
  const auto& v = mesh.vertices;
  const int n = static_cast<int>(v.size());
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : v) centroid += p;
  centroid /= n;
  std::vector<Vec3> c;
  for (const Vec3& p : v) c.push_back(p - centroid);

  // Base triple: vertex 0, the vertex farthest from it, and the vertex
  // spanning the largest triangle with those two.
  const int a = 0;
  int b = 1;
  for (int i = 1; i < n; ++i) {
    if ((c[i] - c[a]).norm() > (c[b] - c[a]).norm()) b = i;
  }
  int tri = -1;
  double best_area = -1.0;
  for (int i = 0; i < n; ++i) {
    const double area = (c[b] - c[a]).cross(c[i] - c[a]).norm();
    if (area > best_area) {
      best_area = area;
      tri = i;
    }
  }

  double best = std::numeric_limits<double>::infinity();
  const std::vector<Vec3> base{c[a], c[b], c[tri], Vec3::Zero()};
  std::vector<int> perm(n);
  std::vector<Vec3> src(n), dst(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      for (int k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        const Mat3 r0 = kabsch(base, {c[i], c[j], c[k], Vec3::Zero()});
        bool identity = true;
        for (int m = 0; m < n; ++m) {
          const Vec3 q = r0 * c[m];
          int nn = 0;
          for (int t = 1; t < n; ++t) {
            if ((c[t] - q).squaredNorm() < (c[nn] - q).squaredNorm()) nn = t;
          }
          perm[m] = nn;
          identity = identity && nn == m;
        }
        if (identity) continue;
        for (int m = 0; m < n; ++m) {
          src[m] = c[m];
          dst[m] = c[perm[m]];
        }
        const Mat3 r = kabsch(src, dst);
        double worst = 0.0;
        for (int m = 0; m < n; ++m) worst = std::max(worst, (r * src[m] - dst[m]).norm());
        best = std::min(best, worst);
      }
    }
  }
  return best;
}

RigidTransform perturb_pose(const RigidTransform& T, double rot_deg, double trans, uint64_t seed) {
  if (rot_deg < 0 || trans < 0) throw Error(ErrorKind::InvalidArgument, "perturbation magnitudes must be >= 0");
  std::mt19937_64 rng(mix_seed(seed));
  const Vec3 axis = random_direction(rng);
  const Vec3 dir = random_direction(rng);
  Twist rot;
  rot.omega = axis * (rot_deg * std::numbers::pi / 180.0);
  const Mat3 dR = exp_se3(rot).rotation();
  return {dR * T.rotation(), T.translation() + trans * dir};
}

DescriptorSources SynthScene::sources() const {
  DescriptorSources out;
  for (const auto& [id, field] : fields) out[id] = &field;
  return out;
}

QueryOptions SynthScene::query_options(const std::string& view_id, int cell_size) const {
  int index = 0;
  while (index < static_cast<int>(scene.cameras.size()) && scene.cameras[index].view_id != view_id) ++index;
  if (index == static_cast<int>(scene.cameras.size())) {
    throw Error(ErrorKind::UnknownView, "unknown view '" + view_id + "'");
  }
  QueryOptions opt;
  opt.background = spec.background;
  opt.seed = mix_seed({spec.seed, kQuery, static_cast<uint64_t>(index)});
  opt.corrupt_rate = index == spec.corrupt_view ? 1.0 : spec.corrupt_rate;
  opt.noise_sigma = spec.query_noise;
  opt.cell_size = cell_size;
  return opt;
}

FeatureMap render_query(const SynthScene& scene, const std::string& view_id, const PinholeCamera& cam,
                        const RigidTransform& T_CW, int cell_size) {
  std::vector<QueryObject> objects;
  for (const SceneObject& o : scene.scene.objects) {
    objects.push_back({&o.mesh, scene.gt_poses.at(o.object_id), &scene.fields.at(o.object_id)});
  }
  return build_query_feature_map(objects, cam, T_CW, scene.query_options(view_id, cell_size));
}

FeatureMap SyntheticQueryProvider::query(const SceneCamera& view, const CropCamera& crop, int cell_size) const {
  return render_query(scene_, view.view_id, crop.camera, crop.T_CpW, cell_size);
}

SynthScene generate(const SynthSpec& spec) {
  spec.validate();
  SynthScene out;
  out.spec = spec;
  const auto seed_of = [&](Stream s, uint64_t i, uint64_t j = 0) { return mix_seed({spec.seed, s, i, j}); };

  for (int o = 0; o < spec.n_objects; ++o) {
    SceneObject obj;
    obj.object_id = indexed("obj", o);
    obj.mesh_path = obj.object_id + ".obj";
    bool ok = false;
    for (int attempt = 0; attempt < kMeshAttempts && !ok; ++attempt) {
      std::mt19937_64 rng(seed_of(kMesh, o, attempt));
      const int nv = std::uniform_int_distribution<int>(spec.min_vertices, spec.max_vertices)(rng);
      const Vec3 radii(spec.object_radius * uniform(rng, 1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter), spec.object_radius * uniform(rng, 1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter),
                       spec.object_radius * uniform(rng, 1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter));
      obj.mesh = random_convex_mesh(obj.object_id, rng(), nv, radii);
      obj.diameter = mesh_diameter(obj.mesh);
      ok = symmetry_alignment_error(obj.mesh) > kAsymmetryFrac * obj.diameter;
    }
    if (!ok) throw Error(ErrorKind::PlacementFailure, "no asymmetric mesh for " + obj.object_id);
    FieldParams fp;
    fp.dim = spec.feature_dim;
    fp.components = spec.feature_components;
    fp.min_wavelength = spec.field_min_wavelength;
    fp.max_wavelength = spec.field_max_wavelength;
    out.fields.emplace(obj.object_id, SyntheticFeatureField::generate(obj.object_id, seed_of(kField, o),
                                                                      spec.field_scale_frac * obj.diameter, fp));
    out.scene.objects.push_back(std::move(obj));
  }

  const double w = spec.workspace_half_extent;
  const double elev = spec.camera_elevation_deg * std::numbers::pi / 180.0;
  bool separated = false;
  for (int layout = 0; layout < kPlacementAttempts && !separated; ++layout) {
    out.gt_poses.clear();
    out.scene.cameras.clear();
    std::vector<Aabb3> placed;
    for (int o = 0; o < spec.n_objects; ++o) {
      const SceneObject& obj = out.scene.objects[o];
      std::mt19937_64 rng(seed_of(kPlace, o, layout));
      bool ok = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
        const Mat3 r = random_rotation(rng);
        const Vec3 t(uniform(rng, -w, w), uniform(rng, -w, w), 0.0);
        const RigidTransform T_WO(r, t);
        const Aabb3 box = aabb_world(obj.mesh, T_WO);
        ok = std::none_of(placed.begin(), placed.end(), [&](const Aabb3& p) {
          return ((box.max.cwiseMin(p.max) - box.min.cwiseMax(p.min)).array() > 0).all();
        });
        if (ok) {
          placed.push_back(box);
          out.gt_poses[obj.object_id] = T_WO;
        }
      }
      if (!ok) {
        throw Error(ErrorKind::PlacementFailure, "could not place " + obj.object_id + " after " +
                                                     std::to_string(kPlacementAttempts) + " attempts");
      }
    }

    Vec3 centroid = Vec3::Zero();
    for (const auto& [id, T] : out.gt_poses) centroid += T.translation();
    centroid /= static_cast<double>(out.gt_poses.size());
    for (int v = 0; v < spec.n_views; ++v) {
      std::mt19937_64 rng(seed_of(kCamera, v));
      const double az = 2.0 * std::numbers::pi * v / spec.n_views +
                        uniform(rng, -kJitterDeg, kJitterDeg) * std::numbers::pi / 180.0;
      const double ring = spec.camera_ring_radius;
      const Vec3 eye = centroid + Vec3(ring * std::cos(az), ring * std::sin(az), ring * std::tan(elev));
      SceneCamera cam;
      cam.view_id = "view_" + std::to_string(v);
      cam.camera = PinholeCamera{spec.focal, spec.focal, spec.image_width / 2.0, spec.image_height / 2.0,
                                 spec.image_width, spec.image_height};
      cam.T_CW = look_at(eye, centroid);
      out.scene.cameras.push_back(cam);
    }
    separated = silhouettes_disjoint(out);
  }
  if (!separated) {
    throw Error(ErrorKind::PlacementFailure,
                "no occlusion-free layout after " + std::to_string(kPlacementAttempts) + " attempts");
  }

  for (int o = 0; o < spec.n_objects; ++o) {
    const SceneObject& obj = out.scene.objects[o];
    const RigidTransform& gt = out.gt_poses.at(obj.object_id);
    const double max_trans = spec.perturb_trans_frac * obj.diameter;
    for (int v = 0; v < spec.n_views; ++v) {
      const SceneCamera& cam = out.scene.cameras[v];
      std::mt19937_64 rng(seed_of(kCandidate, o, v));
      const double u_rot = uniform(rng, 0.0, 1.0);
      const double u_trans = uniform(rng, 0.0, 1.0);
      const RigidTransform T =
          perturb_pose(gt, u_rot * spec.perturb_rot_deg, u_trans * max_trans, rng());
      double penalty = 0.0;
      if (spec.perturb_rot_deg > 0) penalty += 0.5 * u_rot;
      if (max_trans > 0) penalty += 0.5 * u_trans;
      out.candidates.push_back({obj.object_id, cam.view_id, compose(cam.T_CW, T), 1.0 - penalty});
      out.decoy.push_back(false);
    }
  }

  const int n_decoys = static_cast<int>(std::lround(spec.decoy_rate * static_cast<double>(out.candidates.size())));
  for (int d = 0; d < n_decoys; ++d) {
    std::mt19937_64 rng(seed_of(kDecoy, d));
    const int o = std::uniform_int_distribution<int>(0, spec.n_objects - 1)(rng);
    const int v = std::uniform_int_distribution<int>(0, spec.n_views - 1)(rng);
    const Mat3 r = random_rotation(rng);
    const Vec3 t(uniform(rng, -w, w), uniform(rng, -w, w), 0.0);
    const SceneCamera& cam = out.scene.cameras[v];
    out.candidates.push_back({out.scene.objects[o].object_id, cam.view_id, compose(cam.T_CW, RigidTransform(r, t)),
                              uniform(rng, 0.0, kDecoyMaxScore)});
    out.decoy.push_back(true);
  }

  if (spec.full_query_maps) {
    for (const SceneCamera& cam : out.scene.cameras) {
      out.query_maps.emplace(cam.view_id,
                             render_query(out, cam.view_id, cam.camera, cam.T_CW, spec.full_map_cell_size));
    }
  }
  return out;
}

}  // namespace mvpose
