#pragma once

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>
#include <sys/wait.h>

#include "mvpose/geometry.hpp"
#include "mvpose/mesh_render.hpp"

namespace testutil {

namespace fs = std::filesystem;
using mvpose::Vec3;

inline fs::path tmp_dir(const std::string& name) {
  fs::path p = fs::path(MVPOSE_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr
};

/// Runs the CLI with `args` (already shell-quoted where needed).
inline RunResult run_cli_line(const std::string& args) {
  const std::string cmd = std::string(MVPOSE_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline RunResult run_cli(const std::vector<std::string>& args) {
  std::string line;
  for (const std::string& a : args) {
    std::string q = "'";
    for (char c : a) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    line += (line.empty() ? "" : " ") + q + "'";
  }
  return run_cli_line(line);
}

/// Byte contents of every regular file below `root`, keyed by relative path.
inline std::string tree_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  std::ostringstream os;
  for (const fs::path& f : files) os << f.string() << "\n" << slurp(root / f) << "\n";
  return os.str();
}

inline mvpose::TriangleMesh unit_cube(double half = 0.5) {
  mvpose::TriangleMesh m;
  m.object_id = "cube";
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({(i & 1) ? half : -half, (i & 2) ? half : -half, (i & 4) ? half : -half});
  }
  // outward-facing quads split into triangles
  const int q[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : q) {
    m.triangles.push_back({f[0], f[1], f[2]});
    m.triangles.push_back({f[0], f[2], f[3]});
  }
  return m;
}

inline mvpose::RigidTransform random_pose(std::mt19937_64& rng, double trans = 1.0) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return {q.toRotationMatrix(), Vec3(n(rng), n(rng), n(rng)) * trans};
}

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace testutil
