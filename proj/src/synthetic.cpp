#include "blendforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include <Eigen/Geometry>

namespace blendforge::synthetic {

namespace {

// Flips faces whose normal points towards the vertex centroid. Only valid for
// star-shaped surfaces, which is all this file builds before displacement.
void orient_outward(TriMesh& mesh) {
  const Eigen::RowVector3d center = mesh.V.colwise().mean();
  for (Eigen::Index f = 0; f < mesh.F.rows(); ++f) {
    const Eigen::RowVector3d a = mesh.V.row(mesh.F(f, 0)), b = mesh.V.row(mesh.F(f, 1)),
                             c = mesh.V.row(mesh.F(f, 2));
    const Eigen::RowVector3d n = (b - a).cross(c - a);
    if (n.dot((a + b + c) / 3.0 - center) < 0) std::swap(mesh.F(f, 1), mesh.F(f, 2));
  }
}

TriMesh from_lists(const std::vector<Eigen::Vector3d>& vertices,
                   const std::vector<Eigen::Vector3i>& faces) {
  TriMesh mesh;
  mesh.V.resize(static_cast<Eigen::Index>(vertices.size()), 3);
  for (size_t i = 0; i < vertices.size(); ++i)
    mesh.V.row(static_cast<Eigen::Index>(i)) = vertices[i].transpose();
  mesh.F.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f)
    mesh.F.row(static_cast<Eigen::Index>(f)) = faces[f].transpose();
  return mesh;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Eigen::Vector3d random_normal_to(const Eigen::Vector3d& axis, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    v -= v.dot(axis) * axis;
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace

TriMesh tetrahedron() {
  const double s = 1.0 / (2.0 * std::sqrt(2.0));
  TriMesh mesh = from_lists({{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}},
                            {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
  orient_outward(mesh);
  return mesh;
}

TriMesh icosahedron() {
  const double p = std::numbers::phi;
  std::vector<Eigen::Vector3d> v = {{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0},
                                    {0, -1, p}, {0, 1, p},  {0, -1, -p}, {0, 1, -p},
                                    {p, 0, -1}, {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
  for (auto& x : v) x.normalize();
  TriMesh mesh = from_lists(
      v, {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
          {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
          {3, 8, 9},   {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}});
  orient_outward(mesh);
  return mesh;
}

TriMesh flat_grid(int nx, int ny, double spacing) {
  if (nx < 1 || ny < 1) throw Error("grid needs at least one cell per side");
  std::vector<Eigen::Vector3d> v;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) v.emplace_back(i * spacing, j * spacing, 0.0);
  std::vector<Eigen::Vector3i> f;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int a = j * (nx + 1) + i, b = a + 1, c = a + nx + 1, d = c + 1;
      f.emplace_back(a, b, d);
      f.emplace_back(a, d, c);
    }
  }
  return from_lists(v, f);
}

TriMesh icosphere(int subdivisions) {
  TriMesh mesh = icosahedron();
  std::vector<Eigen::Vector3d> v(mesh.V.rows());
  for (Eigen::Index i = 0; i < mesh.V.rows(); ++i) v[i] = mesh.V.row(i).transpose();
  std::vector<Eigen::Vector3i> faces(mesh.F.rows());
  for (Eigen::Index f = 0; f < mesh.F.rows(); ++f) faces[f] = mesh.F.row(f).transpose();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Eigen::Vector3i> next;
    for (const auto& t : faces) {
      const int ab = mid(t(0), t(1)), bc = mid(t(1), t(2)), ca = mid(t(2), t(0));
      next.emplace_back(t(0), ab, ca);
      next.emplace_back(t(1), bc, ab);
      next.emplace_back(t(2), ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    faces = std::move(next);
  }
  return from_lists(v, faces);
}

TriMesh uv_sphere(int rings, int segments, double radius) {
  if (rings < 2 || segments < 3) throw Error("uv sphere needs rings >= 2 and segments >= 3");
  std::vector<Eigen::Vector3d> v;
  v.emplace_back(0, radius, 0);
  for (int k = 1; k < rings; ++k) {
    const double theta = std::numbers::pi * k / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * s / segments;
      v.emplace_back(radius * std::sin(theta) * std::cos(phi), radius * std::cos(theta),
                     radius * std::sin(theta) * std::sin(phi));
    }
  }
  v.emplace_back(0, -radius, 0);
  const int bottom = static_cast<int>(v.size()) - 1;
  auto ring = [&](int k, int s) { return 1 + (k - 1) * segments + (s % segments); };
  std::vector<Eigen::Vector3i> f;
  for (int s = 0; s < segments; ++s) f.emplace_back(0, ring(1, s + 1), ring(1, s));
  for (int k = 1; k < rings - 1; ++k) {
    for (int s = 0; s < segments; ++s) {
      f.emplace_back(ring(k, s), ring(k, s + 1), ring(k + 1, s + 1));
      f.emplace_back(ring(k, s), ring(k + 1, s + 1), ring(k + 1, s));
    }
  }
  for (int s = 0; s < segments; ++s) f.emplace_back(bottom, ring(rings - 1, s), ring(rings - 1, s + 1));
  TriMesh mesh = from_lists(v, f);
  orient_outward(mesh);
  return mesh;
}

ArticulatedBar articulated_bar(int bones, int rings, int segments, double length, double radius) {
  if (bones < 1 || rings < bones || segments < 3) throw Error("bad articulated bar parameters");
  ArticulatedBar bar;
  bar.length = length;
  bar.radius = radius;
  std::vector<Eigen::Vector3d> v;
  for (int i = 0; i <= rings; ++i) {
    const double x = length * i / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * s / segments;
      v.emplace_back(x, radius * std::cos(phi), radius * std::sin(phi));
    }
  }
  const int start = static_cast<int>(v.size());
  v.emplace_back(0, 0, 0);
  v.emplace_back(length, 0, 0);
  auto at = [&](int i, int s) { return i * segments + (s % segments); };
  std::vector<Eigen::Vector3i> f;
  for (int i = 0; i < rings; ++i) {
    for (int s = 0; s < segments; ++s) {
      f.emplace_back(at(i, s), at(i, s + 1), at(i + 1, s + 1));
      f.emplace_back(at(i, s), at(i + 1, s + 1), at(i + 1, s));
    }
  }
  for (int s = 0; s < segments; ++s) {
    f.emplace_back(start, at(0, s), at(0, s + 1));
    f.emplace_back(start + 1, at(rings, s), at(rings, s + 1));
  }
  bar.rest = from_lists(v, f);
  orient_outward(bar.rest);

  for (int b = 0; b < bones; ++b) bar.joints.emplace_back(length * b / bones, 0, 0);
  const double h = 0.1 * length / bones;
  const Eigen::Index n = bar.rest.numVertices();
  bar.weights.setZero(n, bones);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = bar.rest.V(i, 0);
    // s[b]: how far past joint b the vertex is, smoothed over +-h.
    auto past = [&](int b) {
      if (b == 0) return 1.0;
      if (b == bones) return 0.0;
      return smoothstep((x - bar.joints[b].x() + h) / (2.0 * h));
    };
    for (int b = 0; b < bones; ++b) bar.weights(i, b) = past(b) - past(b + 1);
  }
  return bar;
}

MatrixX3d pose_bar(const ArticulatedBar& bar, const std::vector<Eigen::Matrix3d>& rotations) {
  const int bones = static_cast<int>(bar.joints.size());
  if (static_cast<int>(rotations.size()) != bones) throw Error("one rotation per bone expected");
  std::vector<Eigen::Matrix3d> A(bones);
  std::vector<Eigen::Vector3d> t(bones);
  Eigen::Matrix3d parentA = Eigen::Matrix3d::Identity();
  Eigen::Vector3d parentT = Eigen::Vector3d::Zero();
  for (int b = 0; b < bones; ++b) {
    A[b] = parentA * rotations[b];
    t[b] = parentA * (bar.joints[b] - rotations[b] * bar.joints[b]) + parentT;
    parentA = A[b];
    parentT = t[b];
  }
  MatrixX3d out = MatrixX3d::Zero(bar.rest.numVertices(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Eigen::Vector3d v = bar.rest.V.row(i).transpose();
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    for (int b = 0; b < bones; ++b) p += bar.weights(i, b) * (A[b] * v + t[b]);
    out.row(i) = p.transpose();
  }
  return out;
}

std::vector<Eigen::Matrix3d> random_bar_rotations(const ArticulatedBar& bar, std::mt19937_64& rng,
                                                  double maxAngle) {
  std::uniform_real_distribution<double> angle(-maxAngle, maxAngle);
  std::vector<Eigen::Matrix3d> out;
  for (size_t b = 0; b < bar.joints.size(); ++b) {
    const Eigen::Vector3d axis = random_normal_to(Eigen::Vector3d::UnitX(), rng);
    out.push_back(Eigen::AngleAxisd(angle(rng), axis).toRotationMatrix());
  }
  return out;
}

std::vector<MatrixX3d> sphere_blend_poses(const TriMesh& sphere, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.75, 1.3), twist(-0.6, 0.6);
  std::vector<MatrixX3d> poses{sphere.V};
  for (int l = 1; l < count; ++l) {
    const Eigen::Vector3d s(scale(rng), scale(rng), scale(rng));
    const double tau = twist(rng);
    MatrixX3d P(sphere.V.rows(), 3);
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      const Eigen::Vector3d v = s.cwiseProduct(sphere.V.row(i).transpose());
      P.row(i) = (Eigen::AngleAxisd(tau * v.y(), Eigen::Vector3d::UnitY()) * v).transpose();
    }
    poses.push_back(std::move(P));
  }
  return poses;
}

namespace {

struct LimbShape {
  Eigen::Vector3d attach;  // direction on the unit sphere
  Eigen::Vector3d axis;
  double width;            // angular radius of the protrusion
  double length;
};

std::vector<LimbShape> limb_shapes() {
  std::vector<LimbShape> limbs;
  for (const auto& [sx, sy] : {std::pair{1, 1}, {1, -1}, {-1, 1}, {-1, -1}})
    limbs.push_back({Eigen::Vector3d(0.55 * sx, 0.5 * sy, -0.7).normalized(),
                     Eigen::Vector3d(0.1 * sx, 0.1 * sy, -1).normalized(), 0.42, 0.65});
  limbs.push_back({Eigen::Vector3d(1, 0, 0.35).normalized(), Eigen::Vector3d(1, 0, 0.5).normalized(),
                   0.5, 0.5});
  limbs.push_back({Eigen::Vector3d(-1, 0, 0.25).normalized(),
                   Eigen::Vector3d(-1, 0, 0.4).normalized(), 0.3, 0.6});
  return limbs;
}

}  // namespace

Quadruped make_quadruped(int rings, int segments) {
  const TriMesh sphere = uv_sphere(rings, segments);
  const Eigen::Vector3d body(1.2, 0.5, 0.5);
  const auto limbs = limb_shapes();
  const Eigen::Index n = sphere.numVertices();

  Quadruped animal;
  animal.rest.F = sphere.F;
  animal.rest.V.resize(n, 3);
  animal.weights.setZero(n, 1 + kLimbCount);
  animal.joints.push_back(Eigen::Vector3d::Zero());
  animal.axes.push_back(Eigen::Vector3d::Zero());
  for (const auto& limb : limbs) {
    animal.joints.push_back(body.cwiseProduct(limb.attach) + 0.15 * limb.length * limb.axis);
    animal.axes.push_back(limb.axis);
  }

  std::vector<double> tipAngle(kLimbCount, 10.0);
  animal.legTips.assign(4, 0);
  std::vector<int> tips(kLimbCount, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d u = sphere.V.row(i).transpose();
    Eigen::Vector3d p = body.cwiseProduct(u);
    double limbWeight = 0.0;
    for (int l = 0; l < kLimbCount; ++l) {
      const double a = std::acos(std::clamp(u.dot(limbs[l].attach), -1.0, 1.0));
      const double t = 1.0 - a / limbs[l].width;
      p += limbs[l].axis * limbs[l].length * smoothstep(t);
      const double w = smoothstep(t / 0.6);
      animal.weights(i, 1 + l) = w;
      limbWeight += w;
      if (a < tipAngle[l]) {
        tipAngle[l] = a;
        tips[l] = static_cast<int>(i);
      }
    }
    animal.weights(i, 0) = 1.0 - limbWeight;
    animal.rest.V.row(i) = p.transpose();
  }
  animal.legTips.assign(tips.begin(), tips.begin() + 4);
  animal.features = tips;
  for (const Eigen::Vector3d& dir : {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(0, 0, -1)}) {
    Eigen::Index best = 0;
    (sphere.V * dir).maxCoeff(&best);
    animal.features.push_back(static_cast<int>(best));
  }
  return animal;
}

QuadrupedPose random_quadruped_pose(const Quadruped& animal, std::mt19937_64& rng, double maxAngle,
                                    double stretch) {
  std::uniform_real_distribution<double> angle(-maxAngle, maxAngle);
  QuadrupedPose pose;
  for (int l = 0; l < kLimbCount; ++l) {
    const Eigen::Vector3d axis = random_normal_to(animal.axes[1 + l], rng);
    const double theta = angle(rng);
    pose.rotations.push_back(Eigen::AngleAxisd(theta, axis).toRotationMatrix());
    pose.stretch.push_back(1.0 + (maxAngle > 0 ? stretch * std::abs(theta) / maxAngle : 0.0));
  }
  return pose;
}

MatrixX3d pose_quadruped(const Quadruped& animal, const QuadrupedPose& pose) {
  if (static_cast<int>(pose.rotations.size()) != kLimbCount ||
      static_cast<int>(pose.stretch.size()) != kLimbCount)
    throw Error("quadruped pose needs one rotation and stretch per limb");
  std::vector<Eigen::Matrix3d> A(kLimbCount);
  for (int l = 0; l < kLimbCount; ++l) {
    const Eigen::Vector3d& d = animal.axes[1 + l];
    A[l] = pose.rotations[l] *
           (Eigen::Matrix3d::Identity() + (pose.stretch[l] - 1.0) * d * d.transpose());
  }
  MatrixX3d out(animal.rest.numVertices(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Eigen::Vector3d v = animal.rest.V.row(i).transpose();
    Eigen::Vector3d p = animal.weights(i, 0) * v;
    for (int l = 0; l < kLimbCount; ++l) {
      const double w = animal.weights(i, 1 + l);
      if (w == 0.0) continue;
      const Eigen::Vector3d& j = animal.joints[1 + l];
      p += w * (A[l] * (v - j) + j);
    }
    out.row(i) = p.transpose();
  }
  return out;
}

ScanData make_partial_scan(const TriMesh& full, std::span<const int> keep, double keepRadius,
                           double removeFraction, std::uint64_t seed) {
  const MeshGraph graph = build_graph(full);
  const int n = static_cast<int>(full.numVertices());
  std::vector<char> known(n, 0), removed(n, 0);
  for (int k : keep)
    for (int v : geodesic_ball(graph, k, keepRadius)) known[v] = 1;

  const int target = static_cast<int>(std::lround(removeFraction * n));
  const double patch = 0.25 * std::sqrt(surface_area(full));
  std::mt19937_64 rng(seed);
  int count = 0;
  while (count < target) {
    std::vector<int> candidates;
    for (int i = 0; i < n; ++i)
      if (!known[i] && !removed[i]) candidates.push_back(i);
    if (candidates.empty()) break;
    const int start = candidates[std::uniform_int_distribution<size_t>(0, candidates.size() - 1)(rng)];
    const Eigen::VectorXd dist = graph_distances(graph, start, patch);
    std::vector<int> ball;
    for (int i = 0; i < n; ++i)
      if (std::isfinite(dist(i)) && !known[i] && !removed[i]) ball.push_back(i);
    std::sort(ball.begin(), ball.end(), [&](int a, int b) {
      return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
    });
    for (int v : ball) {
      if (count >= target) break;
      removed[v] = 1;
      ++count;
    }
  }

  ScanData scan;
  std::vector<int> newIndex(n, -1);
  std::vector<Eigen::Vector3i> faces;
  for (Eigen::Index f = 0; f < full.F.rows(); ++f) {
    const Eigen::Vector3i t = full.F.row(f).transpose();
    if (removed[t(0)] || removed[t(1)] || removed[t(2)]) continue;
    faces.push_back(t);
    for (int c = 0; c < 3; ++c) newIndex[t(c)] = 0;
  }
  for (int i = 0; i < n; ++i) {
    if (newIndex[i] < 0) continue;
    newIndex[i] = static_cast<int>(scan.originalIndex.size());
    scan.originalIndex.push_back(i);
    scan.knownRegion.push_back(known[i]);
  }
  scan.mesh.V.resize(static_cast<Eigen::Index>(scan.originalIndex.size()), 3);
  for (size_t i = 0; i < scan.originalIndex.size(); ++i)
    scan.mesh.V.row(static_cast<Eigen::Index>(i)) = full.V.row(scan.originalIndex[i]);
  scan.mesh.F.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t f = 0; f < faces.size(); ++f)
    for (int c = 0; c < 3; ++c)
      scan.mesh.F(static_cast<Eigen::Index>(f), c) = newIndex[faces[f](c)];
  return scan;
}

}  // namespace blendforge::synthetic
