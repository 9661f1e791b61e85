#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "blendforge/mesh.hpp"

namespace blendforge::synthetic {

/// Regular tetrahedron with unit edges.
TriMesh tetrahedron();

/// Regular icosahedron on the unit sphere.
TriMesh icosahedron();

/// (nx+1) x (ny+1) vertex grid in the z = 0 plane, normals along +z.
TriMesh flat_grid(int nx, int ny, double spacing = 1.0);

/// Unit sphere by midpoint subdivision of the icosahedron;
/// 10 * 4^k + 2 vertices.
TriMesh icosphere(int subdivisions);

/// Latitude-longitude sphere with poles on the y axis;
/// (rings - 1) * segments + 2 vertices.
TriMesh uv_sphere(int rings, int segments, double radius = 1.0);

// --- articulated bar ---------------------------------------------------------

/// Closed tube along +x split into bones with smooth weights at the joints.
struct ArticulatedBar {
  TriMesh rest;
  Eigen::MatrixXd weights;              // n x bones, rows sum to one
  std::vector<Eigen::Vector3d> joints;  // joints[b] is where bone b hinges on bone b-1
  double length = 1.0;
  double radius = 0.1;
};

ArticulatedBar articulated_bar(int bones, int rings, int segments, double length = 1.0,
                               double radius = 0.1);

/// Forward kinematics: bone b rotates by rotations[b] about joints[b] on top
/// of its parent, blended with the bar weights.
MatrixX3d pose_bar(const ArticulatedBar& bar, const std::vector<Eigen::Matrix3d>& rotations);

/// Bend angles uniform in [-maxAngle, maxAngle] about random axes normal to x.
std::vector<Eigen::Matrix3d> random_bar_rotations(const ArticulatedBar& bar, std::mt19937_64& rng,
                                                  double maxAngle);

// --- sphere blends -----------------------------------------------------------

/// Pose 0 is the input; the others apply random anisotropic scaling and a
/// twist about y.
std::vector<MatrixX3d> sphere_blend_poses(const TriMesh& sphere, int count, std::uint64_t seed);

// --- four-legged animal ------------------------------------------------------

inline constexpr int kLimbCount = 6;  // four legs, head, tail

/// Ellipsoidal body with six smooth protrusions. Bone 0 is the body, bones
/// 1-4 the legs, 5 the head and 6 the tail.
struct Quadruped {
  TriMesh rest;
  Eigen::MatrixXd weights;              // n x 7
  std::vector<Eigen::Vector3d> joints;  // per bone (body: centroid)
  std::vector<Eigen::Vector3d> axes;    // per bone, unit (body: zero)
  std::vector<int> legTips;             // 4 vertices
  std::vector<int> features;            // leg tips, head tip, tail tip, back, belly
};

Quadruped make_quadruped(int rings, int segments);

struct QuadrupedPose {
  std::vector<Eigen::Matrix3d> rotations;  // per limb
  std::vector<double> stretch;             // per limb, along its axis
};

/// Random limb bends up to maxAngle; each limb also lengthens by
/// stretch * |angle| / maxAngle.
QuadrupedPose random_quadruped_pose(const Quadruped& animal, std::mt19937_64& rng, double maxAngle,
                                    double stretch);

/// Linear blend skinning of the limb transforms.
MatrixX3d pose_quadruped(const Quadruped& animal, const QuadrupedPose& pose);

// --- partial scans -----------------------------------------------------------

struct ScanData {
  TriMesh mesh;
  std::vector<int> originalIndex;  // scan vertex -> source vertex
  std::vector<char> knownRegion;   // scan vertex lies in a protected ball
};

/// Cuts geodesic patches out of `full` until `removeFraction` of its vertices
/// are gone, never touching the balls of radius `keepRadius` around `keep`.
/// Unreferenced vertices are dropped and the rest re-indexed.
ScanData make_partial_scan(const TriMesh& full, std::span<const int> keep, double keepRadius,
                           double removeFraction, std::uint64_t seed);

}  // namespace blendforge::synthetic
