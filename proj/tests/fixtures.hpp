#pragma once
#include <chrono>
#include <random>
#include <vector>

#include "blendforge/model.hpp"
#include "blendforge/synthetic.hpp"

namespace blendforge::testing {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  double millis() const { return 1e3 * seconds(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
  return M;
}

/// Uniform on SO(3) via a normalized Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  return q.normalized().toRotationMatrix();
}

/// Rest pose followed by q - 1 random poses, and one held-out pose drawn after
/// them from the same generator.
struct QuadrupedScenario {
  synthetic::Quadruped animal;
  std::vector<TriMesh> examples;
  TriMesh heldOut;
};

inline QuadrupedScenario quadruped_scenario(const synthetic::Quadruped& animal, int q,
                                            std::uint64_t seed, double maxAngle,
                                            double heldOutAngle, double stretch = 0.1) {
  QuadrupedScenario s{animal, {animal.rest}, {}};
  std::mt19937_64 rng(seed);
  std::vector<MatrixX3d> poses;
  for (int k = 1; k < 4; ++k)
    poses.push_back(synthetic::pose_quadruped(
        animal, synthetic::random_quadruped_pose(animal, rng, maxAngle, stretch)));
  for (int k = 0; k + 1 < q; ++k) s.examples.push_back({poses[k], animal.rest.F});
  s.heldOut = {synthetic::pose_quadruped(
                   animal, synthetic::random_quadruped_pose(animal, rng, heldOutAngle, stretch)),
               animal.rest.F};
  return s;
}

inline ConstraintSet pins_from(const std::vector<int>& vertices, const MatrixX3d& pose) {
  MatrixX3d Y(static_cast<Eigen::Index>(vertices.size()), 3);
  for (std::size_t i = 0; i < vertices.size(); ++i) Y.row(i) = pose.row(vertices[i]);
  return point_constraints(vertices, Y, pose.rows());
}

/// max_i |a_i - b_i| / sqrt(area(b))
inline double max_distortion(const MatrixX3d& a, const TriMesh& reference) {
  return (a - reference.V).rowwise().norm().maxCoeff() / std::sqrt(surface_area(reference));
}

}  // namespace blendforge::testing
