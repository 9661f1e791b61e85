#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace blendforge {

struct KMedoidsResult {
  std::vector<int> medoids;      // ascending item indices
  Eigen::VectorXi assignment;    // medoid slot of every item
  double cost = 0.0;             // sum of distances to the assigned medoid
  std::vector<double> costHistory;  // after BUILD, then after every accepted swap
};

/// PAM (BUILD followed by best-improvement SWAP) on a symmetric distance
/// matrix. The seed only fixes the order in which equal-cost candidates are
/// visited.
KMedoidsResult k_medoids(const Eigen::MatrixXd& distances, int k, std::uint64_t seed);

/// Sum over items of the distance to the closest of `medoids`.
double medoid_cost(const Eigen::MatrixXd& distances, const std::vector<int>& medoids);

}  // namespace blendforge
