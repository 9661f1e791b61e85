#pragma once

#include <vector>

#include "blendforge/laplacian.hpp"

namespace blendforge {

struct WeightedEdge {
  int i;
  int j;
  double weight;
};

/// Rotation clusters: vertex labels and, per cluster, the directed edges whose
/// deformation is measured against that cluster's rotation.
struct RotationClusters {
  Eigen::VectorXi vertexCluster;
  std::vector<std::vector<WeightedEdge>> edgeSets;

  int size() const { return static_cast<int>(edgeSets.size()); }
};

/// Spokes-and-rims edge sets: cluster k receives every edge of each triangle
/// with at least one vertex labelled k, weighted by that triangle's clamped
/// half-cotangent. Labels must lie in [0, r).
RotationClusters spokes_and_rims_clusters(const TriMesh& mesh,
                                          const Eigen::VectorXi& vertexCluster, int r);

/// L = sum_k A_k C_k A_k^T and K (3r x n) stacking V^T A_k C_k A_k^T.
struct ArapOperators {
  SparseMatrix L;
  SparseMatrix K;
};

SparseMatrix arap_laplacian(const RotationClusters& clusters, Eigen::Index n);

/// K for the given vertex positions; the edge weights come from `clusters`, so
/// the same clusters can be evaluated against several example poses.
SparseMatrix arap_covariance_operator(const MatrixX3d& V, const RotationClusters& clusters);

ArapOperators arap_precompute(const TriMesh& mesh, const RotationClusters& clusters);

}  // namespace blendforge
