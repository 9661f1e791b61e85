#include "blendforge/arap.hpp"

#include <algorithm>

namespace blendforge {

RotationClusters spokes_and_rims_clusters(const TriMesh& mesh,
                                          const Eigen::VectorXi& vertexCluster, int r) {
  if (vertexCluster.size() != mesh.numVertices())
    throw Error("cluster labels do not match vertex count");
  RotationClusters out;
  out.vertexCluster = vertexCluster;
  out.edgeSets.resize(r);
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) {
    const Eigen::Vector3d w = corner_edge_weights(mesh, f);
    int labels[3];
    for (int c = 0; c < 3; ++c) {
      labels[c] = vertexCluster(mesh.F(f, c));
      if (labels[c] < 0 || labels[c] >= r) throw Error("cluster label out of range");
    }
    for (int c = 0; c < 3; ++c) {
      const int k = labels[c];
      if (std::find(labels, labels + c, k) != labels + c) continue;
      for (int e = 0; e < 3; ++e) {
        if (w(e) == 0.0) continue;
        out.edgeSets[k].push_back({mesh.F(f, (e + 1) % 3), mesh.F(f, (e + 2) % 3), w(e)});
      }
    }
  }
  for (int k = 0; k < r; ++k)
    if (out.edgeSets[k].empty())
      throw Error("rotation cluster " + std::to_string(k) + " is empty");
  return out;
}

SparseMatrix arap_laplacian(const RotationClusters& clusters, Eigen::Index n) {
  std::vector<Triplet> triplets;
  for (const auto& set : clusters.edgeSets) {
    for (const auto& e : set) {
      triplets.emplace_back(e.i, e.i, e.weight);
      triplets.emplace_back(e.j, e.j, e.weight);
      triplets.emplace_back(e.i, e.j, -e.weight);
      triplets.emplace_back(e.j, e.i, -e.weight);
    }
  }
  SparseMatrix L(n, n);
  L.setFromTriplets(triplets.begin(), triplets.end());
  return L;
}

SparseMatrix arap_covariance_operator(const MatrixX3d& V, const RotationClusters& clusters) {
  std::vector<Triplet> triplets;
  for (int k = 0; k < clusters.size(); ++k) {
    if (clusters.edgeSets[k].empty())
      throw Error("rotation cluster " + std::to_string(k) + " is empty");
    for (const auto& e : clusters.edgeSets[k]) {
      const Eigen::RowVector3d d = e.weight * (V.row(e.i) - V.row(e.j));
      for (int c = 0; c < 3; ++c) {
        triplets.emplace_back(3 * k + c, e.i, d(c));
        triplets.emplace_back(3 * k + c, e.j, -d(c));
      }
    }
  }
  SparseMatrix K(3 * clusters.size(), V.rows());
  K.setFromTriplets(triplets.begin(), triplets.end());
  return K;
}

ArapOperators arap_precompute(const TriMesh& mesh, const RotationClusters& clusters) {
  return {arap_laplacian(clusters, mesh.numVertices()),
          arap_covariance_operator(mesh.V, clusters)};
}

}  // namespace blendforge
