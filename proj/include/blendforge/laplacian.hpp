#pragma once

#include <vector>

#include "blendforge/mesh.hpp"

namespace blendforge {

/// Positive semi-definite cotangent Laplacian (off-diagonals -c_ij, diagonal
/// the sum of incident weights) with mixed Voronoi vertex areas.
template <typename Scalar>
struct CotanLaplacianT {
  Eigen::SparseMatrix<Scalar> L;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> areaWeights;
};

using CotanLaplacian = CotanLaplacianT<double>;

/// Cotangents of the three interior angles of face f; entry c belongs to the
/// corner at F(f, c), which is opposite the edge (F(f, c+1), F(f, c+2)).
/// Throws GeometryError for zero-area faces.
template <typename Scalar>
Vec3<Scalar> corner_cotangents(const TriMeshT<Scalar>& mesh, Eigen::Index f) {
  Vec3<Scalar> p[3];
  for (int c = 0; c < 3; ++c) p[c] = mesh.V.row(mesh.F(f, c)).transpose();
  const Scalar doubleArea = (p[1] - p[0]).cross(p[2] - p[0]).norm();
  const Scalar longest = std::max({(p[1] - p[0]).squaredNorm(), (p[2] - p[1]).squaredNorm(),
                                   (p[0] - p[2]).squaredNorm()});
  if (!(doubleArea > Scalar(1e-12) * longest))
    throw GeometryError("face " + std::to_string(f) + " has zero area");
  Vec3<Scalar> cot;
  for (int c = 0; c < 3; ++c) {
    const Vec3<Scalar> a = p[(c + 1) % 3] - p[c];
    const Vec3<Scalar> b = p[(c + 2) % 3] - p[c];
    cot(c) = a.dot(b) / doubleArea;
  }
  return cot;
}

/// Half-cotangent weight contributed by one triangle to the edge opposite each
/// corner. Negative values are clamped to zero.
template <typename Scalar>
Vec3<Scalar> corner_edge_weights(const TriMeshT<Scalar>& mesh, Eigen::Index f) {
  return (Scalar(0.5) * corner_cotangents(mesh, f)).cwiseMax(Scalar(0));
}

/// Mixed Voronoi areas with the barycentric fallback on obtuse triangles.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> voronoi_areas(const TriMeshT<Scalar>& mesh) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> areas =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(mesh.numVertices());
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) {
    const Vec3<Scalar> cot = corner_cotangents(mesh, f);
    const Scalar area = face_area(mesh, f);
    int obtuse = -1;
    for (int c = 0; c < 3; ++c)
      if (cot(c) < Scalar(0)) obtuse = c;
    for (int c = 0; c < 3; ++c) {
      const int i = mesh.F(f, c);
      if (obtuse >= 0) {
        areas(i) += obtuse == c ? area / Scalar(2) : area / Scalar(4);
        continue;
      }
      const int j = mesh.F(f, (c + 1) % 3);
      const int k = mesh.F(f, (c + 2) % 3);
      // edge (i,j) is opposite corner c+2, edge (i,k) opposite corner c+1
      const Scalar lij = (mesh.V.row(i) - mesh.V.row(j)).squaredNorm();
      const Scalar lik = (mesh.V.row(i) - mesh.V.row(k)).squaredNorm();
      areas(i) += (lij * cot((c + 2) % 3) + lik * cot((c + 1) % 3)) / Scalar(8);
    }
  }
  return areas;
}

template <typename Scalar>
CotanLaplacianT<Scalar> cotangent_laplacian(const TriMeshT<Scalar>& mesh) {
  using T = Eigen::Triplet<Scalar>;
  std::vector<T> triplets;
  triplets.reserve(static_cast<size_t>(mesh.numFaces()) * 12);
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) {
    const Vec3<Scalar> w = corner_edge_weights(mesh, f);
    for (int c = 0; c < 3; ++c) {
      const int i = mesh.F(f, (c + 1) % 3);
      const int j = mesh.F(f, (c + 2) % 3);
      triplets.emplace_back(i, j, -w(c));
      triplets.emplace_back(j, i, -w(c));
      triplets.emplace_back(i, i, w(c));
      triplets.emplace_back(j, j, w(c));
    }
  }
  CotanLaplacianT<Scalar> out;
  out.L.resize(mesh.numVertices(), mesh.numVertices());
  out.L.setFromTriplets(triplets.begin(), triplets.end());
  out.areaWeights = voronoi_areas(mesh);
  return out;
}

}  // namespace blendforge
