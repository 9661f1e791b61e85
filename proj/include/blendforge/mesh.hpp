#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "blendforge/types.hpp"

namespace blendforge {

/// Triangle mesh with shared topology. Vertex order is significant: meshes in
/// an example set correspond by index.
template <typename Scalar>
struct TriMeshT {
  Points<Scalar> V;
  Faces F;

  Eigen::Index numVertices() const { return V.rows(); }
  Eigen::Index numFaces() const { return F.rows(); }
};

using TriMesh = TriMeshT<double>;

enum class MeshFormat { OFF, OBJ };

/// Throws GeometryError on out-of-range or repeated face indices.
template <typename Scalar>
void validate(const TriMeshT<Scalar>& mesh) {
  const auto n = static_cast<int>(mesh.numVertices());
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) {
    const auto face = mesh.F.row(f);
    for (int c = 0; c < 3; ++c) {
      if (face(c) < 0 || face(c) >= n)
        throw GeometryError("face " + std::to_string(f) + " has vertex index " +
                            std::to_string(face(c)) + " outside [0, " +
                            std::to_string(n) + ")");
    }
    if (face(0) == face(1) || face(1) == face(2) || face(0) == face(2))
      throw GeometryError("face " + std::to_string(f) + " is degenerate");
  }
}

MeshFormat format_from_path(const std::filesystem::path& path);

TriMesh load_mesh(const std::filesystem::path& path,
                  std::optional<MeshFormat> format = std::nullopt);

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path,
               std::optional<MeshFormat> format = std::nullopt);

template <typename Scalar>
Scalar face_area(const TriMeshT<Scalar>& mesh, Eigen::Index f) {
  const Vec3<Scalar> a = mesh.V.row(mesh.F(f, 0)).transpose();
  const Vec3<Scalar> b = mesh.V.row(mesh.F(f, 1)).transpose();
  const Vec3<Scalar> c = mesh.V.row(mesh.F(f, 2)).transpose();
  return Scalar(0.5) * (b - a).cross(c - a).norm();
}

template <typename Scalar>
Scalar surface_area(const TriMeshT<Scalar>& mesh) {
  Scalar total(0);
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) total += face_area(mesh, f);
  return total;
}

template <typename Scalar>
struct NormalField {
  Points<Scalar> normals;
  // false for vertices that belong to no face (their normal is zero)
  Eigen::Array<bool, Eigen::Dynamic, 1> valid;
};

/// Angle-weighted vertex normals.
template <typename Scalar>
NormalField<Scalar> vertex_normals(const TriMeshT<Scalar>& mesh) {
  NormalField<Scalar> out;
  out.normals = Points<Scalar>::Zero(mesh.numVertices(), 3);
  out.valid = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(mesh.numVertices(), false);
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) {
    Vec3<Scalar> p[3];
    for (int c = 0; c < 3; ++c) p[c] = mesh.V.row(mesh.F(f, c)).transpose();
    Vec3<Scalar> fn = (p[1] - p[0]).cross(p[2] - p[0]);
    const Scalar len = fn.norm();
    if (len <= Scalar(0)) continue;
    fn /= len;
    for (int c = 0; c < 3; ++c) {
      const Vec3<Scalar> e1 = (p[(c + 1) % 3] - p[c]).normalized();
      const Vec3<Scalar> e2 = (p[(c + 2) % 3] - p[c]).normalized();
      const Scalar angle = std::acos(std::clamp(e1.dot(e2), Scalar(-1), Scalar(1)));
      out.normals.row(mesh.F(f, c)) += angle * fn.transpose();
    }
  }
  for (Eigen::Index i = 0; i < mesh.numVertices(); ++i) {
    const Scalar len = out.normals.row(i).norm();
    if (len > Scalar(0)) {
      out.normals.row(i) /= len;
      out.valid(i) = true;
    }
  }
  return out;
}

/// Undirected vertex adjacency with edge lengths, for graph geodesics.
struct MeshGraph {
  std::vector<int> offsets;  // CSR row pointers, size n + 1
  std::vector<int> neighbors;
  std::vector<double> lengths;

  int numVertices() const { return static_cast<int>(offsets.size()) - 1; }
};

MeshGraph build_graph(const TriMesh& mesh);

/// Dijkstra distances from `seed`, truncated at `maxDistance` (farther
/// vertices are +inf).
Eigen::VectorXd graph_distances(const MeshGraph& graph, int seed,
                                double maxDistance);

/// Vertices within graph-geodesic distance `radius` of `seed`, ascending.
std::vector<int> geodesic_ball(const MeshGraph& graph, int seed, double radius);
std::vector<int> geodesic_ball(const TriMesh& mesh, int seed, double radius);

}  // namespace blendforge
