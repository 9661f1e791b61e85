#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "blendforge/skinning.hpp"
#include "blendforge/synthetic.hpp"

using namespace blendforge;
namespace fs = std::filesystem;

namespace {

fs::path write_weights(const std::string& name, const std::string& text) {
  const fs::path path = fs::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

std::set<std::pair<int, int>> mesh_edges(const TriMesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  return edges;
}

}  // namespace

TEST_CASE("skeleton weights import") {
  const TriMesh tet = synthetic::tetrahedron();
  const WeightField onehot =
      import_skeleton_weights(write_weights("w1.txt", "4 2\n1 0\n1 0\n0 1\n0 1\n"), tet);
  CHECK(onehot.source == WeightSource::SkeletonImport);
  CHECK(onehot.size() == 2);
  CHECK(onehot.functionIndex == std::vector<int>{0, 1});
  CHECK(onehot.weights(2, 1) == 1.0);

  const WeightField renorm = import_skeleton_weights(
      write_weights("w2.txt", "4 2\n0.5 0.495\n1 0\n0 1\n0 1\n"), tet);
  CHECK(renorm.weights.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(renorm.weights(0, 0) == doctest::Approx(0.5 / 0.995));

  CHECK_THROWS_AS(import_skeleton_weights(write_weights("w3.txt", "3 2\n1 0\n1 0\n0 1\n"), tet),
                  Error);
  CHECK_THROWS_AS(
      import_skeleton_weights(write_weights("w4.txt", "4 2\n0.5 0.4\n1 0\n0 1\n0 1\n"), tet),
      Error);
  CHECK_THROWS_AS(
      import_skeleton_weights(write_weights("w5.txt", "4 2\n1.1 -0.1\n1 0\n0 1\n0 1\n"), tet),
      Error);
}

TEST_CASE("LBO weight field keeps phi_0 .. phi_m") {
  const CotanLaplacian lap = cotangent_laplacian(synthetic::icosphere(2));
  const SpectralBasis basis = lbo_eigenpairs(lap, 6);
  const WeightField field = lbo_weight_field(basis, 4);
  CHECK(field.source == WeightSource::LBO);
  CHECK(field.size() == 5);
  CHECK(field.functionIndex == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(field.weights == basis.eigenfunctions.leftCols(5));
  CHECK_THROWS_AS(lbo_weight_field(basis, 7), Error);
}

TEST_CASE("one cluster covers every edge") {
  const TriMesh sphere = synthetic::icosphere(1);
  const CotanLaplacian lap = cotangent_laplacian(sphere);
  const WeightField field = lbo_weight_field(lbo_eigenpairs(lap, 4), 4);
  const RotationClusters clusters = build_rotation_clusters(field, sphere, 1);
  REQUIRE(clusters.size() == 1);
  std::set<std::pair<int, int>> covered;
  for (const WeightedEdge& e : clusters.edgeSets[0])
    covered.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
  CHECK(covered == mesh_edges(sphere));
}

TEST_CASE("two-bone bar splits at the joint") {
  const auto bar = synthetic::articulated_bar(2, 20, 8);
  WeightField field;
  field.weights = bar.weights;
  field.source = WeightSource::SkeletonImport;
  field.functionIndex = {0, 1};
  const RotationClusters clusters = build_rotation_clusters(field, bar.rest, 2);
  REQUIRE(clusters.size() == 2);
  for (Eigen::Index i = 0; i < bar.rest.numVertices(); ++i) {
    Eigen::Index bone;
    bar.weights.row(i).maxCoeff(&bone);
    CHECK(clusters.vertexCluster(i) == bone);
  }
  // every edge with a nonzero cotangent weight lands in some cluster
  std::set<std::pair<int, int>> covered, weighted;
  for (const auto& set : clusters.edgeSets)
    for (const WeightedEdge& e : set) covered.insert({std::min(e.i, e.j), std::max(e.i, e.j)});
  const CotanLaplacian lap = cotangent_laplacian(bar.rest);
  for (int k = 0; k < lap.L.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(lap.L, k); it; ++it)
      if (it.row() < it.col() && it.value() != 0.0)
        weighted.insert({static_cast<int>(it.row()), static_cast<int>(it.col())});
  CHECK(covered == weighted);
}

TEST_CASE("k-means clusters are deterministic and scale invariant") {
  const TriMesh sphere = synthetic::icosphere(2);
  const WeightField field =
      lbo_weight_field(lbo_eigenpairs(cotangent_laplacian(sphere), 8), 8);
  const RotationClusters a = build_rotation_clusters(field, sphere, 6, 11);
  const RotationClusters b = build_rotation_clusters(field, sphere, 6, 11);
  CHECK(a.vertexCluster == b.vertexCluster);

  TriMesh scaled = sphere;
  scaled.V *= 3.0;
  const WeightField scaledField =
      lbo_weight_field(lbo_eigenpairs(cotangent_laplacian(scaled), 8), 8);
  // eigenfunctions scale by 1/3 and may flip sign; labels follow |phi| geometry
  const RotationClusters c = build_rotation_clusters(scaledField, scaled, 6, 11);
  CHECK(c.size() == a.size());
}

TEST_CASE("kmeans labels separate obvious groups") {
  Eigen::MatrixXd pts(6, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 10, 10, 10.1, 10, 10, 10.1;
  const Eigen::VectorXi labels = kmeans_labels(pts, 2, 3);
  CHECK(labels(0) == labels(1));
  CHECK(labels(1) == labels(2));
  CHECK(labels(3) == labels(4));
  CHECK(labels(4) == labels(5));
  CHECK(labels(0) != labels(3));
}
