#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "blendforge/kmedoids.hpp"
#include "blendforge/skinning.hpp"

namespace blendforge {

/// q poses of one mesh in dense vertex-wise correspondence. Pose 0 is the
/// reference: its geometry defines the Laplacian, areas and weight functions.
struct ExampleSet {
  std::vector<MatrixX3d> poses;
  Faces faces;

  int size() const { return static_cast<int>(poses.size()); }
  Eigen::Index numVertices() const { return poses.empty() ? 0 : poses.front().rows(); }
  TriMesh mesh(int example) const { return {poses.at(example), faces}; }
  TriMesh reference() const { return mesh(0); }
};

/// Throws unless all meshes share vertex count and face list.
ExampleSet make_example_set(const std::vector<TriMesh>& meshes);

/// Loads every .off/.obj file in `dir`, ordered by file name.
ExampleSet load_example_set(const std::filesystem::path& dir);

/// ARAP operators of every example against shared rotation clusters. L is
/// common to all examples; K and tr(V^T L V) are per example.
struct ExampleArap {
  SparseMatrix L;
  std::vector<SparseMatrix> K;
  Eigen::VectorXd restEnergy;
  int numClusters = 0;
};

ExampleArap precompute_example_arap(const ExampleSet& examples, const RotationClusters& clusters);

/// n x b atom matrix. A deformed shape is atoms * T for a b x 3 coefficient
/// matrix T.
struct BlendDictionary {
  Eigen::MatrixXd atoms;
  std::vector<AtomTag> tags;
  WeightSource source = WeightSource::LBO;
  int numExamples = 0;

  int size() const { return static_cast<int>(atoms.cols()); }
  Eigen::Index numVertices() const { return atoms.rows(); }
};

/// Columns are the weight functions (bar block) followed, per example, by
/// w_j times each coordinate of that example (hat blocks), b = (1 + 3q) m.
BlendDictionary build_dictionary(const ExampleSet& examples, const WeightField& field);

/// Coefficients reproducing example `l` exactly when the weights sum to one
/// at every vertex: identity blocks on example l, zero elsewhere.
MatrixX3d identity_coefficients(const BlendDictionary& dict, int example);

/// Pairwise distances between atom columns rescaled to unit weighted norm,
/// sqrt(sum_i w_i (a_i - b_i)^2); empty weights mean unit weights.
Eigen::MatrixXd atom_distances(const BlendDictionary& dict,
                               const Eigen::VectorXd& vertexWeights = {});

/// Keeps `targetSize` atoms in their original order: every atom listed in
/// `keep`, plus k-medoids over the remaining columns for the rest.
BlendDictionary reduce_dictionary(const BlendDictionary& dict, int targetSize,
                                  std::uint64_t seed = kDefaultSeed,
                                  const Eigen::VectorXd& vertexWeights = {},
                                  const std::vector<int>& keep = {});

/// Least-squares conversion operator P with T_to = P T_from, i.e.
/// pinv(D_to^T D_to) D_to^T D_from, eigenvalues of the Gram matrix below 1e-10
/// of the largest are dropped.
Eigen::MatrixXd dictionary_change_operator(const BlendDictionary& from, const BlendDictionary& to);

MatrixX3d change_dictionary(const BlendDictionary& from, const BlendDictionary& to,
                            const MatrixX3d& coefficients);

/// Debug dump: uint64 n, uint64 b, atoms column-major as little-endian
/// doubles, then one text line per atom ("bar j f" or "hat l j f c").
void save_dictionary(const BlendDictionary& dict, const std::filesystem::path& path);

}  // namespace blendforge
