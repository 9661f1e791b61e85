#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "blendforge/arap.hpp"
#include "blendforge/atoms.hpp"
#include "blendforge/spectral.hpp"

namespace blendforge {

/// Per-vertex blending weights, one column per weight function.
struct WeightField {
  Eigen::MatrixXd weights;
  WeightSource source = WeightSource::LBO;
  // Eigenfunction index (LBO) or bone index (skeleton) of each column.
  std::vector<int> functionIndex;

  int size() const { return static_cast<int>(weights.cols()); }
};

/// Reads `n m` followed by n rows of m weights. Rows must be non-negative
/// (down to -1e-6) and sum to 1 within 1%; they are renormalized.
WeightField import_skeleton_weights(const std::filesystem::path& path, const TriMesh& mesh);

/// Columns phi_0 .. phi_m: the m lowest non-constant eigenfunctions preceded by
/// the constant one.
WeightField lbo_weight_field(const SpectralBasis& basis, int m);

inline constexpr std::uint64_t kDefaultSeed = 0x5EED;

/// Skeleton weights: argmax bone per vertex (k-means when r is smaller than the
/// bone count). LBO weights: k-means on the weight vectors. Empty clusters are
/// dropped with a warning, so the result may have fewer than r clusters.
RotationClusters build_rotation_clusters(const WeightField& field, const TriMesh& mesh, int r,
                                         std::uint64_t seed = kDefaultSeed);

/// Lloyd's k-means with k-means++ seeding; returns labels in [0, k).
Eigen::VectorXi kmeans_labels(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                              int iterations = 100);

}  // namespace blendforge
