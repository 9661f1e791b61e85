#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "blendforge/atoms.hpp"
#include "blendforge/laplacian.hpp"

namespace blendforge {

/// Lowest generalized eigenpairs of L phi = lambda M phi, M the diagonal of
/// Voronoi areas. Eigenfunctions are M-orthonormal columns.
struct SpectralBasis {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;

  int size() const { return static_cast<int>(eigenvalues.size()); }
};

struct EigenOptions {
  // Full dense decomposition up to this many vertices, shift-invert subspace
  // iteration above it.
  Eigen::Index denseThreshold = 1200;
  int maxIterations = 2000;
  double tolerance = 1e-9;
  std::uint64_t seed = 0x5EED;
};

/// Returns the m+1 smallest eigenpairs (lambda_0 .. lambda_m).
SpectralBasis lbo_eigenpairs(const CotanLaplacian& lap, int m, const EigenOptions& options = {});

/// |L phi - lambda M phi| / ((|lambda| + eps) |M phi|), where eps is 1e-6 times
/// the mean diagonal of L over the mean area.
double eigen_residual(const CotanLaplacian& lap, double lambda, const Eigen::VectorXd& phi);

/// Diagonal of the smoothness penalty: lambda_j^2 for every atom built from
/// eigenfunction j. Throws if an atom refers to a function beyond the basis.
Eigen::VectorXd smoothness_matrix(const SpectralBasis& basis, std::span<const AtomTag> atoms);

// Flat binary cache: uint64 n, uint64 m, then (m+1) eigenvalues and the n x (m+1)
// eigenfunctions column-major, all little-endian.
void save_spectral_basis(const SpectralBasis& basis, const std::filesystem::path& path);
SpectralBasis load_spectral_basis(const std::filesystem::path& path);

}  // namespace blendforge
