#include "blendforge/spectral.hpp"

#include <fstream>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "blendforge/binary_io.hpp"
#include "blendforge/log.hpp"

namespace blendforge {

namespace {

double operator_scale(const CotanLaplacian& lap) {
  return lap.L.diagonal().mean() / lap.areaWeights.mean();
}

// Fixes the sign of each column so that its largest-magnitude entry is positive.
void canonical_signs(Eigen::MatrixXd& phi) {
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    Eigen::Index arg;
    phi.col(j).cwiseAbs().maxCoeff(&arg);
    if (phi(arg, j) < 0) phi.col(j) *= -1.0;
  }
}

SpectralBasis dense_eigenpairs(const CotanLaplacian& lap, int count) {
  const Eigen::VectorXd invSqrtArea = lap.areaWeights.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd A =
      invSqrtArea.asDiagonal() * Eigen::MatrixXd(lap.L) * invSqrtArea.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  if (eig.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
  SpectralBasis out;
  out.eigenvalues = eig.eigenvalues().head(count);
  out.eigenfunctions = invSqrtArea.asDiagonal() * eig.eigenvectors().leftCols(count);
  return out;
}

// M-orthonormalizes the columns of Y through a QR factorization of M^(1/2) Y.
Eigen::MatrixXd m_orthonormalize(const Eigen::MatrixXd& Y, const Eigen::VectorXd& sqrtArea) {
  const Eigen::MatrixXd scaled = sqrtArea.asDiagonal() * Y;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(scaled);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(Y.rows(), Y.cols());
  return sqrtArea.cwiseInverse().asDiagonal() * Q;
}

SpectralBasis iterative_eigenpairs(const CotanLaplacian& lap, int count,
                                   const EigenOptions& options) {
  const Eigen::Index n = lap.L.rows();
  const Eigen::Index block = std::min<Eigen::Index>(n, std::max(2 * count, count + 8));
  const double scale = operator_scale(lap);
  const double shift = 1e-6 * scale;
  const Eigen::VectorXd sqrtArea = lap.areaWeights.cwiseSqrt();

  SparseMatrix shifted = lap.L;
  for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift * lap.areaWeights(i);
  Eigen::SimplicialLDLT<SparseMatrix> factor(shifted);
  if (factor.info() != Eigen::Success)
    throw SolverError("shift-invert factorization failed");

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd X(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = gauss(rng);
  X = m_orthonormalize(X, sqrtArea);

  SpectralBasis out;
  double worst = 0.0;
  for (int iter = 0; iter < options.maxIterations; ++iter) {
    const Eigen::MatrixXd rhs = lap.areaWeights.asDiagonal() * X;
    Eigen::MatrixXd Y = factor.solve(rhs);
    Y = m_orthonormalize(Y, sqrtArea);
    const Eigen::MatrixXd projected = Y.transpose() * (lap.L * Y);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(0.5 * (projected + projected.transpose()));
    X = Y * ritz.eigenvectors();
    const Eigen::VectorXd theta = ritz.eigenvalues();

    worst = 0.0;
    for (int j = 0; j < count; ++j)
      worst = std::max(worst, eigen_residual(lap, theta(j), X.col(j)));
    if (worst <= options.tolerance) {
      log_info("eigensolver: " + std::to_string(count) + " pairs in " + std::to_string(iter + 1) +
               " iterations");
      out.eigenvalues = theta.head(count);
      out.eigenfunctions = X.leftCols(count);
      return out;
    }
  }
  throw SolverError("eigensolver did not converge; worst residual " + std::to_string(worst));
}

}  // namespace

double eigen_residual(const CotanLaplacian& lap, double lambda, const Eigen::VectorXd& phi) {
  const Eigen::VectorXd mphi = lap.areaWeights.cwiseProduct(phi);
  const double mnorm = mphi.norm();
  const double eps = 1e-6 * operator_scale(lap);
  return (lap.L * phi - lambda * mphi).norm() / ((std::abs(lambda) + eps) * mnorm);
}

SpectralBasis lbo_eigenpairs(const CotanLaplacian& lap, int m, const EigenOptions& options) {
  const Eigen::Index n = lap.L.rows();
  if (m < 0 || m + 1 > n)
    throw Error("requested " + std::to_string(m + 1) + " eigenpairs on " + std::to_string(n) +
                " vertices");
  if ((lap.areaWeights.array() <= 0).any())
    throw GeometryError("vertex with zero area (not referenced by any face)");
  SpectralBasis out = n <= options.denseThreshold ? dense_eigenpairs(lap, m + 1)
                                                  : iterative_eigenpairs(lap, m + 1, options);
  out.eigenvalues = out.eigenvalues.cwiseMax(0.0);
  canonical_signs(out.eigenfunctions);
  return out;
}

Eigen::VectorXd smoothness_matrix(const SpectralBasis& basis, std::span<const AtomTag> atoms) {
  Eigen::VectorXd diag(static_cast<Eigen::Index>(atoms.size()));
  for (size_t a = 0; a < atoms.size(); ++a) {
    const int j = atoms[a].function;
    if (j < 0 || j >= basis.size())
      throw Error("atom " + std::to_string(a) + " refers to eigenfunction " + std::to_string(j) +
                  " outside the basis");
    diag(static_cast<Eigen::Index>(a)) = basis.eigenvalues(j) * basis.eigenvalues(j);
  }
  return diag;
}

void save_spectral_basis(const SpectralBasis& basis, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(basis.eigenfunctions.rows()));
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(basis.size() - 1));
  for (Eigen::Index j = 0; j < basis.eigenvalues.size(); ++j)
    detail::write_le(out, basis.eigenvalues(j));
  for (Eigen::Index j = 0; j < basis.eigenfunctions.cols(); ++j)
    for (Eigen::Index i = 0; i < basis.eigenfunctions.rows(); ++i)
      detail::write_le(out, basis.eigenfunctions(i, j));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

SpectralBasis load_spectral_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::uint64_t n = 0, m = 0;
  if (!detail::read_le(in, n) || !detail::read_le(in, m))
    throw Error("truncated eigenpair cache header");
  SpectralBasis basis;
  basis.eigenvalues.resize(static_cast<Eigen::Index>(m + 1));
  basis.eigenfunctions.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m + 1));
  for (Eigen::Index j = 0; j < basis.eigenvalues.size(); ++j)
    if (!detail::read_le(in, basis.eigenvalues(j))) throw Error("truncated eigenpair cache");
  for (Eigen::Index j = 0; j < basis.eigenfunctions.cols(); ++j)
    for (Eigen::Index i = 0; i < basis.eigenfunctions.rows(); ++i)
      if (!detail::read_le(in, basis.eigenfunctions(i, j)))
        throw Error("truncated eigenpair cache");
  return basis;
}

}  // namespace blendforge
