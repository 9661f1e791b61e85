#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "blendforge/types.hpp"

namespace blendforge {

/// argmax over R in SO(3) of tr(R S). With S = U Sigma V^T the maximizer is
/// V U^T, flipping the column of V that belongs to the smallest singular value
/// when that product is a reflection. A zero S returns `fallback`.
template <typename Derived>
Mat3<typename Derived::Scalar> project_rotation(
    const Eigen::MatrixBase<Derived>& S,
    const Mat3<typename Derived::Scalar>& fallback = Mat3<typename Derived::Scalar>::Identity()) {
  using Scalar = typename Derived::Scalar;
  if (!S.allFinite()) throw SolverError("non-finite matrix in rotation fit");
  if (S.cwiseAbs().maxCoeff() <= std::numeric_limits<Scalar>::min()) return fallback;
  Eigen::JacobiSVD<Mat3<Scalar>> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3<Scalar> V = svd.matrixV();
  const Mat3<Scalar>& U = svd.matrixU();
  if ((V * U.transpose()).determinant() < Scalar(0)) V.col(2) *= Scalar(-1);
  return V * U.transpose();
}

template <typename Derived>
bool is_rotation(const Eigen::MatrixBase<Derived>& R, typename Derived::Scalar tol) {
  using Scalar = typename Derived::Scalar;
  const Mat3<Scalar> gram = R.transpose() * R;
  return (gram - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - Scalar(1)) <= tol;
}

/// Shortest-arc spherical interpolation between two rotations.
template <typename Scalar>
Mat3<Scalar> slerp_rotation(const Mat3<Scalar>& from, const Mat3<Scalar>& to, Scalar t) {
  const Eigen::Quaternion<Scalar> qa(from), qb(to);
  return qa.slerp(t, qb).normalized().toRotationMatrix();
}

}  // namespace blendforge
