#include <algorithm>
#include <cmath>
#include <vector>

#include "blendforge/solver.hpp"

namespace blendforge {

namespace {

double soft_threshold(double x, double threshold) {
  if (x > threshold) return x - threshold;
  if (x < -threshold) return x + threshold;
  return 0.0;
}

// Active-set refinement of one column, starting from the support and signs
// of t: solve on the support with signs fixed, step back to the first zero
// crossing and drop it, or add the worst off-support violation. Returns false
// (leaving t alone) when it does not settle. Signs carry no constraint when
// betaSp is zero.
bool polish_column(const Eigen::MatrixXd& Q, const Eigen::VectorXd& g, double betaSp,
                   Eigen::VectorXd& t) {
  const Eigen::Index b = t.size();
  const double slack = 1e-9 * std::max(betaSp, g.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> support;
  std::vector<double> sign;
  for (Eigen::Index a = 0; a < b; ++a)
    if (t(a) != 0.0) {
      support.push_back(a);
      sign.push_back(t(a) > 0 ? 1.0 : -1.0);
    }
  Eigen::VectorXd x = t;
  for (Eigen::Index iter = 0; iter < 10 * b + 10; ++iter) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::VectorXd y(s);
    if (s > 0) {
      Eigen::MatrixXd Qs(s, s);
      Eigen::VectorXd rhs(s);
      for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = 0; j < s; ++j) Qs(i, j) = Q(support[i], support[j]);
        rhs(i) = g(support[i]) - betaSp * sign[i];
      }
      Eigen::LLT<Eigen::MatrixXd> llt(Qs);
      if (llt.info() != Eigen::Success) return false;
      y = llt.solve(rhs);
    }
    if (betaSp > 0) {
      double step = 1.0;
      Eigen::Index blocked = -1;
      for (Eigen::Index i = 0; i < s; ++i) {
        if (y(i) * sign[i] > 0.0) continue;
        const double xi = x(support[i]);
        const double tau = xi * sign[i] <= 0.0 ? 0.0 : xi / (xi - y(i));
        if (tau < step) {
          step = tau;
          blocked = i;
        }
      }
      if (blocked >= 0) {
        for (Eigen::Index i = 0; i < s; ++i)
          x(support[i]) += step * (y(i) - x(support[i]));
        x(support[blocked]) = 0.0;
        support.erase(support.begin() + blocked);
        sign.erase(sign.begin() + blocked);
        continue;
      }
    }
    x.setZero();
    for (Eigen::Index i = 0; i < s; ++i) x(support[i]) = y(i);
    const Eigen::VectorXd residual = g - Q * x;
    Eigen::Index worst = -1;
    double worstExcess = slack;
    for (Eigen::Index a = 0; a < b; ++a) {
      if (std::find(support.begin(), support.end(), a) != support.end()) continue;
      const double excess = std::abs(residual(a)) - betaSp;
      if (excess > worstExcess) {
        worstExcess = excess;
        worst = a;
      }
    }
    if (worst < 0) {
      t = x;
      return true;
    }
    support.push_back(worst);
    sign.push_back(residual(worst) > 0 ? 1.0 : -1.0);
  }
  return false;
}

}  // namespace

MatrixX3d sparse_init(const ConstrainedSystem& cs, const SolveParams& params,
                      ElasticNetReport* report) {
  const Eigen::MatrixXd Q = initial_system(cs);
  const MatrixX3d g = cs.betaLc * cs.XtY;
  const Eigen::Index b = Q.rows();

  MatrixX3d T = MatrixX3d::Zero(b, 3);
  MatrixX3d residual = g;  // g - Q T
  ElasticNetReport rep;
  for (int sweep = 0; sweep < params.sparseSweeps; ++sweep) {
    double maxChange = 0.0;
    for (Eigen::Index a = 0; a < b; ++a) {
      const double qaa = Q(a, a);
      for (int c = 0; c < 3; ++c) {
        const double old = T(a, c);
        const double next =
            qaa > 0 ? soft_threshold(residual(a, c) + qaa * old, params.betaSp) / qaa : 0.0;
        const double delta = next - old;
        if (delta == 0.0) continue;
        T(a, c) = next;
        residual.col(c) -= delta * Q.col(a);
        maxChange = std::max(maxChange, std::abs(delta));
      }
    }
    rep.sweeps = sweep + 1;
    rep.maxChange = maxChange;
    if (maxChange <= params.sparseTol) break;
  }
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd t = T.col(c);
    if (polish_column(Q, g.col(c), params.betaSp, t)) {
      T.col(c) = t;
      ++rep.polishedColumns;
    }
  }
  if (report != nullptr) *report = rep;
  return T;
}

}  // namespace blendforge
