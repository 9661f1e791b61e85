#include "blendforge/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blendforge {

void SolveParams::validate() const {
  if (!(betaLc > 0)) throw Error("beta_lc must be positive");
  if (!(betaSm >= 0)) throw Error("beta_sm must be non-negative");
  if (!(betaSp >= 0)) throw Error("beta_sp must be non-negative");
  if (!(tol > 0)) throw Error("tol must be positive");
  if (maxIters < 1 || averageIters < 0) throw Error("iteration caps must be positive");
  if (!(ridge >= 0)) throw Error("ridge must be non-negative");
}

ConstraintSet point_constraints(std::span<const int> vertices, const MatrixX3d& targets,
                                Eigen::Index numVertices) {
  if (static_cast<Eigen::Index>(vertices.size()) != targets.rows())
    throw Error("constraint vertices and targets differ in count");
  ConstraintSet cs;
  cs.H.resize(static_cast<Eigen::Index>(vertices.size()), numVertices);
  std::vector<Triplet> triplets;
  for (size_t r = 0; r < vertices.size(); ++r) {
    if (vertices[r] < 0 || vertices[r] >= numVertices)
      throw Error("constraint vertex " + std::to_string(vertices[r]) + " out of range");
    triplets.emplace_back(static_cast<int>(r), vertices[r], 1.0);
  }
  cs.H.setFromTriplets(triplets.begin(), triplets.end());
  cs.Y = targets;
  return cs;
}

ConstraintSet remove_constraints(const ConstraintSet& cs, std::span<const int> rows) {
  std::vector<char> drop(cs.size(), 0);
  for (int r : rows) {
    if (r < 0 || r >= cs.size()) throw Error("constraint row " + std::to_string(r) + " out of range");
    drop[r] = 1;
  }
  std::vector<int> keep;
  for (int r = 0; r < cs.size(); ++r)
    if (!drop[r]) keep.push_back(r);
  if (keep.empty()) throw Error("cannot remove every constraint");
  ConstraintSet out;
  out.H.resize(static_cast<Eigen::Index>(keep.size()), cs.H.cols());
  out.Y.resize(static_cast<Eigen::Index>(keep.size()), 3);
  std::vector<Triplet> triplets;
  for (size_t r = 0; r < keep.size(); ++r) {
    for (RowSparseMatrix::InnerIterator it(cs.H, keep[r]); it; ++it)
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
    out.Y.row(static_cast<Eigen::Index>(r)) = cs.Y.row(keep[r]);
  }
  out.H.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

ConstraintSet append_constraints(const ConstraintSet& a, const ConstraintSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.H.cols() != b.H.cols()) throw Error("constraint sets over different vertex counts");
  ConstraintSet out;
  out.H.resize(a.size() + b.size(), a.H.cols());
  std::vector<Triplet> triplets;
  for (Eigen::Index r = 0; r < a.size(); ++r)
    for (RowSparseMatrix::InnerIterator it(a.H, r); it; ++it)
      triplets.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  for (Eigen::Index r = 0; r < b.size(); ++r)
    for (RowSparseMatrix::InnerIterator it(b.H, r); it; ++it)
      triplets.emplace_back(static_cast<int>(a.size() + r), static_cast<int>(it.col()), it.value());
  out.H.setFromTriplets(triplets.begin(), triplets.end());
  out.Y.resize(a.size() + b.size(), 3);
  out.Y << a.Y, b.Y;
  return out;
}

std::shared_ptr<const SolverSystem> make_solver_system(
    std::shared_ptr<const BlendDictionary> dictionary, const ExampleArap& arap,
    Eigen::VectorXd smoothness, double relativeRidge) {
  const Eigen::MatrixXd& D = dictionary->atoms;
  if (D.rows() != arap.L.rows()) throw Error("dictionary and ARAP operators differ in size");
  if (smoothness.size() != D.cols()) throw Error("smoothness diagonal does not match dictionary");
  auto sys = std::make_shared<SolverSystem>();
  sys->dictionary = std::move(dictionary);
  const Eigen::MatrixXd LD = arap.L * D;
  sys->Ltilde = D.transpose() * LD;
  sys->Ltilde = 0.5 * (sys->Ltilde + sys->Ltilde.transpose()).eval();
  for (const auto& K : arap.K) sys->Ktilde.push_back(K * D);
  sys->restEnergy = arap.restEnergy;
  sys->smoothness = std::move(smoothness);
  sys->numClusters = arap.numClusters;
  const double scale = sys->Ltilde.diagonal().mean();
  sys->ridge = relativeRidge * (scale > 0 ? scale : 1.0);
  return sys;
}

namespace {

Eigen::MatrixXd assemble_gamma(const SolverSystem& sys, double betaLc, double betaSm,
                               const Eigen::MatrixXd& XtX) {
  Eigen::MatrixXd gamma = sys.Ltilde + betaLc * XtX;
  gamma.diagonal() += betaSm * sys.smoothness;
  gamma.diagonal().array() += sys.ridge;
  return gamma;
}

void factorize(Eigen::LLT<Eigen::MatrixXd>& factor, const Eigen::MatrixXd& gamma) {
  factor.compute(gamma);
  if (factor.info() != Eigen::Success)
    throw SolverError(
        "global-step matrix is not positive definite; raise beta_sm or the ridge, or check the "
        "cotangent clamping");
}

}  // namespace

ConstrainedSystem constrain(std::shared_ptr<const SolverSystem> system, ConstraintSet constraints,
                            const SolveParams& params) {
  params.validate();
  if (constraints.size() < 1) throw Error("at least one constraint is required");
  if (constraints.H.cols() != system->dictionary->numVertices())
    throw Error("constraints and dictionary differ in vertex count");
  ConstrainedSystem cs;
  cs.system = std::move(system);
  cs.constraints = std::move(constraints);
  cs.betaLc = params.betaLc;
  cs.betaSm = params.betaSm;
  cs.X = cs.constraints.H * cs.system->dictionary->atoms;
  cs.XtX = cs.X.transpose() * cs.X;
  cs.XtY = cs.X.transpose() * cs.constraints.Y;
  cs.gamma = assemble_gamma(*cs.system, cs.betaLc, cs.betaSm, cs.XtX);
  factorize(cs.factor, cs.gamma);
  return cs;
}

double energy_linear_constraints(const ConstrainedSystem& cs, const MatrixX3d& T) {
  return 0.5 * (cs.X * T - cs.constraints.Y).squaredNorm();
}

double energy_smoothness(const SolverSystem& sys, const MatrixX3d& T) {
  return 0.5 * (sys.smoothness.asDiagonal() * T).cwiseProduct(T).sum();
}

double arap_coupling(const SolverSystem& sys, int example, const Rotations& R, const MatrixX3d& T) {
  const MatrixX3d S = sys.Ktilde[example] * T;
  double sum = 0.0;
  for (int k = 0; k < sys.numClusters; ++k) sum += (R[k] * S.block<3, 3>(3 * k, 0)).trace();
  return sum;
}

double energy_scaled_arap(const SolverSystem& sys, int example, const Rotations& R, double alpha,
                          const MatrixX3d& T) {
  const double quad = (T.transpose() * sys.Ltilde * T).trace();
  return 0.5 * (quad - 2.0 * alpha * arap_coupling(sys, example, R, T) +
                alpha * alpha * sys.restEnergy(example));
}

double energy_ridge(const SolverSystem& sys, const MatrixX3d& T) {
  return 0.5 * sys.ridge * T.squaredNorm();
}

double energy_total_average(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                            double alpha, const MatrixX3d& T) {
  const SolverSystem& sys = *cs.system;
  double arap = 0.0;
  for (int l = 0; l < sys.numExamples(); ++l) arap += energy_scaled_arap(sys, l, R[l], alpha, T);
  return arap / sys.numExamples() + cs.betaLc * energy_linear_constraints(cs, T) +
         cs.betaSm * energy_smoothness(sys, T) + energy_ridge(sys, T);
}

double energy_example(const ConstrainedSystem& cs, int example, const Rotations& R, double alpha,
                      const MatrixX3d& T) {
  const SolverSystem& sys = *cs.system;
  return energy_scaled_arap(sys, example, R, alpha, T) +
         cs.betaLc * energy_linear_constraints(cs, T) + cs.betaSm * energy_smoothness(sys, T) +
         energy_ridge(sys, T);
}

std::pair<double, int> energy_minimal(const ConstrainedSystem& cs, const SolveState& state) {
  const int q = cs.system->numExamples();
  double best = std::numeric_limits<double>::infinity();
  int arg = 0;
  for (int l = 0; l < q; ++l) {
    const MatrixX3d& T = state.perExampleT.empty() ? state.T : state.perExampleT[l];
    const double e = energy_example(cs, l, state.rotations[l], state.alpha(l), T);
    if (e < best) {
      best = e;
      arg = l;
    }
  }
  return {best, arg};
}

namespace {

// Stacked R_k^T, 3r x 3.
MatrixX3d stacked_transpose(const Rotations& R) {
  MatrixX3d out(3 * static_cast<Eigen::Index>(R.size()), 3);
  for (size_t k = 0; k < R.size(); ++k)
    out.block<3, 3>(3 * static_cast<Eigen::Index>(k), 0) = R[k].transpose();
  return out;
}

MatrixX3d global_rhs(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                     const Eigen::VectorXd& alpha, const Eigen::VectorXd& weights) {
  const SolverSystem& sys = *cs.system;
  MatrixX3d rhs = cs.betaLc * cs.XtY;
  for (int l = 0; l < sys.numExamples(); ++l) {
    if (weights(l) == 0.0) continue;
    rhs.noalias() += (weights(l) * alpha(l)) * (sys.Ktilde[l].transpose() * stacked_transpose(R[l]));
  }
  return rhs;
}

}  // namespace

MatrixX3d gradient_total_average(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                                 double alpha, const MatrixX3d& T) {
  const int q = cs.system->numExamples();
  const Eigen::VectorXd alphas = Eigen::VectorXd::Constant(q, alpha);
  const Eigen::VectorXd weights = Eigen::VectorXd::Constant(q, 1.0 / q);
  return cs.gamma * T - global_rhs(cs, R, alphas, weights);
}

Rotations local_step(const SolverSystem& sys, int example, const MatrixX3d& T,
                     const Rotations& previous) {
  const MatrixX3d S = sys.Ktilde[example] * T;
  Rotations R(sys.numClusters);
  for (int k = 0; k < sys.numClusters; ++k) {
    const Eigen::Matrix3d fallback =
        previous.empty() ? Eigen::Matrix3d::Identity() : previous[k];
    R[k] = project_rotation(S.block<3, 3>(3 * k, 0), fallback);
  }
  return R;
}

double clamp_scale(double alpha) { return std::clamp(alpha, 1e-3, 1e3); }

namespace {

double weighted_scale(const SolverSystem& sys, const std::vector<Rotations>& R,
                      const std::vector<const MatrixX3d*>& T, const Eigen::VectorXd& weights) {
  double coupling = 0.0, rest = 0.0;
  for (int l = 0; l < sys.numExamples(); ++l) {
    if (weights(l) == 0.0) continue;
    if (!(sys.restEnergy(l) > 0))
      throw SolverError("example " + std::to_string(l) + " has zero ARAP rest energy");
    coupling += weights(l) * arap_coupling(sys, l, R[l], *T[l]);
    rest += weights(l) * sys.restEnergy(l);
  }
  return clamp_scale(coupling / rest);
}

}  // namespace

double scale_step(const SolverSystem& sys, const std::vector<Rotations>& R, const MatrixX3d& T) {
  const int q = sys.numExamples();
  return weighted_scale(sys, R, std::vector<const MatrixX3d*>(q, &T),
                        Eigen::VectorXd::Constant(q, 1.0 / q));
}

double scale_step_example(const SolverSystem& sys, int example, const Rotations& R,
                          const MatrixX3d& T) {
  if (!(sys.restEnergy(example) > 0))
    throw SolverError("example " + std::to_string(example) + " has zero ARAP rest energy");
  return clamp_scale(arap_coupling(sys, example, R, T) / sys.restEnergy(example));
}

MatrixX3d global_step(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                      const Eigen::VectorXd& alpha, const Eigen::VectorXd& exampleWeights) {
  return cs.factor.solve(global_rhs(cs, R, alpha, exampleWeights));
}

Eigen::MatrixXd initial_system(const ConstrainedSystem& cs) {
  Eigen::MatrixXd Q = cs.betaLc * cs.XtX;
  Q.diagonal() += cs.betaSm * cs.system->smoothness;
  Eigen::LLT<Eigen::MatrixXd> llt(Q);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    const double scale = Q.diagonal().cwiseAbs().mean();
    Q.diagonal().array() += 1e-10 * (scale > 0 ? scale : 1.0);
  }
  return Q;
}

MatrixX3d init_transformations(const ConstrainedSystem& cs) {
  Eigen::LLT<Eigen::MatrixXd> llt(initial_system(cs));
  if (llt.info() != Eigen::Success) throw SolverError("initial system is not solvable");
  return llt.solve(MatrixX3d(cs.betaLc * cs.XtY));
}

SolveState make_average_state(const SolverSystem& sys, const MatrixX3d& T, double alpha) {
  const int q = sys.numExamples();
  SolveState state;
  state.mode = SolveMode::Average;
  state.T = T;
  state.rotations.assign(q, Rotations(sys.numClusters, Eigen::Matrix3d::Identity()));
  state.alpha = Eigen::VectorXd::Constant(q, alpha);
  state.exampleWeights = Eigen::VectorXd::Constant(q, 1.0 / q);
  return state;
}

namespace {

bool converged(double previous, double current, double tol) {
  return previous - current <= tol * std::max(std::abs(previous), 1e-300);
}

}  // namespace

PhaseLog run_average(const ConstrainedSystem& cs, SolveState& state, const SolveParams& params,
                     int maxIters) {
  const SolverSystem& sys = *cs.system;
  const int q = sys.numExamples();
  PhaseLog log{"average", {}, 0};
  if (state.rotations.size() != static_cast<size_t>(q))
    state.rotations.assign(q, Rotations(sys.numClusters, Eigen::Matrix3d::Identity()));
  double alpha = state.alpha.size() == q ? state.alpha.mean() : 1.0;
  const Eigen::VectorXd weights = Eigen::VectorXd::Constant(q, 1.0 / q);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < maxIters; ++iter) {
    for (int l = 0; l < q; ++l) state.rotations[l] = local_step(sys, l, state.T, state.rotations[l]);
    log.energies.push_back(energy_total_average(cs, state.rotations, alpha, state.T));
    alpha = scale_step(sys, state.rotations, state.T);
    log.energies.push_back(energy_total_average(cs, state.rotations, alpha, state.T));
    state.T = global_step(cs, state.rotations, Eigen::VectorXd::Constant(q, alpha), weights);
    const double energy = energy_total_average(cs, state.rotations, alpha, state.T);
    log.energies.push_back(energy);
    log.iterations = iter + 1;
    const bool done = iter > 0 && converged(previous, energy, params.tol);
    previous = energy;
    if (done) break;
  }
  state.mode = SolveMode::Average;
  state.alpha = Eigen::VectorXd::Constant(q, alpha);
  state.exampleWeights = weights;
  state.energy = previous;
  state.perExampleT.clear();
  state.perExampleEnergy.resize(0);
  return log;
}

PhaseLog run_minimal(const ConstrainedSystem& cs, SolveState& state, const SolveParams& params,
                     int maxIters) {
  const SolverSystem& sys = *cs.system;
  const int q = sys.numExamples();
  PhaseLog log{"minimal", {}, 0};
  if (state.perExampleT.size() != static_cast<size_t>(q)) state.perExampleT.assign(q, state.T);
  if (state.rotations.size() != static_cast<size_t>(q))
    state.rotations.assign(q, Rotations(sys.numClusters, Eigen::Matrix3d::Identity()));
  if (state.alpha.size() != q) state.alpha = Eigen::VectorXd::Constant(q, 1.0);

  Eigen::VectorXd energies(q);
  auto record = [&] {
    for (int l = 0; l < q; ++l)
      energies(l) = energy_example(cs, l, state.rotations[l], state.alpha(l), state.perExampleT[l]);
    log.energies.push_back(energies.minCoeff());
  };
  Eigen::VectorXd previous = Eigen::VectorXd::Constant(q, std::numeric_limits<double>::infinity());
  for (int iter = 0; iter < maxIters; ++iter) {
    for (int l = 0; l < q; ++l)
      state.rotations[l] = local_step(sys, l, state.perExampleT[l], state.rotations[l]);
    record();
    for (int l = 0; l < q; ++l)
      state.alpha(l) = scale_step_example(sys, l, state.rotations[l], state.perExampleT[l]);
    record();
    for (int l = 0; l < q; ++l) {
      Eigen::VectorXd onehot = Eigen::VectorXd::Zero(q);
      onehot(l) = 1.0;
      state.perExampleT[l] = global_step(cs, state.rotations, state.alpha, onehot);
    }
    record();
    log.iterations = iter + 1;
    bool done = iter > 0;
    for (int l = 0; l < q && done; ++l) done = converged(previous(l), energies(l), params.tol);
    previous = energies;
    if (done) break;
  }
  int best = 0;
  for (int l = 1; l < q; ++l)
    if (previous(l) < previous(best)) best = l;
  state.mode = SolveMode::Minimal;
  state.selectedExample = best;
  state.T = state.perExampleT[best];
  state.exampleWeights = Eigen::VectorXd::Zero(q);
  state.exampleWeights(best) = 1.0;
  state.perExampleEnergy = previous;
  state.energy = previous(best);
  return log;
}

SolveState change_state_dictionary(const SolveState& state, const Eigen::MatrixXd& changeOperator) {
  if (changeOperator.cols() != state.T.rows())
    throw Error("dictionary change operator does not match the coefficients");
  SolveState out = state;
  out.T = changeOperator * state.T;
  for (auto& T : out.perExampleT) T = (changeOperator * T).eval();
  return out;
}

ScheduleResult solve_schedule(const ConstrainedSystem& coarse, const ConstrainedSystem* rich,
                              const Eigen::MatrixXd* changeOperator, const SolveParams& params) {
  params.validate();
  ScheduleResult result;
  const MatrixX3d T0 = params.betaSp > 0 ? sparse_init(coarse, params) : init_transformations(coarse);
  result.state = make_average_state(*coarse.system, T0);
  if (params.runAverage)
    result.log.push_back(run_average(coarse, result.state, params, params.averageIters));
  if (params.runMinimal)
    result.log.push_back(run_minimal(coarse, result.state, params, params.maxIters));
  if (rich != nullptr) {
    if (changeOperator == nullptr) throw Error("rich dictionary given without a change operator");
    if (rich->system->numExamples() != coarse.system->numExamples() ||
        rich->system->numClusters != coarse.system->numClusters)
      throw Error("coarse and rich systems use different examples or clusters");
    result.state = change_state_dictionary(result.state, *changeOperator);
    result.onRich = true;
    PhaseLog log = params.runMinimal || !params.runAverage
                       ? run_minimal(*rich, result.state, params, params.maxIters)
                       : run_average(*rich, result.state, params, params.maxIters);
    log.name += "-rich";
    result.log.push_back(std::move(log));
  }
  return result;
}

SolveState interpolate_poses(const ConstrainedSystem& a, const SolveState& stateA,
                             const ConstrainedSystem& b, const SolveState& stateB, double t) {
  if (a.system != b.system) throw Error("interpolated states must share one solver system");
  if (a.betaLc != b.betaLc || a.betaSm != b.betaSm)
    throw Error("interpolated states must share beta parameters");
  const SolverSystem& sys = *a.system;
  const int q = sys.numExamples();
  SolveState out;
  out.mode = stateA.mode == stateB.mode ? stateA.mode : SolveMode::Average;
  out.rotations.resize(q);
  out.alpha.resize(q);
  for (int l = 0; l < q; ++l) {
    out.rotations[l].resize(sys.numClusters);
    for (int k = 0; k < sys.numClusters; ++k)
      out.rotations[l][k] = slerp_rotation(stateA.rotations[l][k], stateB.rotations[l][k], t);
    out.alpha(l) = std::pow(stateA.alpha(l), 1.0 - t) * std::pow(stateB.alpha(l), t);
  }
  out.exampleWeights = (1.0 - t) * stateA.exampleWeights + t * stateB.exampleWeights;
  out.exampleWeights.maxCoeff(&out.selectedExample);

  const Eigen::MatrixXd XtX = (1.0 - t) * a.XtX + t * b.XtX;
  Eigen::LLT<Eigen::MatrixXd> factor;
  factorize(factor, assemble_gamma(sys, a.betaLc, a.betaSm, XtX));
  MatrixX3d rhs = a.betaLc * ((1.0 - t) * a.XtY + t * b.XtY);
  for (int l = 0; l < q; ++l) {
    if (out.exampleWeights(l) == 0.0) continue;
    rhs.noalias() += (out.exampleWeights(l) * out.alpha(l)) *
                     (sys.Ktilde[l].transpose() * stacked_transpose(out.rotations[l]));
  }
  out.T = factor.solve(rhs);
  out.energy = std::numeric_limits<double>::quiet_NaN();
  return out;
}

MatrixX3d reconstruct(const BlendDictionary& dict, const MatrixX3d& T) {
  if (T.rows() != dict.size()) throw Error("coefficients do not match the dictionary");
  return dict.atoms * T;
}

}  // namespace blendforge
