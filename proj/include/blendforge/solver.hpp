#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "blendforge/dictionary.hpp"
#include "blendforge/rotation.hpp"

namespace blendforge {

enum class SolveMode { Average, Minimal };

struct SolveParams {
  double betaLc = 1e3;
  double betaSm = 0.3;
  double betaSp = 0.1;
  int maxIters = 100;      // per alternation phase
  int averageIters = 10;   // cap for the average-mode phase of the schedule
  double tol = 1e-6;       // relative energy decrease that ends a phase
  double ridge = 1e-10;    // Tikhonov term on T, relative to the mean diagonal of D^T L D
  int sparseSweeps = 1000;
  double sparseTol = 1e-6;
  bool runAverage = true;
  bool runMinimal = true;

  /// Throws unless betaLc > 0, betaSm and betaSp >= 0, tol > 0.
  void validate() const;
};

/// h linear constraints H V ~ Y on the deformed vertices.
struct ConstraintSet {
  RowSparseMatrix H;
  MatrixX3d Y;

  Eigen::Index size() const { return H.rows(); }
};

/// One row per vertex: the vertex itself must land on the target.
ConstraintSet point_constraints(std::span<const int> vertices, const MatrixX3d& targets,
                                Eigen::Index numVertices);

/// Drops the listed rows. Throws if nothing would remain.
ConstraintSet remove_constraints(const ConstraintSet& cs, std::span<const int> rows);

ConstraintSet append_constraints(const ConstraintSet& a, const ConstraintSet& b);

/// Constraint-independent precomputation for one dictionary: D^T L D,
/// K_l D per example, tr(V_l^T L V_l) and the smoothness diagonal.
struct SolverSystem {
  std::shared_ptr<const BlendDictionary> dictionary;
  Eigen::MatrixXd Ltilde;
  std::vector<Eigen::MatrixXd> Ktilde;
  Eigen::VectorXd restEnergy;
  Eigen::VectorXd smoothness;
  double ridge = 0.0;  // absolute
  int numClusters = 0;

  int size() const { return static_cast<int>(Ltilde.rows()); }
  int numExamples() const { return static_cast<int>(Ktilde.size()); }
};

std::shared_ptr<const SolverSystem> make_solver_system(
    std::shared_ptr<const BlendDictionary> dictionary, const ExampleArap& arap,
    Eigen::VectorXd smoothness, double relativeRidge = SolveParams{}.ridge);

/// A solver system bound to one constraint set: X = H D and the Cholesky
/// factor of Gamma = D^T L D + beta_lc X^T X + beta_sm Lambda + ridge I.
struct ConstrainedSystem {
  std::shared_ptr<const SolverSystem> system;
  ConstraintSet constraints;
  double betaLc = 0.0;
  double betaSm = 0.0;
  Eigen::MatrixXd X;
  Eigen::MatrixXd XtX;
  MatrixX3d XtY;
  Eigen::MatrixXd gamma;
  Eigen::LLT<Eigen::MatrixXd> factor;

  int size() const { return system->size(); }
};

ConstrainedSystem constrain(std::shared_ptr<const SolverSystem> system, ConstraintSet constraints,
                            const SolveParams& params);

using Rotations = std::vector<Eigen::Matrix3d>;

struct SolveState {
  SolveMode mode = SolveMode::Average;
  MatrixX3d T;
  std::vector<Rotations> rotations;  // per example, per cluster
  Eigen::VectorXd alpha;             // per example; equal entries in average mode
  Eigen::VectorXd exampleWeights;    // weights of the examples in the global step
  int selectedExample = 0;
  double energy = 0.0;
  // minimal mode: one candidate solution per example
  std::vector<MatrixX3d> perExampleT;
  Eigen::VectorXd perExampleEnergy;
};

struct PhaseLog {
  std::string name;
  std::vector<double> energies;  // after every local, scale and global step
  int iterations = 0;
};

// --- energy terms --------------------------------------------------------

/// 1/2 |X T - Y|^2
double energy_linear_constraints(const ConstrainedSystem& cs, const MatrixX3d& T);

/// 1/2 tr(T^T Lambda T)
double energy_smoothness(const SolverSystem& sys, const MatrixX3d& T);

/// sum_k tr(R_k S_k) with S = K_l D T.
double arap_coupling(const SolverSystem& sys, int example, const Rotations& R, const MatrixX3d& T);

/// 1/2 [tr(T^T D^T L D T) - 2 alpha tr(R K_l D T) + alpha^2 tr(V_l^T L V_l)]
double energy_scaled_arap(const SolverSystem& sys, int example, const Rotations& R, double alpha,
                          const MatrixX3d& T);

double energy_ridge(const SolverSystem& sys, const MatrixX3d& T);

/// Average of the scaled ARAP energies plus weighted constraint and
/// smoothness terms (and the ridge).
double energy_total_average(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                            double alpha, const MatrixX3d& T);

/// Energy of one example in minimal mode.
double energy_example(const ConstrainedSystem& cs, int example, const Rotations& R, double alpha,
                      const MatrixX3d& T);

/// Minimum of energy_example over the per-example candidates of `state`, and
/// its argmin (smallest index on ties).
std::pair<double, int> energy_minimal(const ConstrainedSystem& cs, const SolveState& state);

/// Gradient of energy_total_average with respect to T (Gamma T - rhs).
MatrixX3d gradient_total_average(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                                 double alpha, const MatrixX3d& T);

// --- alternation steps ---------------------------------------------------

Rotations local_step(const SolverSystem& sys, int example, const MatrixX3d& T,
                     const Rotations& previous = {});

double clamp_scale(double alpha);

/// Average mode: the exact minimizer sum_l tr(R_l K_l D T) / sum_l tr(V_l^T L V_l),
/// clamped to [1e-3, 1e3].
double scale_step(const SolverSystem& sys, const std::vector<Rotations>& R, const MatrixX3d& T);

/// Minimal mode: the scale of one example.
double scale_step_example(const SolverSystem& sys, int example, const Rotations& R,
                          const MatrixX3d& T);

/// T = Gamma^-1 (beta_lc X^T Y + sum_l w_l alpha_l K_l^T R_l^T).
MatrixX3d global_step(const ConstrainedSystem& cs, const std::vector<Rotations>& R,
                      const Eigen::VectorXd& alpha, const Eigen::VectorXd& exampleWeights);

/// beta_lc X^T X + beta_sm Lambda, with a ridge of 1e-10 times its mean
/// diagonal when it is singular or nearly so.
Eigen::MatrixXd initial_system(const ConstrainedSystem& cs);

/// Closed-form start without rotations: (beta_lc X^T X + beta_sm Lambda)^-1 beta_lc X^T Y.
MatrixX3d init_transformations(const ConstrainedSystem& cs);

struct ElasticNetReport {
  int sweeps = 0;
  double maxChange = 0.0;
  int polishedColumns = 0;  // columns finished by the exact active-set solve
};

/// Minimizes the initial energy plus beta_sp |T|_1 (entrywise) by cyclic
/// coordinate descent with soft thresholding, then finishes each column with
/// an active-set solve started from the descent's support and signs. A column
/// whose active-set loop does not settle keeps the descent result.
MatrixX3d sparse_init(const ConstrainedSystem& cs, const SolveParams& params,
                      ElasticNetReport* report = nullptr);

// --- phases and schedule -------------------------------------------------

SolveState make_average_state(const SolverSystem& sys, const MatrixX3d& T, double alpha = 1.0);

/// Local, scale and global steps in average mode until the relative energy
/// decrease falls below tol or maxIters is reached.
PhaseLog run_average(const ConstrainedSystem& cs, SolveState& state, const SolveParams& params,
                     int maxIters);

/// Minimal mode: every example runs its own alternation in lock step; the
/// state ends on the example with the smallest energy.
PhaseLog run_minimal(const ConstrainedSystem& cs, SolveState& state, const SolveParams& params,
                     int maxIters);

/// Re-expresses a state in another dictionary (coefficients only; rotations
/// and scales carry over).
SolveState change_state_dictionary(const SolveState& state, const Eigen::MatrixXd& changeOperator);

struct ScheduleResult {
  SolveState state;
  std::vector<PhaseLog> log;
  bool onRich = false;  // which system the state belongs to
};

/// Sparse start on the coarse system, average then minimal alternation, then
/// (when `rich` is given) conversion to the rich dictionary and minimal
/// refinement there.
ScheduleResult solve_schedule(const ConstrainedSystem& coarse, const ConstrainedSystem* rich,
                              const Eigen::MatrixXd* changeOperator, const SolveParams& params);

/// Blends two solved states of the same system: rotations by slerp, scales
/// geometrically, example weights and constraints linearly, followed by one
/// global step.
SolveState interpolate_poses(const ConstrainedSystem& a, const SolveState& stateA,
                             const ConstrainedSystem& b, const SolveState& stateB, double t);

MatrixX3d reconstruct(const BlendDictionary& dict, const MatrixX3d& T);

}  // namespace blendforge
