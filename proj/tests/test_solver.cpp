#include <doctest.h>

#include <random>

#include "blendforge/nearest.hpp"
#include "fixtures.hpp"

using namespace blendforge;
using namespace blendforge::testing;

namespace {

// A three-bone bar with imported weights and its examples, small enough for
// dense oracles.
struct BarProblem {
  synthetic::ArticulatedBar bar;
  ExampleSet examples;
  RotationClusters clusters;
  std::shared_ptr<const BlendDictionary> dict;
  std::shared_ptr<const SolverSystem> system;
};

BarProblem bar_problem(int q, std::uint64_t seed, double betaSmDiag = 0.0) {
  BarProblem p{synthetic::articulated_bar(3, 10, 8), {}, {}, {}, {}};
  std::mt19937_64 rng(seed);
  std::vector<TriMesh> meshes{p.bar.rest};
  for (int l = 1; l < q; ++l)
    meshes.push_back(
        {synthetic::pose_bar(p.bar, synthetic::random_bar_rotations(p.bar, rng, 0.6)), p.bar.rest.F});
  p.examples = make_example_set(meshes);
  WeightField field;
  field.weights = p.bar.weights;
  field.source = WeightSource::SkeletonImport;
  field.functionIndex = {0, 1, 2};
  p.clusters = build_rotation_clusters(field, p.bar.rest, 3);
  p.dict = std::make_shared<const BlendDictionary>(build_dictionary(p.examples, field));
  const Eigen::VectorXd smooth = Eigen::VectorXd::Constant(p.dict->size(), betaSmDiag);
  p.system = make_solver_system(p.dict, precompute_example_arap(p.examples, p.clusters), smooth);
  return p;
}

// 1/2 sum_k sum_(i,j) in E_k w_ij |(x_i - x_j) - alpha R_k (v_i - v_j)|^2 on explicit vertices.
double arap_oracle(const RotationClusters& clusters, const MatrixX3d& rest, const MatrixX3d& X,
                   const Rotations& R, double alpha) {
  double e = 0.0;
  for (int k = 0; k < clusters.size(); ++k)
    for (const WeightedEdge& edge : clusters.edgeSets[k]) {
      const Eigen::Vector3d d = (X.row(edge.i) - X.row(edge.j)).transpose();
      const Eigen::Vector3d v = (rest.row(edge.i) - rest.row(edge.j)).transpose();
      e += edge.weight * (d - alpha * R[k] * v).squaredNorm();
    }
  return 0.5 * e;
}

Rotations random_rotations(int count, std::mt19937_64& rng) {
  Rotations R;
  for (int k = 0; k < count; ++k) R.push_back(random_rotation(rng));
  return R;
}

ConstrainedSystem pinned(const BarProblem& p, const MatrixX3d& target, int count,
                         const SolveParams& params) {
  const auto pins = farthest_point_sample(p.bar.rest.V, count);
  return constrain(p.system, pins_from(pins, target), params);
}

}  // namespace

TEST_CASE("energy terms match explicit sums") {
  const BarProblem p = bar_problem(3, 1, 0.5);
  std::mt19937_64 rng(7);
  SolveParams params;
  params.betaLc = 2.0;
  params.betaSm = 0.5;
  const ConstrainedSystem cs = pinned(p, p.examples.poses[1], 6, params);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixX3d T = random_matrix(p.dict->size(), 3, rng);
    const MatrixX3d X = reconstruct(*p.dict, T);
    const Rotations R = random_rotations(p.clusters.size(), rng);
    for (int l = 0; l < 3; ++l) {
      const double alpha = 0.5 + l;
      const double oracle = arap_oracle(p.clusters, p.examples.poses[l], X, R, alpha);
      CHECK(energy_scaled_arap(*p.system, l, R, alpha, T) ==
            doctest::Approx(oracle).epsilon(1e-9));
    }
    MatrixX3d residual = cs.X * T - cs.constraints.Y;
    CHECK(energy_linear_constraints(cs, T) ==
          doctest::Approx(0.5 * residual.squaredNorm()).epsilon(1e-12));
    CHECK(energy_smoothness(*p.system, T) ==
          doctest::Approx(0.5 * 0.5 * T.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("rotation fit") {
  std::mt19937_64 rng(11);
  const Eigen::Matrix3d S = Eigen::Vector3d(1, 1, -1).asDiagonal();
  const Eigen::Matrix3d R = project_rotation(S);
  CHECK(is_rotation(R, 1e-12));
  CHECK((R * S).trace() == doctest::Approx(1.0).epsilon(1e-12));
  double best = -3.0;
  for (int i = 0; i < 1000000; ++i) best = std::max(best, (random_rotation(rng) * S).trace());
  CHECK(best <= 1.0 + 1e-12);

  const Eigen::Matrix3d fallback = random_rotation(rng);
  CHECK(project_rotation(Eigen::Matrix3d::Zero().eval(), fallback) == fallback);
  Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(project_rotation(bad), SolverError);

  // rank one input still yields a proper rotation
  const Eigen::Vector3d u = random_matrix(3, 1, rng), v = random_matrix(3, 1, rng);
  CHECK(is_rotation(project_rotation((u * v.transpose()).eval()), 1e-10));
}

TEST_CASE("scale step recovers a uniform scale") {
  const BarProblem p = bar_problem(2, 2);
  const MatrixX3d T = 2.0 * identity_coefficients(*p.dict, 0);
  const Rotations R = local_step(*p.system, 0, T);
  for (const auto& Rk : R) CHECK((Rk - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(scale_step_example(*p.system, 0, R, T) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(clamp_scale(1e6) == 1e3);
  CHECK(clamp_scale(-1.0) == 1e-3);
}

TEST_CASE("global step zeroes the gradient, gradient matches finite differences") {
  const BarProblem p = bar_problem(3, 3, 0.2);
  std::mt19937_64 rng(5);
  SolveParams params;
  params.betaSm = 0.7;
  const ConstrainedSystem cs = pinned(p, p.examples.poses[2], 8, params);
  std::vector<Rotations> R;
  for (int l = 0; l < 3; ++l) R.push_back(random_rotations(p.clusters.size(), rng));
  const double alpha = 1.3;
  const MatrixX3d T = global_step(cs, R, Eigen::Vector3d::Constant(alpha),
                                  Eigen::Vector3d::Constant(1.0 / 3));
  const MatrixX3d g0 = gradient_total_average(cs, R, alpha, MatrixX3d::Zero(T.rows(), 3));
  CHECK(gradient_total_average(cs, R, alpha, T).norm() <= 1e-8 * g0.norm());

  const MatrixX3d T1 = random_matrix(T.rows(), 3, rng);
  const MatrixX3d g = gradient_total_average(cs, R, alpha, T1);
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < T1.size(); ++i) {
    MatrixX3d plus = T1, minus = T1;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    const double fd = (energy_total_average(cs, R, alpha, plus) -
                       energy_total_average(cs, R, alpha, minus)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g.data()[i]));
  }
  CHECK(worst <= 1e-5 * g.norm());
}

TEST_CASE("closed-form initialization") {
  const BarProblem p = bar_problem(2, 4, 1.0);
  SolveParams params;
  params.betaSm = 0.25;
  ConstrainedSystem cs = pinned(p, MatrixX3d::Zero(p.bar.rest.numVertices(), 3), 6, params);
  CHECK(init_transformations(cs).isZero(0.0));

  // full pins make X^T X invertible: compare with a dense solve
  std::vector<int> all(p.bar.rest.numVertices());
  for (int i = 0; i < static_cast<int>(all.size()); ++i) all[i] = i;
  cs = constrain(p.system, pins_from(all, p.examples.poses[1]), params);
  const Eigen::MatrixXd Q = params.betaLc * cs.X.transpose() * cs.X +
                            params.betaSm * Eigen::MatrixXd(p.system->smoothness.asDiagonal());
  const MatrixX3d oracle = Q.ldlt().solve(params.betaLc * cs.X.transpose() * cs.constraints.Y);
  CHECK((init_transformations(cs) - oracle).cwiseAbs().maxCoeff() <=
        1e-8 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("elastic net limits") {
  const BarProblem p = bar_problem(2, 6, 1.0);
  SolveParams params;
  const ConstrainedSystem cs = pinned(p, p.examples.poses[1], 10, params);

  params.betaSp = 0.0;
  const MatrixX3d dense = init_transformations(cs);
  CHECK((sparse_init(cs, params) - dense).cwiseAbs().maxCoeff() <=
        1e-6 * dense.cwiseAbs().maxCoeff());

  // beyond max |beta_lc X^T Y| everything is thresholded away
  params.betaSp = 1.0001 * cs.XtY.cwiseAbs().maxCoeff() * params.betaLc;
  CHECK(sparse_init(cs, params).isZero(0.0));

  params.betaSp = 1.0;
  ElasticNetReport report;
  const MatrixX3d T = sparse_init(cs, params, &report);
  CHECK(report.sweeps > 0);
  CHECK(report.polishedColumns == 3);
  // optimality: |gradient| <= beta_sp off the support, = beta_sp on it
  const MatrixX3d grad = initial_system(cs) * T - params.betaLc * cs.XtY;
  for (Eigen::Index i = 0; i < T.size(); ++i) {
    if (T.data()[i] == 0.0)
      CHECK(std::abs(grad.data()[i]) <= params.betaSp * (1 + 1e-6));
    else
      CHECK(grad.data()[i] == doctest::Approx(-params.betaSp * std::copysign(1.0, T.data()[i]))
                                   .epsilon(1e-6));
  }
}

TEST_CASE("constraint editing") {
  MatrixX3d targets(3, 3);
  targets << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const std::vector<int> verts{4, 0, 2};
  const ConstraintSet cs = point_constraints(verts, targets, 6);
  CHECK(cs.size() == 3);
  CHECK(cs.H.coeff(0, 4) == 1.0);
  const std::vector<int> drop{1};
  const ConstraintSet fewer = remove_constraints(cs, drop);
  CHECK(fewer.size() == 2);
  CHECK(fewer.Y.row(1) == targets.row(2));
  const ConstraintSet again = append_constraints(fewer, point_constraints(std::vector<int>{0},
                                                                          targets.row(1), 6));
  CHECK(again.size() == 3);
  CHECK(Eigen::MatrixXd(again.H).row(2) == Eigen::MatrixXd(cs.H).row(1));
  const std::vector<int> everything{0, 1, 2};
  CHECK_THROWS_AS(remove_constraints(cs, everything), Error);
  CHECK_THROWS_AS(point_constraints(std::vector<int>{9}, targets.topRows(1), 6), Error);
}

TEST_CASE("schedule recovers an example and picks it in minimal mode") {
  const auto animal = synthetic::make_quadruped(24, 16);
  const auto scene = quadruped_scenario(animal, 3, 17, 0.5, 0.5);
  ModelOptions mo;
  mo.mRich = 8;
  const auto model = build_model(make_example_set(scene.examples), mo);
  const auto pins = farthest_point_sample(animal.rest.V, 30);
  const auto out = solve(*model, pins_from(pins, scene.examples[2].V), SolveParams{});
  CHECK(max_distortion(out.vertices, scene.examples[2]) <= 0.02);
  CHECK(out.schedule.state.selectedExample == 2);
  const auto [energy, argmin] = energy_minimal(*out.system, out.schedule.state);
  CHECK(argmin == 2);
  double brute = std::numeric_limits<double>::infinity();
  for (int l = 0; l < 3; ++l)
    brute = std::min(brute, energy_example(*out.system, l, out.schedule.state.rotations[l],
                                           out.schedule.state.alpha(l),
                                           out.schedule.state.perExampleT[l]));
  CHECK(energy == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("scaled targets are detected") {
  const auto animal = synthetic::make_quadruped(24, 16);
  const auto scene = quadruped_scenario(animal, 2, 21, 0.4, 0.4);
  ModelOptions mo;
  mo.mRich = 8;
  const auto model = build_model(make_example_set(scene.examples), mo);
  const auto pins = farthest_point_sample(animal.rest.V, 16);
  const MatrixX3d target = 1.5 * scene.examples[1].V;
  const auto out = solve(*model, pins_from(pins, target), SolveParams{});
  const auto& state = out.schedule.state;
  CHECK(state.alpha(state.selectedExample) == doctest::Approx(1.5).epsilon(0.02));
}

TEST_CASE("solution rotates with rigidly moved pins when sparsity is off") {
  const auto animal = synthetic::make_quadruped(24, 16);
  const auto scene = quadruped_scenario(animal, 2, 23, 0.4, 0.4);
  ModelOptions mo;
  mo.mRich = 8;
  const auto model = build_model(make_example_set(scene.examples), mo);
  const auto pins = farthest_point_sample(animal.rest.V, 16);
  SolveParams params;
  params.betaSp = 0.0;
  const auto a = solve(*model, pins_from(pins, scene.heldOut.V), params);
  const Eigen::Matrix3d Q = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).matrix();
  const MatrixX3d rotated = scene.heldOut.V * Q.transpose();
  const auto b = solve(*model, pins_from(pins, rotated), params);
  CHECK(((a.vertices * Q.transpose()) - b.vertices).rowwise().norm().maxCoeff() <=
        1e-6 * std::sqrt(model->area));
}

TEST_CASE("interpolation endpoints") {
  const BarProblem p = bar_problem(2, 8);
  SolveParams params;
  const ConstrainedSystem a = pinned(p, p.examples.poses[0], 8, params);
  const ConstrainedSystem b = pinned(p, p.examples.poses[1], 8, params);
  SolveState sa = make_average_state(*p.system, init_transformations(a));
  run_average(a, sa, params, 50);
  SolveState sb = make_average_state(*p.system, init_transformations(b));
  run_average(b, sb, params, 50);
  const SolveState at0 = interpolate_poses(a, sa, b, sb, 0.0);
  const SolveState at1 = interpolate_poses(a, sa, b, sb, 1.0);
  const double scale = reconstruct(*p.dict, sa.T).cwiseAbs().maxCoeff();
  // the endpoint states are fixed points of the global step only up to the
  // phase tolerance
  CHECK((reconstruct(*p.dict, at0.T) - reconstruct(*p.dict, sa.T)).cwiseAbs().maxCoeff() <=
        1e-3 * scale);
  CHECK((reconstruct(*p.dict, at1.T) - reconstruct(*p.dict, sb.T)).cwiseAbs().maxCoeff() <=
        1e-3 * scale);
}

TEST_CASE("parameter validation") {
  SolveParams params;
  CHECK_NOTHROW(params.validate());
  params.betaLc = 0;
  CHECK_THROWS_AS(params.validate(), Error);
  params = {};
  params.betaSp = -1;
  CHECK_THROWS_AS(params.validate(), Error);
  params = {};
  params.tol = 0;
  CHECK_THROWS_AS(params.validate(), Error);
}
