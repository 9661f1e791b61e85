#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <tuple>

#include "blendforge/dictionary.hpp"
#include "blendforge/synthetic.hpp"
#include "fixtures.hpp"

using namespace blendforge;

namespace {

WeightField skeleton_field(const Eigen::MatrixXd& weights) {
  WeightField field;
  field.weights = weights;
  field.source = WeightSource::SkeletonImport;
  for (int j = 0; j < weights.cols(); ++j) field.functionIndex.push_back(j);
  return field;
}

ExampleSet bar_examples(const synthetic::ArticulatedBar& bar, int q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TriMesh> meshes{bar.rest};
  for (int l = 1; l < q; ++l)
    meshes.push_back({synthetic::pose_bar(bar, synthetic::random_bar_rotations(bar, rng, 0.5)),
                      bar.rest.F});
  return make_example_set(meshes);
}

double exhaustive_best_cost(const Eigen::MatrixXd& d, int k) {
  const int n = static_cast<int>(d.rows());
  std::vector<char> mask(n, 0);
  std::fill(mask.begin(), mask.begin() + k, 1);
  double best = std::numeric_limits<double>::infinity();
  do {
    std::vector<int> medoids;
    for (int i = 0; i < n; ++i)
      if (mask[i]) medoids.push_back(i);
    best = std::min(best, medoid_cost(d, medoids));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

Eigen::MatrixXd euclidean_distances(const Eigen::MatrixXd& pts) {
  Eigen::MatrixXd d(pts.rows(), pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = 0; j < pts.rows(); ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
  return d;
}

}  // namespace

TEST_CASE("dictionary size and layout") {
  const TriMesh sphere = synthetic::icosphere(1);
  std::vector<TriMesh> meshes(5, sphere);
  const ExampleSet examples = make_example_set(meshes);
  std::mt19937_64 rng(2);
  const BlendDictionary dict =
      build_dictionary(examples, skeleton_field(testing::random_matrix(sphere.numVertices(), 15, rng)));
  CHECK(dict.size() == 240);
  CHECK(dict.numExamples == 5);
  CHECK(dict.tags[0].kind == BlockKind::Bar);
  CHECK(dict.tags[15].kind == BlockKind::Hat);
  CHECK(dict.tags[15].example == 0);

  TriMesh other = sphere;
  other.F.row(0) = other.F.row(0).reverse().eval();
  CHECK_THROWS_AS(make_example_set({sphere, other}), Error);
  CHECK_THROWS_AS(make_example_set({sphere, synthetic::icosphere(0)}), Error);
}

TEST_CASE("atoms match a brute-force construction on a tetrahedron") {
  const TriMesh tet = synthetic::tetrahedron();
  TriMesh moved = tet;
  moved.V.col(0) *= 2.0;
  const ExampleSet examples = make_example_set({tet, moved});
  Eigen::MatrixXd w(4, 2);
  w << 1, 0, 0.5, 0.5, 0.2, 0.8, 0, 1;
  const BlendDictionary dict = build_dictionary(examples, skeleton_field(w));
  REQUIRE(dict.size() == 14);
  for (int a = 0; a < dict.size(); ++a) {
    const AtomTag& tag = dict.tags[a];
    Eigen::VectorXd expected(4);
    for (int i = 0; i < 4; ++i)
      expected(i) = tag.kind == BlockKind::Bar
                        ? w(i, tag.weight)
                        : w(i, tag.weight) * examples.poses[tag.example](i, tag.coord);
    CHECK(dict.atoms.col(a) == expected);
  }
  // provenance covers every (example, weight, coord) triple once
  std::set<std::tuple<int, int, int>> seen;
  for (const AtomTag& tag : dict.tags)
    if (tag.kind == BlockKind::Hat) seen.insert({tag.example, tag.weight, tag.coord});
  CHECK(seen.size() == 12);
}

TEST_CASE("identity coefficients reproduce every example") {
  const auto bar = synthetic::articulated_bar(3, 12, 8);
  const ExampleSet examples = bar_examples(bar, 3, 5);
  const BlendDictionary dict = build_dictionary(examples, skeleton_field(bar.weights));
  for (int l = 0; l < 3; ++l) {
    const MatrixX3d shape = dict.atoms * identity_coefficients(dict, l);
    CHECK((shape - examples.poses[l]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("k-medoids finds the optimum on separated groups") {
  Eigen::MatrixXd pts(6, 1);
  pts << 0, 0.1, 0.3, 5, 5.2, 5.3;
  const Eigen::MatrixXd d = euclidean_distances(pts);
  const KMedoidsResult r = k_medoids(d, 2, 1);
  CHECK(r.medoids == std::vector<int>{1, 4});
  CHECK(r.cost == doctest::Approx(exhaustive_best_cost(d, 2)));
  CHECK(r.assignment(0) == r.assignment(2));
  CHECK(r.assignment(3) == r.assignment(5));
  CHECK(r.assignment(0) != r.assignment(3));
}

TEST_CASE("k-medoids cost history is non-increasing and near optimal") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd d = euclidean_distances(testing::random_matrix(10, 2, rng));
    for (int k : {1, 3, 5}) {
      const KMedoidsResult r = k_medoids(d, k, trial);
      CHECK(static_cast<int>(r.medoids.size()) == k);
      CHECK(std::is_sorted(r.medoids.begin(), r.medoids.end()));
      for (size_t s = 1; s < r.costHistory.size(); ++s)
        CHECK(r.costHistory[s] <= r.costHistory[s - 1]);
      CHECK(r.cost == doctest::Approx(medoid_cost(d, r.medoids)));
      CHECK(r.cost >= exhaustive_best_cost(d, k) - 1e-12);
      CHECK(r.cost <= 1.5 * exhaustive_best_cost(d, k) + 1e-12);
    }
  }
  const Eigen::MatrixXd d = euclidean_distances(testing::random_matrix(5, 2, rng));
  const KMedoidsResult all = k_medoids(d, 5, 0);
  CHECK(all.cost == 0.0);
  CHECK_THROWS_AS(k_medoids(d, 6, 0), Error);
}

TEST_CASE("atom distances: identical and rescaled columns coincide") {
  BlendDictionary dict;
  dict.atoms.resize(3, 3);
  dict.atoms << 1, 2, 0, 2, 4, 1, 3, 6, 0;
  dict.tags.resize(3);
  const Eigen::MatrixXd d = atom_distances(dict);
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) > 0.0);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(atom_distances(dict, Eigen::VectorXd::Ones(2)), Error);
}

TEST_CASE("reduction keeps protected atoms and the requested count") {
  const auto bar = synthetic::articulated_bar(4, 12, 8);
  const ExampleSet examples = bar_examples(bar, 3, 8);
  const BlendDictionary dict = build_dictionary(examples, skeleton_field(bar.weights));
  REQUIRE(dict.size() == 40);
  CHECK(reduce_dictionary(dict, 40).tags == dict.tags);
  const std::vector<int> keep{0, 1, 2, 3};
  const BlendDictionary reduced = reduce_dictionary(dict, 20, 1, {}, keep);
  CHECK(reduced.size() == 20);
  for (int a : keep) CHECK(reduced.tags[a] == dict.tags[a]);
  // original order is kept and every column is an original one
  int cursor = 0;
  for (int a = 0; a < reduced.size(); ++a) {
    while (!(dict.tags[cursor] == reduced.tags[a])) ++cursor;
    CHECK(reduced.atoms.col(a) == dict.atoms.col(cursor));
  }
  CHECK_THROWS_AS(reduce_dictionary(dict, 3, 1, {}, keep), Error);
  CHECK_THROWS_AS(reduce_dictionary(dict, 10, 1, {}, {99}), Error);
}

TEST_CASE("change of dictionary") {
  const auto bar = synthetic::articulated_bar(3, 12, 8);
  const ExampleSet examples = bar_examples(bar, 3, 2);
  const BlendDictionary rich = build_dictionary(examples, skeleton_field(bar.weights));
  std::mt19937_64 rng(3);
  const MatrixX3d T = testing::random_matrix(rich.size(), 3, rng);

  SUBCASE("onto itself preserves the shape") {
    const MatrixX3d back = change_dictionary(rich, rich, T);
    CHECK((rich.atoms * back - rich.atoms * T).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("from a sub-dictionary is exact") {
    const BlendDictionary coarse = reduce_dictionary(rich, 15, 1);
    const MatrixX3d Tc = testing::random_matrix(coarse.size(), 3, rng);
    const MatrixX3d Tr = change_dictionary(coarse, rich, Tc);
    CHECK((rich.atoms * Tr - coarse.atoms * Tc).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("onto a smaller dictionary is the least-squares projection") {
    const BlendDictionary coarse = reduce_dictionary(rich, 15, 1);
    const MatrixX3d Tc = change_dictionary(rich, coarse, T);
    const MatrixX3d target = rich.atoms * T;
    const MatrixX3d oracle = coarse.atoms.colPivHouseholderQr().solve(target);
    CHECK((coarse.atoms * Tc - coarse.atoms * oracle).cwiseAbs().maxCoeff() <= 1e-8);
  }
  CHECK_THROWS_AS(change_dictionary(rich, rich, MatrixX3d::Zero(3, 3)), Error);
}
