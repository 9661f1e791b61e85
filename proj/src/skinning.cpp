#include "blendforge/skinning.hpp"

#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "blendforge/log.hpp"

namespace blendforge {

WeightField import_skeleton_weights(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  long n = 0, m = 0;
  if (!(in >> n >> m) || n <= 0 || m <= 0)
    throw ParseError(path.string(), 1, "expected header 'n m'");
  if (n != mesh.numVertices())
    throw Error("weight file has " + std::to_string(n) + " rows but the mesh has " +
                std::to_string(mesh.numVertices()) + " vertices");
  WeightField field;
  field.source = WeightSource::SkeletonImport;
  field.weights.resize(n, m);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < m; ++j) {
      double w;
      if (!(in >> w)) throw ParseError(path.string(), static_cast<int>(i + 2), "missing weight");
      if (w < -1e-6)
        throw Error("negative weight " + std::to_string(w) + " at vertex " + std::to_string(i));
      field.weights(i, j) = std::max(w, 0.0);
    }
    const double sum = field.weights.row(i).sum();
    if (std::abs(sum - 1.0) > 0.01)
      throw Error("weights of vertex " + std::to_string(i) + " sum to " + std::to_string(sum));
    field.weights.row(i) /= sum;
  }
  field.functionIndex.resize(m);
  for (long j = 0; j < m; ++j) field.functionIndex[j] = static_cast<int>(j);
  return field;
}

WeightField lbo_weight_field(const SpectralBasis& basis, int m) {
  if (m < 0 || m >= basis.size())
    throw Error("requested " + std::to_string(m) + " eigenfunctions from a basis of " +
                std::to_string(basis.size()));
  WeightField field;
  field.source = WeightSource::LBO;
  field.weights = basis.eigenfunctions.leftCols(m + 1);
  field.functionIndex.resize(m + 1);
  for (int j = 0; j <= m; ++j) field.functionIndex[j] = j;
  return field;
}

Eigen::VectorXi kmeans_labels(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                              int iterations) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw Error("k-means needs at least one cluster");
  k = static_cast<int>(std::min<Eigen::Index>(k, n));
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Eigen::VectorXd nearest = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= nearest(pick);
        if (target <= 0) break;
      }
    }
    centers.row(c) = points.row(pick);
    nearest = nearest.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  Eigen::VectorXi labels = Eigen::VectorXi::Constant(n, -1);
  for (int iter = 0; iter < iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bestDist = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < bestDist) {
          bestDist = d;
          best = c;
        }
      }
      if (labels(i) != best) {
        labels(i) = best;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels(i)) += points.row(i);
      ++counts(labels(i));
    }
    for (int c = 0; c < k; ++c)
      if (counts(c) > 0) centers.row(c) = sums.row(c) / counts(c);
  }
  return labels;
}

namespace {

// Relabels to consecutive ids in order of first appearance of each id value.
int compact_labels(Eigen::VectorXi& labels) {
  std::vector<int> remap(labels.maxCoeff() + 1, -1);
  int next = 0;
  for (int id = 0; id < static_cast<int>(remap.size()); ++id)
    if ((labels.array() == id).any()) remap[id] = next++;
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels(i) = remap[labels(i)];
  return next;
}

}  // namespace

RotationClusters build_rotation_clusters(const WeightField& field, const TriMesh& mesh, int r,
                                         std::uint64_t seed) {
  if (r < 1) throw Error("need at least one rotation cluster");
  if (field.weights.rows() != mesh.numVertices())
    throw Error("weight field does not match the mesh");
  Eigen::VectorXi labels;
  if (field.source == WeightSource::SkeletonImport && r >= field.size()) {
    labels.resize(mesh.numVertices());
    for (Eigen::Index i = 0; i < mesh.numVertices(); ++i) {
      Eigen::Index best;
      field.weights.row(i).maxCoeff(&best);
      labels(i) = static_cast<int>(best);
    }
  } else {
    labels = kmeans_labels(field.weights, r, seed);
  }
  // vertices outside every face carry no edges; they keep their label but
  // clusters made only of such vertices are dropped
  Eigen::VectorXi used = Eigen::VectorXi::Constant(labels.maxCoeff() + 1, 0);
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f)
    for (int c = 0; c < 3; ++c) used(labels(mesh.F(f, c))) = 1;
  Eigen::Index firstUsed = 0;
  used.maxCoeff(&firstUsed);
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (!used(labels(i))) labels(i) = static_cast<int>(firstUsed);
  const int actual = compact_labels(labels);
  const int requested = field.source == WeightSource::SkeletonImport
                            ? std::min(r, field.size())
                            : std::min<int>(r, static_cast<int>(mesh.numVertices()));
  if (actual < requested)
    log_warning("rotation clusters reduced from " + std::to_string(requested) + " to " +
                std::to_string(actual) + " (empty clusters)");
  return spokes_and_rims_clusters(mesh, labels, actual);
}

}  // namespace blendforge
