#include "blendforge/dictionary.hpp"

#include <algorithm>
#include <fstream>

#include <Eigen/Dense>

#include "blendforge/binary_io.hpp"

namespace blendforge {

ExampleSet make_example_set(const std::vector<TriMesh>& meshes) {
  if (meshes.empty()) throw Error("example set needs at least one mesh");
  ExampleSet set;
  set.faces = meshes.front().F;
  for (size_t l = 0; l < meshes.size(); ++l) {
    const auto& mesh = meshes[l];
    if (mesh.numVertices() != meshes.front().numVertices())
      throw Error("example " + std::to_string(l) + " has " + std::to_string(mesh.numVertices()) +
                  " vertices, expected " + std::to_string(meshes.front().numVertices()));
    if (mesh.F.rows() != set.faces.rows() || mesh.F != set.faces)
      throw Error("example " + std::to_string(l) + " does not share the face list");
    validate(mesh);
    set.poses.push_back(mesh.V);
  }
  return set;
}

ExampleSet load_example_set(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("examples directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".off" || ext == ".obj") files.push_back(entry.path());
  }
  if (files.empty()) throw Error("no .off or .obj meshes in '" + dir.string() + "'");
  std::sort(files.begin(), files.end());
  std::vector<TriMesh> meshes;
  for (const auto& f : files) meshes.push_back(load_mesh(f));
  return make_example_set(meshes);
}

ExampleArap precompute_example_arap(const ExampleSet& examples, const RotationClusters& clusters) {
  ExampleArap out;
  out.L = arap_laplacian(clusters, examples.numVertices());
  out.numClusters = clusters.size();
  out.restEnergy.resize(examples.size());
  for (int l = 0; l < examples.size(); ++l) {
    out.K.push_back(arap_covariance_operator(examples.poses[l], clusters));
    const MatrixX3d& V = examples.poses[l];
    out.restEnergy(l) = (V.transpose() * (out.L * V)).trace();
  }
  return out;
}

BlendDictionary build_dictionary(const ExampleSet& examples, const WeightField& field) {
  const Eigen::Index n = examples.numVertices();
  if (field.weights.rows() != n)
    throw Error("weight field has " + std::to_string(field.weights.rows()) +
                " rows, examples have " + std::to_string(n) + " vertices");
  const int m = field.size();
  const int q = examples.size();
  BlendDictionary dict;
  dict.source = field.source;
  dict.numExamples = q;
  dict.atoms.resize(n, static_cast<Eigen::Index>(1 + 3 * q) * m);
  dict.tags.reserve(dict.atoms.cols());
  Eigen::Index col = 0;
  for (int j = 0; j < m; ++j) {
    dict.atoms.col(col++) = field.weights.col(j);
    dict.tags.push_back({BlockKind::Bar, -1, j, field.functionIndex[j], -1});
  }
  for (int l = 0; l < q; ++l) {
    for (int j = 0; j < m; ++j) {
      for (int c = 0; c < 3; ++c) {
        dict.atoms.col(col++) = field.weights.col(j).cwiseProduct(examples.poses[l].col(c));
        dict.tags.push_back({BlockKind::Hat, l, j, field.functionIndex[j], c});
      }
    }
  }
  return dict;
}

MatrixX3d identity_coefficients(const BlendDictionary& dict, int example) {
  MatrixX3d T = MatrixX3d::Zero(dict.size(), 3);
  for (int a = 0; a < dict.size(); ++a) {
    const AtomTag& tag = dict.tags[a];
    if (tag.kind == BlockKind::Hat && tag.example == example) T(a, tag.coord) = 1.0;
  }
  return T;
}

Eigen::MatrixXd atom_distances(const BlendDictionary& dict, const Eigen::VectorXd& vertexWeights) {
  Eigen::MatrixXd scaled = dict.atoms;
  if (vertexWeights.size() > 0) {
    if (vertexWeights.size() != dict.numVertices()) throw Error("vertex weight size mismatch");
    scaled = vertexWeights.cwiseSqrt().asDiagonal() * dict.atoms;
  }
  for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
    const double norm = scaled.col(j).norm();
    if (norm > 0) scaled.col(j) /= norm;
  }
  const Eigen::MatrixXd gram = scaled.transpose() * scaled;
  const Eigen::Index b = gram.rows();
  Eigen::MatrixXd dist(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      const double sq = gram(i, i) + gram(j, j) - 2.0 * gram(i, j);
      // cancellation noise on (nearly) identical columns
      dist(i, j) = sq <= 1e-14 * (gram(i, i) + gram(j, j)) ? 0.0 : std::sqrt(sq);
    }
  }
  return dist;
}

BlendDictionary reduce_dictionary(const BlendDictionary& dict, int targetSize, std::uint64_t seed,
                                  const Eigen::VectorXd& vertexWeights,
                                  const std::vector<int>& keep) {
  if (targetSize < 1) throw Error("dictionary reduction target must be at least 1");
  if (targetSize > dict.size()) throw Error("dictionary reduction target exceeds its size");
  std::vector<char> kept(dict.size(), 0);
  for (int a : keep) {
    if (a < 0 || a >= dict.size()) throw Error("kept atom index out of range");
    kept[a] = 1;
  }
  const int numKept = static_cast<int>(std::count(kept.begin(), kept.end(), 1));
  if (targetSize < numKept) throw Error("dictionary reduction target below the kept atoms");
  if (targetSize == dict.size()) return dict;

  std::vector<int> chosen;
  std::vector<int> free;
  for (int a = 0; a < dict.size(); ++a) (kept[a] ? chosen : free).push_back(a);
  const int k = targetSize - numKept;
  if (k > 0) {
    BlendDictionary pool;
    pool.atoms.resize(dict.numVertices(), static_cast<Eigen::Index>(free.size()));
    for (std::size_t i = 0; i < free.size(); ++i) pool.atoms.col(i) = dict.atoms.col(free[i]);
    pool.tags.resize(free.size());
    const KMedoidsResult km = k_medoids(atom_distances(pool, vertexWeights), k, seed);
    for (int medoid : km.medoids) chosen.push_back(free[medoid]);
  }
  std::sort(chosen.begin(), chosen.end());

  BlendDictionary out;
  out.source = dict.source;
  out.numExamples = dict.numExamples;
  out.atoms.resize(dict.numVertices(), targetSize);
  for (int s = 0; s < targetSize; ++s) {
    out.atoms.col(s) = dict.atoms.col(chosen[s]);
    out.tags.push_back(dict.tags[chosen[s]]);
  }
  return out;
}

Eigen::MatrixXd dictionary_change_operator(const BlendDictionary& from, const BlendDictionary& to) {
  if (from.numVertices() != to.numVertices())
    throw Error("dictionaries are defined over different vertex counts");
  const Eigen::MatrixXd gram = to.atoms.transpose() * to.atoms;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double cutoff = 1e-10 * ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
  const Eigen::MatrixXd pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return pinv * (to.atoms.transpose() * from.atoms);
}

MatrixX3d change_dictionary(const BlendDictionary& from, const BlendDictionary& to,
                            const MatrixX3d& coefficients) {
  if (coefficients.rows() != from.size()) throw Error("coefficient rows do not match dictionary");
  return dictionary_change_operator(from, to) * coefficients;
}

void save_dictionary(const BlendDictionary& dict, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(dict.numVertices()));
  detail::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(dict.size()));
  for (Eigen::Index j = 0; j < dict.atoms.cols(); ++j)
    for (Eigen::Index i = 0; i < dict.atoms.rows(); ++i) detail::write_le(out, dict.atoms(i, j));
  for (const AtomTag& tag : dict.tags) {
    if (tag.kind == BlockKind::Bar)
      out << "bar " << tag.weight << ' ' << tag.function << '\n';
    else
      out << "hat " << tag.example << ' ' << tag.weight << ' ' << tag.function << ' ' << tag.coord
          << '\n';
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace blendforge
