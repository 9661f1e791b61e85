#include "blendforge/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "blendforge/log.hpp"
#include "blendforge/nearest.hpp"

namespace blendforge {

FeatureFile load_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open features file '" + path.string() + "'");
  FeatureFile file;
  std::string line;
  int lineNo = 0;
  bool sawCandidates = false;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string first;
    if (!(tokens >> first)) continue;
    if (first == "candidates") {
      if (sawCandidates) throw ParseError(path.string(), lineNo, "repeated candidates line");
      sawCandidates = true;
      int v = 0;
      while (tokens >> v) file.candidates.push_back(v);
      if (!tokens.eof()) throw ParseError(path.string(), lineNo, "bad candidate index");
      continue;
    }
    FeaturePoint fp;
    std::string model;
    try {
      size_t used = 0;
      fp.scanVertex = std::stoi(first, &used);
      if (used != first.size()) throw std::invalid_argument(first);
      if (!(tokens >> model)) throw std::invalid_argument("missing model vertex");
      if (model != "?") {
        fp.modelVertex = std::stoi(model, &used);
        if (used != model.size() || fp.modelVertex < 0) throw std::invalid_argument(model);
      }
    } catch (const std::logic_error&) {
      throw ParseError(path.string(), lineNo, "expected 'scanVertex modelVertex' or 'scanVertex ?'");
    }
    std::string extra;
    if (tokens >> extra) throw ParseError(path.string(), lineNo, "trailing tokens");
    file.features.push_back(fp);
  }
  if (file.features.empty()) throw Error("features file '" + path.string() + "' has no features");
  return file;
}

namespace {

// Area-weighted mean of the rows of `points` selected by distance <= radius.
Eigen::RowVector3d ball_average(const MatrixX3d& points, const Eigen::VectorXd& areas,
                                const Eigen::VectorXd& distance, double radius) {
  Eigen::RowVector3d sum = Eigen::RowVector3d::Zero();
  double total = 0.0;
  int count = 0;
  Eigen::RowVector3d plain = Eigen::RowVector3d::Zero();
  for (Eigen::Index i = 0; i < distance.size(); ++i) {
    if (!(distance(i) <= radius)) continue;
    sum += areas(i) * points.row(i);
    total += areas(i);
    plain += points.row(i);
    ++count;
  }
  if (count == 0) throw GeometryError("empty geodesic ball");
  return total > 0 ? (sum / total).eval() : (plain / count).eval();
}

}  // namespace

ConstraintSet feature_constraints(const DeformationModel& model, const PartialScan& scan,
                                  const FeatureOptions& options) {
  if (scan.features.empty()) throw Error("scan has no feature points");
  if (options.circles < 1) throw Error("need at least one circle per feature");
  if (!(options.radiusFrac >= 0)) throw Error("radius fraction must be non-negative");
  const TriMesh reference = model.examples.reference();
  const MeshGraph modelGraph = build_graph(reference);
  const MeshGraph scanGraph = build_graph(scan.mesh);
  const Eigen::VectorXd& modelAreas = model.laplacian.areaWeights;
  const Eigen::VectorXd scanAreas = voronoi_areas(scan.mesh);
  const double outer = options.radiusFrac * model.sqrtArea();
  const Eigen::Index n = model.numVertices();

  const Eigen::Index rows = static_cast<Eigen::Index>(scan.features.size()) * options.circles;
  ConstraintSet cs;
  cs.H.resize(rows, n);
  cs.Y.resize(rows, 3);
  std::vector<Triplet> triplets;
  Eigen::Index row = 0;
  for (const auto& fp : scan.features) {
    if (fp.modelVertex < 0 || fp.modelVertex >= n)
      throw Error("feature model vertex " + std::to_string(fp.modelVertex) + " unresolved or out of range");
    if (fp.scanVertex < 0 || fp.scanVertex >= scan.mesh.numVertices())
      throw Error("feature scan vertex " + std::to_string(fp.scanVertex) + " out of range");
    const Eigen::VectorXd modelDist = graph_distances(modelGraph, fp.modelVertex, outer);
    const Eigen::VectorXd scanDist = graph_distances(scanGraph, fp.scanVertex, outer);
    for (int c = 1; c <= options.circles; ++c) {
      const double radius = outer * c / options.circles;
      double total = 0.0;
      std::vector<int> ball;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (modelDist(i) <= radius) {
          ball.push_back(static_cast<int>(i));
          total += modelAreas(i);
        }
      }
      for (int i : ball)
        triplets.emplace_back(static_cast<int>(row), i,
                              total > 0 ? modelAreas(i) / total : 1.0 / ball.size());
      cs.Y.row(row) = ball_average(scan.mesh.V, scanAreas, scanDist, radius);
      ++row;
    }
  }
  cs.H.setFromTriplets(triplets.begin(), triplets.end());
  return cs;
}

std::vector<std::vector<int>> feature_permutations(const FeatureFile& file) {
  std::vector<int> open;
  std::vector<int> base;
  for (size_t f = 0; f < file.features.size(); ++f) {
    base.push_back(file.features[f].modelVertex);
    if (file.features[f].modelVertex < 0) open.push_back(static_cast<int>(f));
  }
  if (open.empty()) return {base};
  if (file.candidates.size() != open.size())
    throw Error(std::to_string(open.size()) + " unresolved features but " +
                std::to_string(file.candidates.size()) + " candidates");
  if (open.size() > 8) throw Error("too many unresolved features to enumerate");
  std::vector<int> order(open.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    std::vector<int> assignment = base;
    for (size_t k = 0; k < open.size(); ++k) assignment[open[k]] = file.candidates[order[k]];
    out.push_back(std::move(assignment));
  } while (std::next_permutation(order.begin(), order.end()));
  return out;
}

CandidateSearch correspondence_search_features(const DeformationModel& model,
                                               const PartialScan& scan,
                                               const std::vector<std::vector<int>>& candidates,
                                               const SolveParams& params,
                                               const FeatureOptions& options) {
  if (candidates.empty()) throw Error("no candidate correspondences");
  CandidateSearch search;
  if (candidates.size() == 1) {
    search.energies.push_back(0.0);
    return search;
  }
  SolveParams coarse = params;
  coarse.runAverage = true;
  coarse.runMinimal = true;
  for (const auto& assignment : candidates) {
    if (assignment.size() != scan.features.size())
      throw Error("candidate assignment does not cover every feature");
    PartialScan trial = scan;
    for (size_t f = 0; f < assignment.size(); ++f) trial.features[f].modelVertex = assignment[f];
    const ConstrainedSystem cs =
        constrain(model.coarse, feature_constraints(model, trial, options), coarse);
    const ScheduleResult result = solve_schedule(cs, nullptr, nullptr, coarse);
    search.energies.push_back(result.state.energy);
  }
  for (size_t k = 1; k < search.energies.size(); ++k)
    if (search.energies[k] < search.energies[search.best]) search.best = static_cast<int>(k);
  return search;
}

double CorrespondenceMap::meanDistance() const {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.distance;
  return sum / static_cast<double>(pairs.size());
}

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + mid));
  return m;
}

struct ScanIndex {
  KdTree tree;
  NormalField<double> normals;
  std::vector<char> boundary;  // vertex lies on an edge used by one face only
};

std::vector<char> boundary_vertices(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> edgeUse;
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      ++edgeUse[{std::min(a, b), std::max(a, b)}];
    }
  std::vector<char> boundary(mesh.numVertices(), 0);
  for (const auto& [edge, count] : edgeUse)
    if (count == 1) boundary[edge.first] = boundary[edge.second] = 1;
  return boundary;
}

CorrespondenceMap match_with(const TriMesh& deformed, const std::vector<int>& samples,
                             const ScanIndex& index, const IcpOptions& options) {
  const NormalField<double> normals = vertex_normals(deformed);
  const double cosLimit = std::cos(options.maxNormalAngleDeg * std::numbers::pi / 180.0);
  std::vector<Correspondence> raw;
  std::vector<double> distances;
  for (int i : samples) {
    const KdTree::Hit hit = index.tree.nearest(deformed.V.row(i).transpose());
    const double d = std::sqrt(hit.squaredDistance);
    raw.push_back({i, hit.index, d});
    distances.push_back(d);
  }
  const double limit = options.medianFactor * median(distances);
  CorrespondenceMap map;
  // Best model vertex per scan vertex.
  std::vector<int> owner(index.tree.size(), -1);
  for (size_t k = 0; k < raw.size(); ++k) {
    const auto& c = raw[k];
    const bool normalsOk =
        normals.valid(c.modelVertex) && index.normals.valid(c.scanVertex) &&
        normals.normals.row(c.modelVertex).dot(index.normals.normals.row(c.scanVertex)) >= cosLimit;
    const bool onBoundary = options.rejectBoundary && index.boundary[c.scanVertex];
    if (c.distance > limit || !normalsOk || onBoundary) {
      ++map.rejectedCount;
      continue;
    }
    int& o = owner[c.scanVertex];
    if (o < 0) {
      o = static_cast<int>(k);
    } else {
      ++map.rejectedCount;
      const auto& prev = raw[o];
      if (c.distance < prev.distance ||
          (c.distance == prev.distance && c.modelVertex < prev.modelVertex))
        o = static_cast<int>(k);
    }
  }
  for (int o : owner)
    if (o >= 0) map.pairs.push_back(raw[o]);
  std::sort(map.pairs.begin(), map.pairs.end(),
            [](const Correspondence& a, const Correspondence& b) { return a.modelVertex < b.modelVertex; });
  return map;
}

ScanIndex index_scan(const PartialScan& scan) {
  return {KdTree(scan.mesh.V), vertex_normals(scan.mesh), boundary_vertices(scan.mesh)};
}

ConstraintSet match_constraints(const CorrespondenceMap& map, const PartialScan& scan,
                                Eigen::Index numVertices) {
  std::vector<int> vertices;
  MatrixX3d targets(static_cast<Eigen::Index>(map.pairs.size()), 3);
  for (size_t k = 0; k < map.pairs.size(); ++k) {
    vertices.push_back(map.pairs[k].modelVertex);
    targets.row(static_cast<Eigen::Index>(k)) = scan.mesh.V.row(map.pairs[k].scanVertex);
  }
  return point_constraints(vertices, targets, numVertices);
}

}  // namespace

CorrespondenceMap match_to_scan(const TriMesh& deformed, const std::vector<int>& samples,
                                const PartialScan& scan, const IcpOptions& options) {
  return match_with(deformed, samples, index_scan(scan), options);
}

IcpResult nonrigid_icp(const DeformationModel& model, const PartialScan& scan,
                       const ConstraintSet& initial, const SolveParams& params,
                       const IcpOptions& options) {
  const Eigen::Index n = model.numVertices();
  std::vector<int> samples;
  if (n <= options.fullMatchLimit) {
    samples.resize(n);
    std::iota(samples.begin(), samples.end(), 0);
  } else {
    samples = farthest_point_sample(model.examples.poses.front(), options.sampleCount);
  }
  const ScanIndex index = index_scan(scan);

  SolveOutput first = solve(model, initial, params);
  std::shared_ptr<const SolverSystem> system = first.system->system;
  SolveState state = std::move(first.schedule.state);
  MatrixX3d vertices = std::move(first.vertices);

  IcpResult best;
  best.state = state;
  best.vertices = vertices;
  double previous = std::numeric_limits<double>::infinity();
  for (int round = 0; round < options.maxRounds; ++round) {
    const CorrespondenceMap map = match_with({vertices, model.examples.faces}, samples, index, options);
    if (map.pairs.empty()) {
      log_warning("nonrigid ICP: no accepted correspondences, stopping");
      break;
    }
    const double mean = map.meanDistance();
    if (mean > previous) break;
    best.state = state;
    best.vertices = vertices;
    best.correspondences = map;
    best.meanDistances.push_back(mean);
    best.rounds = round + 1;
    if (previous - mean < options.minImprovement * model.sqrtArea()) break;
    previous = mean;
    if (round + 1 == options.maxRounds) break;

    const ConstrainedSystem cs =
        constrain(system, append_constraints(initial, match_constraints(map, scan, n)), params);
    run_minimal(cs, state, params, params.maxIters);
    vertices = reconstruct(*system->dictionary, state.T);
  }
  return best;
}

std::vector<double> default_thresholds() {
  std::vector<double> t(101);
  for (int i = 0; i <= 100; ++i) t[i] = 0.002 * i;
  return t;
}

double AccuracyCurve::area() const {
  if (thresholds.size() < 2) return fractions.empty() ? 0.0 : fractions.front();
  double sum = 0.0;
  for (size_t i = 1; i < thresholds.size(); ++i)
    sum += 0.5 * (fractions[i] + fractions[i - 1]) * (thresholds[i] - thresholds[i - 1]);
  return sum / (thresholds.back() - thresholds.front());
}

AccuracyCurve accuracy_curve(const Eigen::VectorXd& relativeDistances) {
  AccuracyCurve curve;
  curve.thresholds = default_thresholds();
  curve.maxDistortion = relativeDistances.size() ? relativeDistances.maxCoeff() : 0.0;
  for (double t : curve.thresholds) {
    const auto count = (relativeDistances.array() <= t + 1e-12).count();
    curve.fractions.push_back(relativeDistances.size()
                                  ? static_cast<double>(count) / relativeDistances.size()
                                  : 1.0);
  }
  return curve;
}

AccuracyCurve evaluate_deformation(const MatrixX3d& result, const TriMesh& groundTruth) {
  if (result.rows() != groundTruth.numVertices())
    throw Error("result and ground truth differ in vertex count");
  const double scale = std::sqrt(surface_area(groundTruth));
  return accuracy_curve((result - groundTruth.V).rowwise().norm() / scale);
}

AccuracyCurve evaluate_correspondence(const CorrespondenceMap& map, const MatrixX3d& scanVertices,
                                      const MatrixX3d& trueModelPositions, double sqrtArea) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(map.pairs.size()));
  for (size_t k = 0; k < map.pairs.size(); ++k) {
    const auto& p = map.pairs[k];
    d(static_cast<Eigen::Index>(k)) =
        (scanVertices.row(p.scanVertex) - trueModelPositions.row(p.modelVertex)).norm() / sqrtArea;
  }
  return accuracy_curve(d);
}

void write_curve_csv(const AccuracyCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "threshold,fraction\n";
  for (size_t i = 0; i < curve.thresholds.size(); ++i)
    out << curve.thresholds[i] << ',' << curve.fractions[i] << '\n';
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace blendforge
