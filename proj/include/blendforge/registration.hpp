#pragma once

#include <filesystem>
#include <vector>

#include "blendforge/model.hpp"

namespace blendforge {

/// A scan vertex known to correspond to a model vertex. modelVertex is -1
/// while unresolved.
struct FeaturePoint {
  int scanVertex = -1;
  int modelVertex = -1;
};

struct PartialScan {
  TriMesh mesh;
  std::vector<FeaturePoint> features;
  std::vector<char> knownRegionMask;  // per scan vertex; empty means unknown
};

/// features.txt: one `scanVertex modelVertex` line per feature, `?` for an
/// unresolved model vertex. A line `candidates m1 m2 ...` lists the model
/// vertices the unresolved features are to be assigned to, one each.
struct FeatureFile {
  std::vector<FeaturePoint> features;
  std::vector<int> candidates;
};

FeatureFile load_features(const std::filesystem::path& path);

struct FeatureOptions {
  int circles = 10;
  double radiusFrac = 0.15;  // outer radius over sqrt(model area)
};

/// One row per feature and circle: area-weighted averages over geodesic balls
/// of radius (c / circles) * radiusFrac * sqrt(area), c = 1..circles, on the
/// model reference pose, with the matching averages over the scan as targets.
ConstraintSet feature_constraints(const DeformationModel& model, const PartialScan& scan,
                                  const FeatureOptions& options = {});

/// Every assignment of the unresolved features to distinct candidates, in
/// lexicographic order of the candidate positions.
std::vector<std::vector<int>> feature_permutations(const FeatureFile& file);

struct CandidateSearch {
  int best = 0;
  std::vector<double> energies;  // minimal-mode energy per candidate
};

/// Runs the coarse schedule for each candidate assignment (model vertex per
/// feature, in feature order) and returns the one with the lowest minimal
/// energy; earlier candidates win ties.
CandidateSearch correspondence_search_features(const DeformationModel& model,
                                               const PartialScan& scan,
                                               const std::vector<std::vector<int>>& candidates,
                                               const SolveParams& params,
                                               const FeatureOptions& options = {});

struct Correspondence {
  int modelVertex;
  int scanVertex;
  double distance;
};

struct CorrespondenceMap {
  std::vector<Correspondence> pairs;
  int rejectedCount = 0;

  double meanDistance() const;
};

struct IcpOptions {
  double medianFactor = 3.0;
  double maxNormalAngleDeg = 60.0;
  int maxRounds = 30;
  double minImprovement = 1e-4;  // relative to sqrt(area)
  int fullMatchLimit = 10000;    // match every vertex up to this size
  int sampleCount = 5000;        // farthest-point sample size above it
  bool rejectBoundary = true;    // drop matches onto the rim of scan holes
};

struct IcpResult {
  SolveState state;
  MatrixX3d vertices;
  CorrespondenceMap correspondences;
  std::vector<double> meanDistances;  // per accepted round
  int rounds = 0;
};

/// Closest-point matching from the deformed model to the scan, with distance,
/// normal and scan-boundary filters, and one scan vertex used at most once.
CorrespondenceMap match_to_scan(const TriMesh& deformed, const std::vector<int>& samples,
                                const PartialScan& scan, const IcpOptions& options = {});

/// Alternates matching and warm-started minimal-mode refinement until the mean
/// match distance stops improving.
IcpResult nonrigid_icp(const DeformationModel& model, const PartialScan& scan,
                       const ConstraintSet& initial, const SolveParams& params,
                       const IcpOptions& options = {});

/// Fractions of points within t * sqrt(area) for t = 0, 0.002, ..., 0.2.
struct AccuracyCurve {
  std::vector<double> thresholds;
  std::vector<double> fractions;
  double maxDistortion = 0.0;  // max distance over sqrt(area)

  /// Trapezoidal area over the threshold range, normalized to [0, 1].
  double area() const;
};

std::vector<double> default_thresholds();

/// Distances are compared as d / sqrt(area) <= t + 1e-12.
AccuracyCurve accuracy_curve(const Eigen::VectorXd& relativeDistances);

AccuracyCurve evaluate_deformation(const MatrixX3d& result, const TriMesh& groundTruth);

/// For each pair, the distance from its scan point to the ground-truth position
/// of its model vertex.
AccuracyCurve evaluate_correspondence(const CorrespondenceMap& map, const MatrixX3d& scanVertices,
                                      const MatrixX3d& trueModelPositions, double sqrtArea);

void write_curve_csv(const AccuracyCurve& curve, const std::filesystem::path& path);

}  // namespace blendforge
