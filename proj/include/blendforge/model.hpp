#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "blendforge/solver.hpp"

namespace blendforge {

struct ModelOptions {
  int mCoarse = 4;
  int mRich = 15;
  int r = 0;  // 0: number of bones for imported weights, 20 otherwise
  double dictReduceRatio = 0.5;  // applied to the rich dictionary
  bool useRich = true;
  std::uint64_t seed = kDefaultSeed;
  double relativeRidge = SolveParams{}.ridge;
  EigenOptions eigen;
  // Imported skeleton weights for the rich dictionary; LBO weights otherwise.
  std::optional<WeightField> skeleton;
  // Eigenpairs of the reference pose computed earlier (e.g. a cache file);
  // extra pairs are ignored.
  std::optional<SpectralBasis> basis;
};

/// Everything that depends on the examples but not on the constraints. Shared
/// read-only between solves and sessions.
struct DeformationModel {
  ExampleSet examples;
  CotanLaplacian laplacian;  // of the reference pose
  SpectralBasis basis;
  RotationClusters clusters;
  ExampleArap arap;
  std::shared_ptr<const SolverSystem> coarse;
  std::shared_ptr<const SolverSystem> rich;  // null when useRich is off
  Eigen::MatrixXd changeOperator;            // coarse coefficients to rich ones
  double area = 0.0;
  ModelOptions options;

  Eigen::Index numVertices() const { return examples.numVertices(); }
  double sqrtArea() const { return std::sqrt(area); }
};

std::shared_ptr<const DeformationModel> build_model(ExampleSet examples,
                                                    const ModelOptions& options = {});

enum class SolveDepth {
  Coarse,  // sparse start and average mode on the coarse dictionary
  Full,    // the whole schedule
};

struct SolveOutput {
  ScheduleResult schedule;
  MatrixX3d vertices;
  std::shared_ptr<const ConstrainedSystem> system;  // the one the final state belongs to
};

SolveOutput solve(const DeformationModel& model, const ConstraintSet& constraints,
                  const SolveParams& params, SolveDepth depth = SolveDepth::Full);

/// Applies BLENDFORGE_SEED when set.
std::uint64_t resolve_seed(std::uint64_t fallback);

}  // namespace blendforge
