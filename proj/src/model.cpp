#include "blendforge/model.hpp"

#include <cmath>
#include <cstdlib>

#include "blendforge/log.hpp"

namespace blendforge {

std::uint64_t resolve_seed(std::uint64_t fallback) {
  const char* env = std::getenv("BLENDFORGE_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(env, &end, 0);
  if (end == nullptr || *end != '\0') throw Error("BLENDFORGE_SEED is not an integer");
  return value;
}

std::shared_ptr<const DeformationModel> build_model(ExampleSet examples,
                                                    const ModelOptions& options) {
  if (examples.size() < 1) throw Error("no examples");
  if (options.mCoarse < 1) throw Error("m_coarse must be at least 1");
  if (options.useRich && !options.skeleton && options.mRich < 1)
    throw Error("m_rich must be at least 1");
  if (!(options.dictReduceRatio > 0 && options.dictReduceRatio <= 1))
    throw Error("dict_reduce_ratio must lie in (0, 1]");

  auto model = std::make_shared<DeformationModel>();
  model->options = options;
  model->examples = std::move(examples);
  const TriMesh reference = model->examples.reference();
  const std::uint64_t seed = resolve_seed(options.seed);

  model->laplacian = cotangent_laplacian(reference);
  model->area = surface_area(reference);
  const bool lboRich = options.useRich && !options.skeleton;
  const int m = std::max(options.mCoarse, lboRich ? options.mRich : 0);
  if (m + 1 > model->numVertices()) throw Error("more eigenfunctions requested than vertices");
  if (options.basis) {
    const SpectralBasis& given = *options.basis;
    if (given.eigenfunctions.rows() != model->numVertices() || given.size() < m + 1)
      throw Error("precomputed eigenpairs do not fit the examples: need " + std::to_string(m + 1) +
                  " pairs on " + std::to_string(model->numVertices()) + " vertices");
    model->basis.eigenvalues = given.eigenvalues.head(m + 1);
    model->basis.eigenfunctions = given.eigenfunctions.leftCols(m + 1);
  } else {
    EigenOptions eigen = options.eigen;
    eigen.seed = seed;
    model->basis = lbo_eigenpairs(model->laplacian, m, eigen);
  }

  const WeightField coarseField = lbo_weight_field(model->basis, options.mCoarse);
  WeightField richField;
  if (options.skeleton)
    richField = *options.skeleton;
  else
    richField = lbo_weight_field(model->basis, options.useRich ? options.mRich : options.mCoarse);

  int r = options.r;
  if (r <= 0) r = options.skeleton ? options.skeleton->size() : 20;
  model->clusters = build_rotation_clusters(richField, reference, r, seed);
  model->arap = precompute_example_arap(model->examples, model->clusters);

  auto coarseDict =
      std::make_shared<BlendDictionary>(build_dictionary(model->examples, coarseField));
  model->coarse = make_solver_system(coarseDict, model->arap,
                                     smoothness_matrix(model->basis, coarseDict->tags),
                                     options.relativeRidge);
  if (options.useRich) {
    BlendDictionary richDict = build_dictionary(model->examples, richField);
    if (options.dictReduceRatio < 1) {
      // The bar block and the reference example stay whole, and with LBO
      // weights so do the constant-function atoms of every example, so each
      // example pose stays reproducible; k-medoids thins the rest, where the
      // cross-example redundancy lives.
      std::vector<int> keep;
      for (int a = 0; a < richDict.size(); ++a) {
        const AtomTag& tag = richDict.tags[a];
        if (tag.kind == BlockKind::Bar || tag.example == 0 || (lboRich && tag.function == 0))
          keep.push_back(a);
      }
      const int target = std::min(
          richDict.size(),
          std::max(static_cast<int>(keep.size()),
                   static_cast<int>(std::lround(options.dictReduceRatio * richDict.size()))));
      const Eigen::VectorXd weights =
          model->laplacian.areaWeights / model->laplacian.areaWeights.sum();
      richDict = reduce_dictionary(richDict, target, seed, weights, keep);
    }
    Eigen::VectorXd smoothness = options.skeleton
                                     ? Eigen::VectorXd::Zero(richDict.size()).eval()
                                     : smoothness_matrix(model->basis, richDict.tags);
    auto richShared = std::make_shared<BlendDictionary>(std::move(richDict));
    model->changeOperator = dictionary_change_operator(*coarseDict, *richShared);
    model->rich = make_solver_system(richShared, model->arap, std::move(smoothness),
                                     options.relativeRidge);
  }
  log_info("model: n=" + std::to_string(model->numVertices()) +
           " q=" + std::to_string(model->examples.size()) +
           " r=" + std::to_string(model->clusters.size()) +
           " b_coarse=" + std::to_string(model->coarse->size()) +
           " b_rich=" + std::to_string(model->rich ? model->rich->size() : 0));
  return model;
}

SolveOutput solve(const DeformationModel& model, const ConstraintSet& constraints,
                  const SolveParams& params, SolveDepth depth) {
  SolveOutput out;
  auto coarse = std::make_shared<ConstrainedSystem>(constrain(model.coarse, constraints, params));
  if (depth == SolveDepth::Coarse) {
    SolveParams coarseParams = params;
    coarseParams.runMinimal = false;
    coarseParams.runAverage = true;
    out.schedule = solve_schedule(*coarse, nullptr, nullptr, coarseParams);
    out.system = coarse;
  } else if (model.rich) {
    auto rich = std::make_shared<ConstrainedSystem>(constrain(model.rich, constraints, params));
    out.schedule = solve_schedule(*coarse, rich.get(), &model.changeOperator, params);
    out.system = rich;
  } else {
    out.schedule = solve_schedule(*coarse, nullptr, nullptr, params);
    out.system = coarse;
  }
  out.vertices = reconstruct(*out.system->system->dictionary, out.schedule.state.T);
  return out;
}

}  // namespace blendforge
