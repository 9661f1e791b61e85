// blendforge command line: deform, interpolate, register, serve, synth.

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "blendforge/config.hpp"
#include "blendforge/log.hpp"
#include "blendforge/registration.hpp"
#include "blendforge/service.hpp"
#include "blendforge/synthetic.hpp"

namespace fs = std::filesystem;
using namespace blendforge;

namespace {

// Exit status for unusable inputs (missing files, bad arguments).
constexpr int kInputError = 2;

struct InputError : Error {
  using Error::Error;
};

struct ModelArgs {
  std::string examples;
  std::string config;
  std::string weights;
  std::string eigenCache;
  int lbo = 0;
};

void add_model_args(CLI::App* cmd, ModelArgs& args) {
  cmd->add_option("--examples", args.examples, "directory of example meshes (.off/.obj)")->required();
  cmd->add_option("--config", args.config, "key = value configuration file");
  auto* weights = cmd->add_option("--weights", args.weights, "skeleton weight file");
  auto* lbo = cmd->add_option("--lbo", args.lbo, "use m LBO eigenfunctions for the rich dictionary");
  weights->excludes(lbo);
  cmd->add_option("--eigen-cache", args.eigenCache,
                  "eigenpair cache file, read when it fits and written otherwise");
}

Config load_settings(const ModelArgs& args) {
  Config config;
  if (!args.config.empty()) {
    if (!fs::exists(args.config)) throw InputError("config file '" + args.config + "' not found");
    config = load_config(args.config);
  }
  if (args.lbo > 0) config.model.mRich = args.lbo;
  return config;
}

std::shared_ptr<const DeformationModel> load_model(const ModelArgs& args, Config& config) {
  if (!fs::is_directory(args.examples))
    throw InputError("examples directory '" + args.examples + "' not found");
  ExampleSet examples = load_example_set(args.examples);
  if (!args.weights.empty()) {
    if (!fs::exists(args.weights)) throw InputError("weights file '" + args.weights + "' not found");
    config.model.skeleton = import_skeleton_weights(args.weights, examples.reference());
  }
  const int needed = std::max(config.model.mCoarse, config.model.skeleton ? 0 : config.model.mRich);
  bool cached = false;
  if (!args.eigenCache.empty() && fs::exists(args.eigenCache)) {
    SpectralBasis basis = load_spectral_basis(args.eigenCache);
    if (basis.eigenfunctions.rows() == examples.numVertices() && basis.size() >= needed + 1) {
      config.model.basis = std::move(basis);
      cached = true;
    } else {
      log_warning("eigen cache '" + args.eigenCache + "' does not fit, recomputing");
    }
  }
  auto model = build_model(std::move(examples), config.model);
  if (!args.eigenCache.empty() && !cached) save_spectral_basis(model->basis, args.eigenCache);
  return model;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw InputError(std::string(what) + " '" + path + "' not found");
}

void write_energy_log(const ScheduleResult& result, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "phase,iteration,step,energy\n";
  static const char* steps[] = {"local", "scale", "global"};
  for (const auto& phase : result.log)
    for (size_t k = 0; k < phase.energies.size(); ++k)
      out << phase.name << ',' << k / 3 << ',' << steps[k % 3] << ',' << phase.energies[k] << '\n';
}

TriMesh with_vertices(const DeformationModel& model, MatrixX3d V) {
  return {std::move(V), model.examples.faces};
}

int cmd_deform(const ModelArgs& margs, const std::string& pins, const std::string& out,
               std::string log) {
  Config config = load_settings(margs);
  require_file(pins, "constraints file");
  auto model = load_model(margs, config);
  const ConstraintSet cs = load_pins(pins, model->numVertices());
  const SolveOutput result = solve(*model, cs, config.solve);
  save_mesh(with_vertices(*model, result.vertices), out);
  if (log.empty()) log = fs::path(out).replace_extension(".energy.csv").string();
  write_energy_log(result.schedule, log);
  std::cout << "energy " << result.schedule.state.energy << " alpha "
            << result.schedule.state.alpha(result.schedule.state.selectedExample)
            << " example " << result.schedule.state.selectedExample << '\n';
  return 0;
}

int cmd_interpolate(const ModelArgs& margs, const std::string& from, const std::string& to,
                    int frames, const std::string& prefix) {
  if (frames < 2) throw InputError("--frames must be at least 2");
  Config config = load_settings(margs);
  require_file(from, "constraints file");
  require_file(to, "constraints file");
  auto model = load_model(margs, config);
  const SolveOutput a = solve(*model, load_pins(from, model->numVertices()), config.solve);
  const SolveOutput b = solve(*model, load_pins(to, model->numVertices()), config.solve);
  const auto& dict = *a.system->system->dictionary;
  for (int k = 0; k < frames; ++k) {
    const double t = static_cast<double>(k) / (frames - 1);
    const SolveState s = interpolate_poses(*a.system, a.schedule.state, *b.system, b.schedule.state, t);
    char name[32];
    std::snprintf(name, sizeof name, "_%03d.off", k);
    save_mesh(with_vertices(*model, reconstruct(dict, s.T)), prefix + name);
  }
  return 0;
}

int cmd_register(const ModelArgs& margs, const std::string& scanPath, const std::string& featuresPath,
                 const std::string& out, const std::string& report, const std::string& truth) {
  Config config = load_settings(margs);
  require_file(scanPath, "scan");
  require_file(featuresPath, "features file");
  if (!truth.empty()) require_file(truth, "ground truth");
  auto model = load_model(margs, config);
  PartialScan scan;
  scan.mesh = load_mesh(scanPath);
  const FeatureFile file = load_features(featuresPath);
  scan.features = file.features;
  const auto candidates = feature_permutations(file);
  size_t pick = 0;
  if (candidates.size() > 1) {
    pick = correspondence_search_features(*model, scan, candidates, config.solve).best;
    std::cout << "features: picked assignment " << pick << " of " << candidates.size() << '\n';
  }
  const auto& chosen = candidates[pick];
  for (size_t f = 0; f < chosen.size(); ++f) scan.features[f].modelVertex = chosen[f];
  const IcpResult icp = nonrigid_icp(*model, scan, feature_constraints(*model, scan), config.solve);
  save_mesh(with_vertices(*model, icp.vertices), out);
  std::cout << "icp rounds " << icp.rounds << " mean distance "
            << (icp.meanDistances.empty() ? 0.0 : icp.meanDistances.back()) << '\n';
  if (!report.empty()) {
    AccuracyCurve curve;
    if (!truth.empty()) {
      curve = evaluate_deformation(icp.vertices, load_mesh(truth));
    } else {
      Eigen::VectorXd d(static_cast<Eigen::Index>(icp.correspondences.pairs.size()));
      for (size_t k = 0; k < icp.correspondences.pairs.size(); ++k)
        d(static_cast<Eigen::Index>(k)) = icp.correspondences.pairs[k].distance / model->sqrtArea();
      curve = accuracy_curve(d);
    }
    write_curve_csv(curve, report);
    std::cout << "max relative distortion " << curve.maxDistortion << '\n';
  }
  return 0;
}

SessionServer* activeServer = nullptr;

int cmd_serve(const ModelArgs& margs, int port, const std::string& modelId) {
  Config config = load_settings(margs);
  auto model = load_model(margs, config);
  ServeOptions options;
  options.port = static_cast<std::uint16_t>(port);
  options.modelId = modelId;
  options.params = config.solve;
  SessionServer server(model, options);
  activeServer = &server;
  std::signal(SIGINT, [](int) {
    if (activeServer) activeServer->stop();
  });
  std::cout << "listening on port " << server.port() << " (model '" << modelId << "')" << std::endl;
  server.run();
  return 0;
}

int cmd_synth(const std::string& outDir, const std::string& kind, int poses, int resolution,
              std::uint64_t seed) {
  if (poses < 1) throw InputError("--poses must be at least 1");
  fs::create_directories(fs::path(outDir) / "examples");
  std::mt19937_64 rng(resolve_seed(seed));
  std::vector<MatrixX3d> shapes;
  TriMesh rest;
  std::vector<int> features;
  if (kind == "quadruped") {
    const auto animal = synthetic::make_quadruped(resolution, 2 * resolution);
    rest = animal.rest;
    features = animal.features;
    shapes.push_back(animal.rest.V);
    for (int k = 0; k < poses; ++k)
      shapes.push_back(synthetic::pose_quadruped(
          animal, synthetic::random_quadruped_pose(animal, rng, 0.6, 0.1)));
  } else if (kind == "bar") {
    const auto bar = synthetic::articulated_bar(3, 2 * resolution, resolution / 2 + 3);
    rest = bar.rest;
    features = {0, static_cast<int>(bar.rest.numVertices()) - 3};
    shapes.push_back(bar.rest.V);
    for (int k = 0; k < poses; ++k)
      shapes.push_back(synthetic::pose_bar(bar, synthetic::random_bar_rotations(bar, rng, 0.7)));
  } else {
    throw InputError("unknown --kind '" + kind + "'");
  }
  // All but the last shape are examples; the last is a held-out target.
  for (int k = 0; k < poses; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "pose_%02d.off", k);
    save_mesh({shapes[k], rest.F}, fs::path(outDir) / "examples" / name);
  }
  save_mesh({shapes.back(), rest.F}, fs::path(outDir) / "target.off");
  MatrixX3d targets(static_cast<Eigen::Index>(features.size()), 3);
  for (size_t i = 0; i < features.size(); ++i)
    targets.row(static_cast<Eigen::Index>(i)) = shapes.back().row(features[i]);
  save_pins(fs::path(outDir) / "pins.txt", features, targets);
  std::cout << "wrote " << poses << " examples, target.off and pins.txt to " << outDir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Example-based blended-transformation shape deformation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress messages on stderr");

  ModelArgs deformArgs, interpArgs, registerArgs, serveArgs;
  std::string pins, out, log;
  auto* deform = app.add_subcommand("deform", "pose the model to match pinned vertices");
  add_model_args(deform, deformArgs);
  deform->add_option("--constraints", pins, "pins file: vertexIndex x y z per line")->required();
  deform->add_option("--out", out, "output mesh")->required();
  deform->add_option("--log", log, "energy log (default: output path with extension .energy.csv)");

  std::string from, to, prefix;
  int frames = 9;
  auto* interp = app.add_subcommand("interpolate", "blend between two pinned poses");
  add_model_args(interp, interpArgs);
  interp->add_option("--from", from, "pins file of the first pose")->required();
  interp->add_option("--to", to, "pins file of the second pose")->required();
  interp->add_option("--frames", frames, "number of meshes, endpoints included");
  interp->add_option("--out-prefix", prefix, "frames are written to <prefix>_NNN.off")->required();

  std::string scan, features, regOut, report, truth;
  auto* reg = app.add_subcommand("register", "fit the model to a partial scan");
  add_model_args(reg, registerArgs);
  reg->add_option("--scan", scan, "scan mesh")->required();
  reg->add_option("--features", features, "feature correspondences")->required();
  reg->add_option("--out", regOut, "registered mesh")->required();
  reg->add_option("--report", report, "accuracy curve csv");
  reg->add_option("--ground-truth", truth, "full target mesh for the report");

  int port = 8765;
  std::string modelId = "model";
  auto* serve = app.add_subcommand("serve", "interactive posing server (WebSocket)");
  add_model_args(serve, serveArgs);
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--model-id", modelId, "name clients must send in hello");

  std::string synthOut, kind = "quadruped";
  int poses = 5, resolution = 32;
  std::uint64_t seed = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic example set");
  synth->add_option("--out", synthOut, "output directory")->required();
  synth->add_option("--kind", kind, "quadruped or bar");
  synth->add_option("--poses", poses, "examples to write (one more is kept as target)");
  synth->add_option("--resolution", resolution, "mesh resolution");
  synth->add_option("--seed", seed, "pose seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }
  set_log_level(verbose ? LogLevel::Info : LogLevel::Warning);
  try {
    if (*deform) return cmd_deform(deformArgs, pins, out, log);
    if (*interp) return cmd_interpolate(interpArgs, from, to, frames, prefix);
    if (*reg) return cmd_register(registerArgs, scan, features, regOut, report, truth);
    if (*serve) return cmd_serve(serveArgs, port, modelId);
    if (*synth) return cmd_synth(synthOut, kind, poses, resolution, seed);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
