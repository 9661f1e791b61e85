#include "blendforge/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace blendforge {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw Error("value of " + std::string(key) + " is not a number: '" + std::string(value) + "'");
  return out;
}

int parse_int(std::string_view key, std::string_view value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw Error("value of " + std::string(key) + " is not an integer: '" + std::string(value) +
                "'");
  return out;
}

// "average+minimal", "average", "minimal"; ',' also separates.
void parse_schedule(SolveParams& params, std::string_view value) {
  bool average = false, minimal = false;
  while (!value.empty()) {
    const auto cut = value.find_first_of("+,");
    const std::string_view token = trim(value.substr(0, cut));
    if (token == "average")
      average = true;
    else if (token == "minimal")
      minimal = true;
    else
      throw Error("unknown mode_schedule entry '" + std::string(token) + "'");
    if (cut == std::string_view::npos) break;
    value.remove_prefix(cut + 1);
  }
  if (!average && !minimal) throw Error("mode_schedule is empty");
  params.runAverage = average;
  params.runMinimal = minimal;
}

}  // namespace

bool is_solver_key(std::string_view key) {
  return key == "beta_lc" || key == "beta_sm" || key == "beta_sp" || key == "max_iters" ||
         key == "tol" || key == "mode_schedule";
}

void apply_config_value(Config& config, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "beta_lc")
    config.solve.betaLc = parse_double(key, value);
  else if (key == "beta_sm")
    config.solve.betaSm = parse_double(key, value);
  else if (key == "beta_sp")
    config.solve.betaSp = parse_double(key, value);
  else if (key == "max_iters")
    config.solve.maxIters = parse_int(key, value);
  else if (key == "tol")
    config.solve.tol = parse_double(key, value);
  else if (key == "mode_schedule")
    parse_schedule(config.solve, value);
  else if (key == "m_coarse")
    config.model.mCoarse = parse_int(key, value);
  else if (key == "m_rich")
    config.model.mRich = parse_int(key, value);
  else if (key == "r")
    config.model.r = parse_int(key, value);
  else if (key == "dict_reduce_ratio")
    config.model.dictReduceRatio = parse_double(key, value);
  else
    throw Error("unknown config key '" + std::string(key) + "'");
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError(path.string(), lineNo, "expected key = value");
    try {
      apply_config_value(base, trim(view.substr(0, eq)), view.substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(path.string(), lineNo, e.what());
    }
  }
  base.solve.validate();
  return base;
}

ConstraintSet load_pins(const std::filesystem::path& path, Eigen::Index numVertices) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pins file '" + path.string() + "'");
  std::vector<int> vertices;
  std::vector<Eigen::Vector3d> targets;
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string probe;
    if (!(tokens >> probe)) continue;
    tokens.clear();
    tokens.str(line);
    int v = 0;
    Eigen::Vector3d p;
    std::string extra;
    if (!(tokens >> v >> p.x() >> p.y() >> p.z()) || (tokens >> extra))
      throw ParseError(path.string(), lineNo, "expected 'vertexIndex x y z'");
    if (v < 0 || v >= numVertices)
      throw ParseError(path.string(), lineNo, "vertex " + std::to_string(v) + " out of range");
    vertices.push_back(v);
    targets.push_back(p);
  }
  if (vertices.empty()) throw Error("pins file '" + path.string() + "' has no pins");
  MatrixX3d Y(static_cast<Eigen::Index>(targets.size()), 3);
  for (size_t i = 0; i < targets.size(); ++i) Y.row(static_cast<Eigen::Index>(i)) = targets[i].transpose();
  return point_constraints(vertices, Y, numVertices);
}

void save_pins(const std::filesystem::path& path, std::span<const int> vertices,
               const MatrixX3d& targets) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  for (size_t i = 0; i < vertices.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << vertices[i] << ' ' << targets(r, 0) << ' ' << targets(r, 1) << ' ' << targets(r, 2) << '\n';
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace blendforge
