#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "blendforge/model.hpp"

namespace blendforge {

struct Config {
  SolveParams solve;
  ModelOptions model;
};

/// Sets one key. Solver keys: beta_lc, beta_sm, beta_sp, max_iters, tol,
/// mode_schedule; model keys: m_coarse, m_rich, r, dict_reduce_ratio.
/// Throws on an unknown key or a malformed value.
void apply_config_value(Config& config, std::string_view key, std::string_view value);

/// True for keys that only affect the solve, not the precomputed model.
bool is_solver_key(std::string_view key);

/// Flat `key = value` lines; `#` starts a comment.
Config load_config(const std::filesystem::path& path, Config base = {});

/// pins.txt: `vertexIndex x y z` per line, `#` comments.
ConstraintSet load_pins(const std::filesystem::path& path, Eigen::Index numVertices);
void save_pins(const std::filesystem::path& path, std::span<const int> vertices,
               const MatrixX3d& targets);

}  // namespace blendforge
