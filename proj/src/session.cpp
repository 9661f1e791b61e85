#include "blendforge/session.hpp"

#include <bit>
#include <cstring>

#include "blendforge/binary_io.hpp"
#include "blendforge/config.hpp"

namespace blendforge {

using nlohmann::json;

namespace {

// Thrown by handlers to produce an error frame.
struct RequestError {
  std::string code;
  std::string message;
};

const json& field(const json& message, const char* name) {
  if (!message.contains(name)) throw RequestError{"bad_field", std::string("missing '") + name + "'"};
  return message.at(name);
}

int int_field(const json& message, const char* name) {
  const json& v = field(message, name);
  if (!v.is_number_integer()) throw RequestError{"bad_field", std::string("'") + name + "' must be an integer"};
  return v.get<int>();
}

double number_field(const json& message, const char* name) {
  const json& v = field(message, name);
  if (!v.is_number()) throw RequestError{"bad_field", std::string("'") + name + "' must be a number"};
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw RequestError{"bad_field", std::string("'") + name + "' must be finite"};
  return d;
}

std::string text(const json& j) { return j.dump(); }

}  // namespace

std::string encode_positions(const MatrixX3d& vertices) {
  const auto n = static_cast<std::uint32_t>(vertices.rows());
  std::string out(4 + 12 * static_cast<size_t>(n), '\0');
  const std::uint32_t count = detail::to_little_endian(n);
  std::memcpy(out.data(), &count, 4);
  char* p = out.data() + 4;
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const auto bits =
          detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(vertices(i, c))));
      std::memcpy(p, &bits, 4);
      p += 4;
    }
  }
  return out;
}

Eigen::Matrix<float, Eigen::Dynamic, 3> decode_positions(std::string_view bytes) {
  if (bytes.size() < 4) throw Error("positions frame shorter than its header");
  std::uint32_t n = 0;
  std::memcpy(&n, bytes.data(), 4);
  n = detail::to_little_endian(n);
  if (bytes.size() != 4 + 12 * static_cast<size_t>(n))
    throw Error("positions frame length does not match its count");
  Eigen::Matrix<float, Eigen::Dynamic, 3> out(n, 3);
  const char* p = bytes.data() + 4;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, p, 4);
      out(i, c) = std::bit_cast<float>(detail::to_little_endian(bits));
      p += 4;
    }
  }
  return out;
}

Frame error_frame(std::string_view code, std::string_view message) {
  return {false, text({{"type", "error"}, {"code", code}, {"msg", message}})};
}

Session::Session(std::shared_ptr<const DeformationModel> model, std::string modelId,
                 SolveParams params, std::string id)
    : model_(std::move(model)),
      modelId_(std::move(modelId)),
      params_(params),
      id_(std::move(id)),
      surface_(model_->examples.poses.front()) {
  params_.validate();
}

ConstraintSet Session::constraints() const {
  std::vector<int> vertices;
  MatrixX3d targets(static_cast<Eigen::Index>(pins_.size()), 3);
  for (const auto& [feature, pin] : pins_) {
    targets.row(static_cast<Eigen::Index>(vertices.size())) = pin.target.transpose();
    vertices.push_back(pin.vertex);
  }
  return point_constraints(vertices, targets, model_->numVertices());
}

Frame Session::ack(std::string_view op) const {
  return {false, text({{"type", "ack"}, {"op", op}, {"revision", revision_}})};
}

std::vector<Frame> Session::handle(std::string_view message, bool autoSolve) {
  json parsed = json::parse(message, nullptr, false);
  if (parsed.is_discarded()) return {error_frame("bad_json", "message is not valid JSON")};
  return handle(parsed, autoSolve);
}

std::vector<Frame> Session::handle(const json& message, bool autoSolve) {
  try {
    if (!message.is_object()) throw RequestError{"bad_json", "message must be an object"};
    const json& type = field(message, "type");
    if (!type.is_string()) throw RequestError{"bad_field", "'type' must be a string"};
    const std::string kind = type.get<std::string>();
    if (kind == "hello") return on_hello(message);
    if (kind == "pin") return on_pin(message);
    if (kind == "move") return on_move(message, autoSolve);
    if (kind == "unpin") return on_unpin(message);
    if (kind == "set_param") return on_set_param(message);
    if (kind == "solve") return on_solve(SolveDepth::Full);
    throw RequestError{"unknown_type", "unknown message type '" + kind + "'"};
  } catch (const RequestError& e) {
    return {error_frame(e.code, e.message)};
  } catch (const Error& e) {
    return {error_frame("solver", e.what())};
  }
}

std::vector<Frame> Session::on_hello(const json& message) {
  const json& id = field(message, "modelId");
  if (!id.is_string() || id.get<std::string>() != modelId_)
    throw RequestError{"unknown_model", "this server holds model '" + modelId_ + "'"};
  const json loaded = {{"type", "loaded"},
                       {"sessionId", id_},
                       {"modelId", modelId_},
                       {"n", model_->numVertices()},
                       {"f", model_->examples.faces.rows()},
                       {"q", model_->examples.size()},
                       {"b", model_->rich ? model_->rich->size() : model_->coarse->size()},
                       {"revision", revision_}};
  return {{false, text(loaded)}, {true, encode_positions(surface_)}};
}

std::vector<Frame> Session::on_pin(const json& message) {
  const int feature = int_field(message, "featureId");
  const int vertex = int_field(message, "vertexIndex");
  if (vertex < 0 || vertex >= model_->numVertices())
    throw RequestError{"bad_field", "vertexIndex " + std::to_string(vertex) + " out of range"};
  Eigen::Vector3d target = surface_.row(vertex).transpose();
  if (message.contains("x") || message.contains("y") || message.contains("z"))
    target = {number_field(message, "x"), number_field(message, "y"), number_field(message, "z")};
  pins_[feature] = {vertex, target};
  ++revision_;
  return {ack("pin")};
}

std::vector<Frame> Session::on_move(const json& message, bool autoSolve) {
  const int feature = int_field(message, "featureId");
  auto it = pins_.find(feature);
  if (it == pins_.end())
    throw RequestError{"unknown_feature", "feature " + std::to_string(feature) + " is not pinned"};
  const Eigen::Vector3d target(number_field(message, "x"), number_field(message, "y"),
                               number_field(message, "z"));
  it->second.target = target;
  ++revision_;
  std::vector<Frame> out{ack("move")};
  if (autoSolve) {
    auto result = on_solve(SolveDepth::Coarse);
    out.insert(out.end(), result.begin(), result.end());
  }
  return out;
}

std::vector<Frame> Session::on_unpin(const json& message) {
  const int feature = int_field(message, "featureId");
  if (pins_.erase(feature) == 0)
    throw RequestError{"unknown_feature", "feature " + std::to_string(feature) + " is not pinned"};
  ++revision_;
  return {ack("unpin")};
}

std::vector<Frame> Session::on_set_param(const json& message) {
  const json& key = field(message, "key");
  const json& val = field(message, "val");
  if (!key.is_string()) throw RequestError{"bad_field", "'key' must be a string"};
  const std::string name = key.get<std::string>();
  if (!is_solver_key(name))
    throw RequestError{"bad_param", "'" + name + "' cannot be changed in a session"};
  Config config{params_, {}};
  try {
    apply_config_value(config, name, val.is_string() ? val.get<std::string>() : val.dump());
    config.solve.validate();
  } catch (const Error& e) {
    throw RequestError{"bad_param", e.what()};
  }
  params_ = config.solve;
  ++revision_;
  return {ack("set_param")};
}

std::vector<Frame> Session::on_solve(SolveDepth depth) {
  if (pins_.empty()) throw RequestError{"no_constraints", "pin at least one vertex first"};
  SolveOutput output = solve(*model_, constraints(), params_, depth);
  surface_ = std::move(output.vertices);
  const SolveState& state = output.schedule.state;
  const json result = {{"type", "result"},
                       {"revision", revision_},
                       {"energy", state.energy},
                       {"alpha", state.alpha(state.selectedExample)},
                       {"selectedExample", state.selectedExample},
                       {"phase", depth == SolveDepth::Coarse ? "coarse" : "full"}};
  return {{false, text(result)}, {true, encode_positions(surface_)}};
}

}  // namespace blendforge
