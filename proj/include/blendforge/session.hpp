#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "blendforge/model.hpp"

namespace blendforge {

/// One outgoing message: a JSON text frame or a binary positions frame.
struct Frame {
  bool binary = false;
  std::string data;
};

/// uint32 count n, then 3n float32 x, y, z, all little-endian.
std::string encode_positions(const MatrixX3d& vertices);
Eigen::Matrix<float, Eigen::Dynamic, 3> decode_positions(std::string_view bytes);

/// Interactive posing session. Every message is handled to completion in
/// order; the frames returned depend only on the session state and the
/// message.
///
/// Requests: hello{modelId}, pin{featureId, vertexIndex[, x, y, z]},
/// move{featureId, x, y, z}, unpin{featureId}, set_param{key, val}, solve{}.
/// Edits (pin, move, unpin, set_param) bump the revision by one and are
/// acknowledged with ack{op, revision}; a move is also answered with a coarse
/// result when autoSolve is set. solve{} runs the full schedule. Results are
/// result{revision, energy, alpha, selectedExample, phase} followed by a
/// positions frame. Failures produce error{code, msg} and leave the session
/// unchanged.
class Session {
 public:
  Session(std::shared_ptr<const DeformationModel> model, std::string modelId, SolveParams params,
          std::string id);

  std::vector<Frame> handle(std::string_view text, bool autoSolve = true);
  std::vector<Frame> handle(const nlohmann::json& message, bool autoSolve = true);
  // json converts from strings implicitly; these keep text on the parsing path
  std::vector<Frame> handle(const std::string& text, bool autoSolve = true) {
    return handle(std::string_view(text), autoSolve);
  }
  std::vector<Frame> handle(const char* text, bool autoSolve = true) {
    return handle(std::string_view(text), autoSolve);
  }

  const std::string& id() const { return id_; }
  std::uint64_t revision() const { return revision_; }
  const MatrixX3d& surface() const { return surface_; }
  const SolveParams& params() const { return params_; }

  /// Pins as point constraints, ordered by feature id.
  ConstraintSet constraints() const;

 private:
  struct Pin {
    int vertex;
    Eigen::Vector3d target;
  };

  std::vector<Frame> on_hello(const nlohmann::json& message);
  std::vector<Frame> on_pin(const nlohmann::json& message);
  std::vector<Frame> on_move(const nlohmann::json& message, bool autoSolve);
  std::vector<Frame> on_unpin(const nlohmann::json& message);
  std::vector<Frame> on_set_param(const nlohmann::json& message);
  std::vector<Frame> on_solve(SolveDepth depth);
  Frame ack(std::string_view op) const;

  std::shared_ptr<const DeformationModel> model_;
  std::string modelId_;
  SolveParams params_;
  std::string id_;
  std::uint64_t revision_ = 0;
  std::map<int, Pin> pins_;
  MatrixX3d surface_;
};

Frame error_frame(std::string_view code, std::string_view message);

}  // namespace blendforge
