#include "blendforge/service.hpp"

#include "blendforge/log.hpp"

namespace blendforge {

void run_connection(ws::Connection& connection, Session& session,
                    std::chrono::milliseconds debounce) {
  while (auto message = connection.receive()) {
    if (message->binary) {
      connection.send_text(error_frame("bad_frame", "binary messages are not accepted").data);
      continue;
    }
    const nlohmann::json parsed = nlohmann::json::parse(message->data, nullptr, false);
    std::vector<Frame> frames;
    if (parsed.is_discarded()) {
      frames.push_back(error_frame("bad_json", "message is not valid JSON"));
    } else {
      bool autoSolve = true;
      if (parsed.is_object() && parsed.value("type", "") == "move")
        autoSolve = !connection.readable(debounce);
      frames = session.handle(parsed, autoSolve);
    }
    for (const Frame& frame : frames) {
      if (frame.binary)
        connection.send_binary(frame.data);
      else
        connection.send_text(frame.data);
    }
    if (connection.closed()) break;
  }
}

SessionServer::SessionServer(std::shared_ptr<const DeformationModel> model, ServeOptions options)
    : model_(std::move(model)),
      options_(std::move(options)),
      server_(
          options_.port,
          [this](ws::Connection& connection) {
            const std::uint64_t number = ++sessions_;
            Session session(model_, options_.modelId, options_.params,
                            "s" + std::to_string(number));
            log_info("session " + session.id() + " opened");
            run_connection(connection, session, options_.debounce);
            log_info("session " + session.id() + " closed");
          },
          options_.loopbackOnly) {}

}  // namespace blendforge
