#include <doctest.h>

#include <thread>

#include "blendforge/service.hpp"
#include "fixtures.hpp"

using namespace blendforge;
using namespace blendforge::testing;
using nlohmann::json;

namespace {

std::shared_ptr<const DeformationModel> small_model() {
  static const auto model = [] {
    const auto scene = quadruped_scenario(synthetic::make_quadruped(24, 16), 2, 5, 0.3, 0.3);
    ModelOptions mo;
    mo.mRich = 6;
    return build_model(make_example_set(scene.examples), mo);
  }();
  return model;
}

json parse(const Frame& frame) {
  REQUIRE_FALSE(frame.binary);
  return json::parse(frame.data);
}

std::vector<json> script() {
  std::vector<json> out{{{"type", "hello"}, {"modelId", "m"}}};
  const std::vector<int> vertices{0, 40, 90, 150, 200};
  for (int f = 0; f < 5; ++f)
    out.push_back({{"type", "pin"}, {"featureId", f}, {"vertexIndex", vertices[f]}});
  for (int step = 0; step < 10; ++step)
    out.push_back({{"type", "move"}, {"featureId", 2}, {"x", 0.01 * step}, {"y", 0.2}, {"z", 0.0}});
  out.push_back({{"type", "solve"}});
  return out;
}

// Reads until a result frame and the positions frame after it.
std::pair<json, std::string> await_result(ws::Connection& c) {
  while (auto message = c.receive(std::chrono::seconds(30))) {
    if (message->binary) continue;
    const json j = json::parse(message->data);
    if (j["type"] == "result") {
      auto positions = c.receive(std::chrono::seconds(30));
      REQUIRE(positions);
      REQUIRE(positions->binary);
      return {j, positions->data};
    }
  }
  FAIL("connection ended before a result");
  return {};
}

}  // namespace

TEST_CASE("positions codec") {
  MatrixX3d v(2, 3);
  v << 1, 2, 3, -0.5, 0.25, 1e6;
  const std::string bytes = encode_positions(v);
  REQUIRE(bytes.size() == 4 + 2 * 3 * 4);
  CHECK(static_cast<unsigned char>(bytes[0]) == 2);
  CHECK(bytes[1] == 0);
  const auto back = decode_positions(bytes);
  CHECK(back.cast<double>() == v);
  CHECK_THROWS_AS(decode_positions(bytes.substr(0, 10)), Error);
}

TEST_CASE("websocket handshake key and frames") {
  CHECK(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
  for (std::size_t size : {0, 5, 125, 126, 65535, 65536, 200000}) {
    const std::string payload(size, 'x');
    ws::FrameParser parser;
    const std::string encoded = ws::encode_frame(ws::Opcode::Binary, payload, 0x12345678u);
    // fed in two pieces to exercise buffering
    parser.feed(std::string_view(encoded).substr(0, encoded.size() / 2));
    if (encoded.size() / 2 < encoded.size() - 1) CHECK_FALSE(parser.next().has_value());
    parser.feed(std::string_view(encoded).substr(encoded.size() / 2));
    const auto frame = parser.next();
    REQUIRE(frame);
    CHECK(frame->masked);
    CHECK(frame->opcode == ws::Opcode::Binary);
    CHECK(frame->payload == payload);
  }
  ws::FrameParser small(10);
  small.feed(ws::encode_frame(ws::Opcode::Text, std::string(11, 'a')));
  CHECK_THROWS_AS(small.next(), Error);
}

TEST_CASE("session protocol errors leave the state alone") {
  Session s(small_model(), "m", SolveParams{}, "t");
  auto expect_error = [&](const std::string& text, const std::string& code) {
    const auto before = s.revision();
    const auto frames = s.handle(text);
    REQUIRE(frames.size() == 1);
    const json j = parse(frames[0]);
    CHECK(j["type"] == "error");
    CHECK(j["code"] == code);
    CHECK(s.revision() == before);
  };
  expect_error("{not json", "bad_json");
  expect_error("[1,2]", "bad_json");
  expect_error(R"({"type":"dance"})", "unknown_type");
  expect_error(R"({"type":"hello","modelId":"other"})", "unknown_model");
  expect_error(R"({"type":"pin","featureId":1})", "bad_field");
  expect_error(R"({"type":"pin","featureId":1,"vertexIndex":-3})", "bad_field");
  expect_error(R"({"type":"move","featureId":9,"x":0,"y":0,"z":0})", "unknown_feature");
  expect_error(R"({"type":"unpin","featureId":9})", "unknown_feature");
  expect_error(R"({"type":"set_param","key":"m_rich","val":3})", "bad_param");
  expect_error(R"({"type":"set_param","key":"beta_lc","val":-1})", "bad_param");
  expect_error(R"({"type":"solve"})", "no_constraints");

  const auto hello = s.handle(R"({"type":"hello","modelId":"m"})");
  REQUIRE(hello.size() == 2);
  const json loaded = parse(hello[0]);
  CHECK(loaded["type"] == "loaded");
  CHECK(loaded["n"] == small_model()->numVertices());
  CHECK(hello[1].binary);

  const auto ok = s.handle(R"({"type":"set_param","key":"beta_sm","val":0.5})");
  CHECK(parse(ok[0])["op"] == "set_param");
  CHECK(s.params().betaSm == 0.5);
  CHECK(s.revision() == 1);
}

TEST_CASE("replaying a script gives identical frames") {
  Session a(small_model(), "m", SolveParams{}, "a");
  Session b(small_model(), "m", SolveParams{}, "a");
  for (const json& message : script()) {
    const auto fa = a.handle(message), fb = b.handle(message);
    REQUIRE(fa.size() == fb.size());
    for (size_t i = 0; i < fa.size(); ++i) {
      CHECK(fa[i].binary == fb[i].binary);
      CHECK(fa[i].data == fb[i].data);
    }
  }
  CHECK(a.revision() == 15);
}

TEST_CASE("moves answer with a coarse solve, solve{} with the full schedule") {
  Session s(small_model(), "m", SolveParams{}, "x");
  s.handle(json{{"type", "pin"}, {"featureId", 0}, {"vertexIndex", 3}});
  const auto moved = s.handle(json{{"type", "move"}, {"featureId", 0}, {"x", 0}, {"y", 0}, {"z", 0}});
  REQUIRE(moved.size() == 3);
  CHECK(parse(moved[0])["type"] == "ack");
  CHECK(parse(moved[1])["phase"] == "coarse");
  const auto quiet = s.handle(json{{"type", "move"}, {"featureId", 0}, {"x", 0}, {"y", 0}, {"z", 1}},
                              false);
  CHECK(quiet.size() == 1);
  const auto full = s.handle(R"({"type":"solve"})");
  CHECK(parse(full[0])["phase"] == "full");
  CHECK(parse(full[0])["revision"] == 3);
}

TEST_CASE("server end to end") {
  ServeOptions options;
  options.port = 0;
  options.modelId = "m";
  options.loopbackOnly = true;
  SessionServer server(small_model(), options);
  std::thread runner([&] { server.run(); });

  auto client = ws::connect("127.0.0.1", server.port());
  auto other = ws::connect("127.0.0.1", server.port());
  client->send_text(R"({"type":"hello","modelId":"m"})");
  other->send_text(R"({"type":"hello","modelId":"m"})");
  const json loadedA = json::parse(client->receive(std::chrono::seconds(10))->data);
  const json loadedB = json::parse(other->receive(std::chrono::seconds(10))->data);
  CHECK(loadedA["sessionId"] != loadedB["sessionId"]);
  CHECK(client->receive(std::chrono::seconds(10))->binary);

  const std::vector<int> vertices{0, 40, 90, 150, 200};
  for (int f = 0; f < 5; ++f)
    client->send_text(json{{"type", "pin"}, {"featureId", f}, {"vertexIndex", vertices[f]}}.dump());
  for (int step = 0; step < 100; ++step)
    client->send_text(
        json{{"type", "move"}, {"featureId", 2}, {"x", 0.002 * step}, {"y", 0.3}, {"z", 0.1}}.dump());
  client->send_text(R"({"type":"solve"})");

  // acks arrive in order with consecutive revisions; interleaved coarse
  // results come from debounced moves that found a quiet line
  std::uint64_t last = 0;
  json result;
  std::string positions;
  while (auto message = client->receive(std::chrono::seconds(30))) {
    if (message->binary) {
      positions = message->data;
      if (result.value("phase", "") == "full") break;
      continue;
    }
    const json j = json::parse(message->data);
    REQUIRE(j["type"] != "error");
    if (j["type"] == "ack") {
      CHECK(j["revision"].get<std::uint64_t>() == last + 1);
      last = j["revision"];
    } else if (j["type"] == "result") {
      result = j;
    }
  }
  CHECK(last == 105);
  REQUIRE(result["phase"] == "full");
  CHECK(result["revision"] == 105);

  // the same constraints solved directly give the same float bytes
  Session replay(small_model(), "m", SolveParams{}, "r");
  for (int f = 0; f < 5; ++f)
    replay.handle(json{{"type", "pin"}, {"featureId", f}, {"vertexIndex", vertices[f]}});
  replay.handle(json{{"type", "move"}, {"featureId", 2}, {"x", 0.002 * 99}, {"y", 0.3}, {"z", 0.1}},
                false);
  const SolveOutput direct = solve(*small_model(), replay.constraints(), SolveParams{});
  CHECK(encode_positions(direct.vertices) == positions);

  // the second client is unaffected and still answers
  other->send_text(json{{"type", "pin"}, {"featureId", 0}, {"vertexIndex", 5}}.dump());
  other->receive(std::chrono::seconds(10));  // loaded positions
  const json ack = json::parse(other->receive(std::chrono::seconds(10))->data);
  CHECK(ack["type"] == "ack");
  CHECK(ack["revision"] == 1);

  client->close();
  other->close();
  server.stop();
  runner.join();
}
