// Copyright 2026 The MPPC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include "mppc/live_service.hpp"

namespace mppc {
namespace {

Scenario course_scenario() { return resolve_scenario("static_course"); }

// Minimal blocking TCP client with a receive timeout.
class TestClient {
 public:
  explicit TestClient(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    timeval tv{2, 0};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    connected_ = ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0;
  }
  ~TestClient() { ::close(fd_); }

  bool connected() const { return connected_; }
  void send(const std::string& s) { ASSERT_EQ(::send(fd_, s.data(), s.size(), MSG_NOSIGNAL), static_cast<ssize_t>(s.size())); }

  // Next '\n'-terminated line, or empty on timeout/close.
  std::string line() {
    std::size_t nl;
    while ((nl = buf_.find('\n')) == std::string::npos) {
      if (!fill()) return {};
    }
    std::string out = buf_.substr(0, nl);
    buf_.erase(0, nl + 1);
    return out;
  }

  // Everything until the peer closes.
  std::string drain() {
    while (fill()) {
    }
    return std::exchange(buf_, {});
  }

  std::string until(const std::string& marker) {
    while (buf_.find(marker) == std::string::npos) {
      if (!fill()) return {};
    }
    const std::size_t end = buf_.find(marker) + marker.size();
    std::string out = buf_.substr(0, end);
    buf_.erase(0, end);
    return out;
  }

  // Next complete WebSocket frame payload, or nullopt.
  std::optional<ws::Decoded> ws_frame() {
    for (;;) {
      auto d = ws::decode_frame(buf_);
      if (d.consumed) {
        buf_.erase(0, d.consumed);
        return d;
      }
      if (!fill()) return std::nullopt;
    }
  }

 private:
  bool fill() {
    char tmp[8192];
    const ssize_t n = ::recv(fd_, tmp, sizeof(tmp), 0);
    if (n <= 0) return false;
    buf_.append(tmp, static_cast<std::size_t>(n));
    return true;
  }

  int fd_ = -1;
  bool connected_ = false;
  std::string buf_;
};

// Skips frames until a message of another type arrives.
template <class Next>
Json next_non_frame(Next&& next) {
  for (int i = 0; i < 500; ++i) {
    const auto text = next();
    if (text.empty()) return {};
    const auto j = Json::parse(text);
    if (j["type"] != "frame") return j;
  }
  return {};
}

TEST(WrapDisplay, FoldsOntoTrack) {
  EXPECT_NEAR(wrap_display(7.3, 7.2), 0.1, 1e-12);
  EXPECT_NEAR(wrap_display(-0.1, 7.2), 7.1, 1e-12);
  EXPECT_DOUBLE_EQ(wrap_display(7.2, 7.2), 0.0);
  EXPECT_DOUBLE_EQ(wrap_display(3.0, 7.2), 3.0);
  EXPECT_DOUBLE_EQ(wrap_display(3.0, 0.0), 3.0);
}

TEST(ParseCommand, KnownTypes) {
  EXPECT_TRUE(std::holds_alternative<EnvironmentUpdate>(
      parse_command("move_obstacle", {{"id", "box1"}, {"A", 1.0}, {"B", 1.3}, {"H", 0.2}})));
  EXPECT_TRUE(std::holds_alternative<EnvironmentUpdate>(parse_command("remove_obstacle", {{"id", "box1"}})));
  const auto d = std::get<Disturb>(parse_command("disturb", {{"dvx", -0.3}}));
  EXPECT_EQ(d.dv, Vec2(-0.3, 0.0));
  EXPECT_TRUE(std::holds_alternative<Pause>(parse_command("pause", Json::object())));
  EXPECT_TRUE(std::holds_alternative<Resume>(parse_command("resume", Json::object())));
  EXPECT_FALSE(std::get<Reset>(parse_command("reset", Json::object())).scenario.has_value());
  EXPECT_EQ(*std::get<Reset>(parse_command("reset", {{"scenario", "dynamic_course"}})).scenario, "dynamic_course");
  EXPECT_DOUBLE_EQ(std::get<SetSpeed>(parse_command("set_speed", {{"factor", 4.0}})).factor, 4.0);
}

TEST(ParseCommand, Rejections) {
  auto code_of = [](const std::string& type, const Json& payload) {
    try {
      parse_command(type, payload);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code_of("teleport", Json::object()), ErrorCode::kParseError);
  EXPECT_EQ(code_of("set_speed", {{"factor", 0.0}}), ErrorCode::kParseError);
  EXPECT_EQ(code_of("set_speed", {{"factor", 101.0}}), ErrorCode::kParseError);
  EXPECT_EQ(code_of("disturb", {{"dvy", 1.0}}), ErrorCode::kParseError);
  EXPECT_EQ(code_of("move_obstacle", {{"id", "x"}, {"A", 2.0}, {"B", 1.0}, {"H", 0.2}}), ErrorCode::kParseError);
}

TEST(LiveSession, MoveObstacleAcksWithNextVersion) {
  LiveSession s(course_scenario());
  const auto before = s.frame().terrain_version;
  const auto r = s.handle_command(parse_command("move_obstacle", {{"id", "box1"}, {"A", 1.0}, {"B", 1.3}, {"H", 0.2}}));
  EXPECT_TRUE(r.accepted) << r.reason;
  EXPECT_EQ(r.version, before + 1);
  const auto f = s.frame();
  EXPECT_EQ(f.terrain_version, r.version);
  EXPECT_DOUBLE_EQ(f.terrain.obstacles[0].A, 1.0);
}

TEST(LiveSession, OverlappingMoveIsRejectedWithoutVersionChange) {
  LiveSession s(course_scenario());
  const auto before = s.frame();
  const auto r = s.handle_command(parse_command("move_obstacle", {{"id", "box1"}, {"A", 3.0}, {"B", 3.4}, {"H", 0.2}}));
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.code, "OverlappingObstacles");
  EXPECT_EQ(r.version, before.terrain_version);
  EXPECT_EQ(s.frame().terrain, before.terrain);
}

TEST(LiveSession, DisturbWhileGroundedIsWrongPhase) {
  LiveSession s(course_scenario());
  const auto r = s.handle_command(Disturb{Vec2(-0.3, 0.0)});
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.code, "WrongPhase");
}

TEST(LiveSession, FramesProjectState) {
  LiveSession s(course_scenario());
  const auto grounded = s.frame();
  EXPECT_TRUE(grounded.grounded);
  EXPECT_EQ(grounded.foot, Vec2(0.0, 0.0));
  const auto leg = course_scenario().leg;
  const Vec2 flight_offset = forward_kinematics(leg, flight_config(leg).joints);
  bool saw_flight = false;
  for (int i = 0; i < 4000 && !saw_flight; ++i) {
    s.step_once();
    const auto f = s.frame();
    // Planning runs asynchronously; give it wall-clock time.
    if (f.phase == Phase::kReposition) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    if (f.phase == Phase::kFlight && !f.grounded) {
      saw_flight = true;
      EXPECT_NEAR((f.foot - (f.hip + flight_offset)).norm(), 0.0, 1e-12);
      EXPECT_FALSE(f.plan.empty());
      EXPECT_EQ(f.jumps, 1);
    } else if (f.grounded) {
      EXPECT_GE(f.foot.y(), -1e-12);
    }
  }
  EXPECT_TRUE(saw_flight);
}

TEST(LiveSession, ResetKeepsVersionsMonotonic) {
  LiveSession s(course_scenario());
  const auto moved = s.handle_command(parse_command("remove_obstacle", {{"id", "box2"}}));
  ASSERT_TRUE(moved.accepted);
  for (int i = 0; i < 50; ++i) s.step_once();
  const auto reset = s.handle_command(Reset{});
  ASSERT_TRUE(reset.accepted);
  EXPECT_GT(reset.version, moved.version);
  const auto f = s.frame();
  EXPECT_EQ(f.time, 0.0);
  EXPECT_EQ(f.terrain.obstacles.size(), 3u);
  const auto other = s.handle_command(Reset{"dynamic_course"});
  ASSERT_TRUE(other.accepted);
  EXPECT_GT(other.version, reset.version);
  EXPECT_EQ(s.hello()["scenario"], "dynamic_course");
  EXPECT_FALSE(s.handle_command(Reset{"missing_course"}).accepted);
}

TEST(LiveSession, PauseResumeAndSpeed) {
  LiveSession s(course_scenario());
  ASSERT_TRUE(s.handle_command(SetSpeed{4.0}).accepted);
  s.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  ASSERT_TRUE(s.handle_command(Pause{}).accepted);
  const double t0 = s.frame().time;
  EXPECT_GT(t0, 0.0);
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_EQ(s.frame().time, t0);
  EXPECT_TRUE(s.frame().paused);
  ASSERT_TRUE(s.handle_command(Resume{}).accepted);
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  EXPECT_GT(s.frame().time, t0);
  EXPECT_DOUBLE_EQ(s.frame().speed, 4.0);
  s.stop();
}

TEST(LiveSession, ClosedSessionRejects) {
  LiveSession s(course_scenario());
  s.close();
  EXPECT_TRUE(s.closed());
  const auto r = s.handle_command(Pause{});
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.code, "SessionClosed");
}

TEST(HandleMessage, AckRejectAndIdEcho) {
  LiveSession s(course_scenario());
  const auto ack = handle_message(s, R"({"type": "pause", "id": 7, "payload": {}})");
  EXPECT_EQ(ack["type"], "ack");
  EXPECT_EQ(ack["id"], 7);
  EXPECT_EQ(ack["payload"]["version"], 0);
  const auto no_payload = handle_message(s, R"({"type": "resume", "id": "r"})");
  EXPECT_EQ(no_payload["type"], "ack");
  EXPECT_EQ(no_payload["id"], "r");
  const auto bad = handle_message(s, "{oops");
  EXPECT_EQ(bad["type"], "reject");
  EXPECT_EQ(bad["payload"]["code"], "ParseError");
  EXPECT_TRUE(bad["id"].is_null());
  const auto extra = handle_message(s, R"({"type": "pause", "id": 3, "extra": 1})");
  EXPECT_EQ(extra["type"], "reject");
  EXPECT_EQ(extra["id"], 3);
  const auto overlap =
      handle_message(s, R"({"type": "add_obstacle", "id": 4, "payload": {"id": "x", "A": 1.3, "B": 1.4, "H": 0.1}})");
  EXPECT_EQ(overlap["payload"]["code"], "OverlappingObstacles");
  EXPECT_EQ(overlap["payload"]["version"], 0);
}

TEST(WebSocket, AcceptKeyKnownAnswer) {
  EXPECT_EQ(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, FrameRoundTrip) {
  for (std::size_t n : {0u, 5u, 125u, 126u, 65535u, 70000u}) {
    const std::string payload(n, 'x');
    const auto plain = ws::decode_frame(ws::encode_frame(payload));
    EXPECT_EQ(plain.opcode, 0x1);
    EXPECT_EQ(plain.payload, payload);
    const auto masked_bytes = ws::encode_masked_frame(payload);
    const auto masked = ws::decode_frame(masked_bytes);
    EXPECT_EQ(masked.payload, payload);
    EXPECT_EQ(masked.consumed, masked_bytes.size());
    EXPECT_EQ(ws::decode_frame(masked_bytes.substr(0, masked_bytes.size() - 1)).consumed, 0u);
  }
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServerOptions opt;
    opt.port = 0;
    opt.web_root = "/nonexistent";
    server = std::make_unique<LiveServer>(session, opt);
    port = server->start();
    session.start();
  }
  void TearDown() override {
    server->stop();
    session.stop();
  }

  LiveSession session{course_scenario()};
  std::unique_ptr<LiveServer> server;
  int port = 0;
};

TEST_F(ServerTest, LineJsonClient) {
  TestClient c(port);
  ASSERT_TRUE(c.connected());
  c.send("{\"type\": \"set_speed\", \"id\": 1, \"payload\": {\"factor\": 2}}\n");
  const auto hello = Json::parse(c.line());
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["payload"]["scenario"], "static_course");
  EXPECT_EQ(Json::parse(c.line())["type"], "frame");
  const auto ack = next_non_frame([&] { return c.line(); });
  EXPECT_EQ(ack["type"], "ack");
  EXPECT_EQ(ack["id"], 1);

  c.send(R"({"type": "remove_obstacle", "id": 2, "payload": {"id": "box3"}})" "\n");
  const auto removed = next_non_frame([&] { return c.line(); });
  ASSERT_EQ(removed["type"], "ack");
  const auto version = removed["payload"]["version"].get<std::uint64_t>();
  // Every later frame carries at least the acknowledged version.
  int frames = 0;
  const auto t0 = std::chrono::steady_clock::now();
  while (std::chrono::steady_clock::now() - t0 < std::chrono::milliseconds(500)) {
    const auto j = Json::parse(c.line());
    ASSERT_EQ(j["type"], "frame");
    EXPECT_GE(j["payload"]["terrain"]["version"].get<std::uint64_t>(), version);
    ++frames;
  }
  EXPECT_GE(frames, 15);
  EXPECT_LE(frames, 45);
}

TEST_F(ServerTest, WebSocketClient) {
  TestClient c(port);
  ASSERT_TRUE(c.connected());
  c.send(
      "GET /ws HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  const auto head = c.until("\r\n\r\n");
  EXPECT_EQ(head.rfind("HTTP/1.1 101", 0), 0u) << head;
  EXPECT_NE(head.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo="), std::string::npos);
  const auto hello = c.ws_frame();
  ASSERT_TRUE(hello.has_value());
  EXPECT_EQ(Json::parse(hello->payload)["type"], "hello");
  c.send(ws::encode_masked_frame(R"({"type": "pause", "id": "p"})"));
  const auto ack = next_non_frame([&] {
    const auto f = c.ws_frame();
    return f ? f->payload : std::string();
  });
  EXPECT_EQ(ack["type"], "ack");
  EXPECT_EQ(ack["id"], "p");
  c.send(ws::encode_masked_frame("", 0x1).replace(0, 1, 1, static_cast<char>(0x88)));
  for (;;) {
    const auto f = c.ws_frame();
    ASSERT_TRUE(f.has_value());
    if (f->opcode == 0x8) break;
  }
}

TEST_F(ServerTest, HttpEndpoints) {
  {
    TestClient c(port);
    c.send("GET /frame HTTP/1.1\r\nHost: localhost\r\n\r\n");
    const auto resp = c.drain();
    EXPECT_EQ(resp.rfind("HTTP/1.1 200", 0), 0u);
    const auto body = Json::parse(resp.substr(resp.find("\r\n\r\n") + 4));
    EXPECT_EQ(body["terrain"]["obstacles"].size(), 3u);
    EXPECT_EQ(body["circumference"], 7.2);
  }
  {
    TestClient c(port);
    c.send("GET / HTTP/1.1\r\nHost: localhost\r\n\r\n");
    const auto resp = c.drain();
    EXPECT_EQ(resp.rfind("HTTP/1.1 200", 0), 0u);
    EXPECT_NE(resp.find("text/html"), std::string::npos);
  }
  {
    TestClient c(port);
    c.send("GET /missing HTTP/1.1\r\n\r\n");
    EXPECT_EQ(c.drain().rfind("HTTP/1.1 404", 0), 0u);
  }
}

TEST(ServerOptions, BindAddressFromEnvironment) {
  ::unsetenv("MPPC_BIND_ADDRESS");
  EXPECT_EQ(bind_address_from_env("127.0.0.1"), "127.0.0.1");
  ::setenv("MPPC_BIND_ADDRESS", "0.0.0.0", 1);
  EXPECT_EQ(bind_address_from_env("127.0.0.1"), "0.0.0.0");
  ::unsetenv("MPPC_BIND_ADDRESS");
}

}  // namespace
}  // namespace mppc
