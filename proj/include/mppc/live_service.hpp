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

// Live host for one simulated hopper.
//
// LiveSession owns the executor and advances it in real time on its own
// thread. Commands and frame snapshots take the session mutex, so a frame
// never shows a half-applied edit. LiveServer exposes the session on one TCP
// port: HTTP GET serves the static UI, GET /ws upgrades to a WebSocket, and
// a connection whose first byte is '{' speaks line-delimited JSON. Both
// socket flavours carry the same {type, id, payload} messages; the schema is
// documented in docs/wire_protocol.md.

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "mppc/scenario.hpp"
#include "mppc/sim_executor.hpp"

namespace mppc {

// ---------------------------------------------------------------------------
// Commands.

struct Disturb {
  Vec2 dv = Vec2::Zero();
};
struct Pause {};
struct Resume {};
struct Reset {
  std::optional<std::string> scenario;  // bundled name or path; empty = current
};
struct SetSpeed {
  double factor = 1.0;
};

using Command = std::variant<EnvironmentUpdate, Disturb, Pause, Resume, Reset, SetSpeed>;

struct Reply {
  bool accepted = false;
  std::uint64_t version = 0;  // terrain version the command produces (or current)
  std::string code;           // error code on rejection
  std::string reason;
};

/// Parses a client message's type and payload into a command.
inline Command parse_command(const std::string& type, const Json& payload) {
  const detail::Reader p(payload, "payload");
  if (is_update_type(type)) return parse_update(type, p);
  if (type == "disturb") {
    p.expect_object({"dvx", "dvz"});
    return Disturb{Vec2(p.number("dvx", 0.0), p.number("dvz", 0.0))};
  }
  if (type == "pause") {
    p.expect_object({});
    return Pause{};
  }
  if (type == "resume") {
    p.expect_object({});
    return Resume{};
  }
  if (type == "reset") {
    p.expect_object({"scenario"});
    Reset r;
    if (p.has("scenario")) r.scenario = p.string("scenario");
    return r;
  }
  if (type == "set_speed") {
    p.expect_object({"factor"});
    const double f = p.number("factor");
    if (!(f > 0.0 && f <= 100.0)) detail::Reader(payload, "payload.factor").fail("factor must lie in (0, 100]");
    return SetSpeed{f};
  }
  throw Error(ErrorCode::kParseError, "unknown message type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Frames.

struct PlanArc {
  JumpSpec jump;
  std::vector<Vec2> foot;  // sampled foot path
};

struct Frame {
  double time = 0.0;
  Phase phase = Phase::kInitialization;
  Vec2 hip = Vec2::Zero();
  Vec2 foot = Vec2::Zero();
  Vec2 knee = Vec2::Zero();
  Vec2 hip_vel = Vec2::Zero();
  double display_x = 0.0;  // hip x wrapped onto the circular track
  double circumference = 0.0;
  bool grounded = true;
  std::vector<PlanArc> plan;
  std::uint64_t terrain_version = 0;
  Parkour terrain;
  std::vector<LogEvent> last_events;
  int jumps = 0;
  Outcome outcome = Outcome::kRunning;
  bool paused = false;
  double speed = 1.0;
};

/// x folded onto [0, circumference).
inline double wrap_display(double x, double circumference) {
  if (!(circumference > 0.0)) return x;
  double w = std::fmod(x, circumference);
  if (w < 0.0) w += circumference;
  return w;
}

inline std::vector<Vec2> sample_arc(const JumpSpec& j, const OffsetModel& model, int samples = 24) {
  std::vector<Vec2> pts;
  const auto c = model.at(j.theta);
  const Vec2 start = j.takeoff + Vec2(c.c_xe, c.c_ze);
  const Vec2 vel = velocity_components(j.v, j.theta);
  for (int i = 0; i <= samples; ++i) {
    const double s = j.t * i / samples;
    pts.emplace_back(start.x() + vel.x() * s, start.y() + vel.y() * s - 0.5 * model.gravity() * s * s);
  }
  return pts;
}

/// Pure projection of the executor state into the wire frame.
inline Frame snapshot_frame(const Executor& ex, double circumference, std::uint64_t version_base = 0,
                            std::size_t event_count = 5) {
  const auto& s = ex.state();
  Frame f;
  f.time = s.time;
  f.phase = s.phase;
  f.hip = s.hip;
  f.hip_vel = s.hip_vel;
  f.foot = ex.foot();
  f.knee = ex.knee();
  f.grounded = s.contact.has_value();
  f.circumference = circumference;
  f.display_x = wrap_display(s.hip.x(), circumference);
  f.terrain_version = version_base + ex.env_version();
  f.terrain = ex.env().data();
  f.jumps = s.jumps;
  f.outcome = ex.log().outcome;
  const auto model = OffsetModel::from_leg(ex.leg());
  const auto& plan = s.pending_plan ? s.pending_plan : ex.active_plan();
  if (plan) {
    for (const auto& j : plan->full_plan.jumps) f.plan.push_back({j, sample_arc(j, model)});
  }
  const auto& events = ex.log().events;
  const std::size_t first = events.size() > event_count ? events.size() - event_count : 0;
  f.last_events.assign(events.begin() + static_cast<std::ptrdiff_t>(first), events.end());
  return f;
}

inline Json to_json(const Frame& f) {
  Json plan = Json::array();
  for (const auto& arc : f.plan) {
    Json pts = Json::array();
    for (const auto& p : arc.foot) pts.push_back(point_json(p));
    Json j = jump_json(arc.jump);
    j["foot_path"] = pts;
    plan.push_back(j);
  }
  Json obstacles = Json::array(), areas = Json::array(), events = Json::array();
  for (const auto& o : f.terrain.obstacles) obstacles.push_back(obstacle_json(o));
  for (const auto& a : f.terrain.areas) areas.push_back(area_json(a));
  for (const auto& e : f.last_events) events.push_back({{"time", e.time}, {"kind", e.kind}, {"detail", e.detail}});
  return {{"time", f.time},
          {"phase", std::string(to_string(f.phase))},
          {"grounded", f.grounded},
          {"hip", point_json(f.hip)},
          {"hip_vel", point_json(f.hip_vel)},
          {"foot", point_json(f.foot)},
          {"knee", point_json(f.knee)},
          {"display_x", f.display_x},
          {"circumference", f.circumference},
          {"plan", plan},
          {"terrain",
           {{"version", f.terrain_version},
            {"x_min", f.terrain.x_min},
            {"x_max", f.terrain.x_max},
            {"margin_h", f.terrain.margin_h},
            {"margin_v", f.terrain.margin_v},
            {"obstacles", obstacles},
            {"restricted_areas", areas}}},
          {"last_events", events},
          {"jumps", f.jumps},
          {"outcome", std::string(to_string(f.outcome))},
          {"paused", f.paused},
          {"speed", f.speed}};
}

// ---------------------------------------------------------------------------
// Session.

class LiveSession {
 public:
  explicit LiveSession(Scenario scenario) : scenario_(std::move(scenario)) { rebuild(); }
  ~LiveSession() { stop(); }

  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  /// Validates and applies one command between ticks.
  Reply handle_command(const Command& cmd) {
    std::lock_guard lock(mutex_);
    Reply r;
    if (closed_) {
      r.code = std::string(to_string(ErrorCode::kSessionClosed));
      r.reason = r.code + ": session is closed";
      r.version = version_base_ + executor_->env_version();
      return r;
    }
    try {
      std::visit(detail::Overloaded{
                     [&](const EnvironmentUpdate& u) { executor_->apply(u); },
                     [&](const Disturb& d) { executor_->disturb(d.dv); },
                     [&](const Pause&) { paused_ = true; },
                     [&](const Resume&) { paused_ = false; },
                     [&](const Reset& reset) {
                       if (reset.scenario) scenario_ = resolve_scenario(*reset.scenario);
                       version_base_ += executor_->env_version() + 1;
                       rebuild();
                     },
                     [&](const SetSpeed& s) { speed_ = s.factor; }},
                 cmd);
      r.accepted = true;
    } catch (const Error& e) {
      r.code = std::string(to_string(e.code()));
      r.reason = e.what();
    }
    r.version = version_base_ + executor_->env_version();
    wake_.notify_all();
    return r;
  }

  Frame frame() const {
    std::lock_guard lock(mutex_);
    Frame f = snapshot_frame(*executor_, scenario_.circumference, version_base_);
    f.paused = paused_;
    f.speed = speed_;
    return f;
  }

  Json hello() const {
    std::lock_guard lock(mutex_);
    return {{"schema_version", kSchemaVersion},
            {"scenario", scenario_.name},
            {"circumference", scenario_.circumference},
            {"dt", scenario_.dt},
            {"x_goal", scenario_.mppc.x_goal}};
  }

  /// Advances by one tick regardless of pause state (for tests and stepping).
  void step_once() {
    std::lock_guard lock(mutex_);
    tick_locked();
  }

  void start() {
    if (running_.exchange(true)) return;
    loop_ = std::thread([this] { run(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    wake_.notify_all();
    if (loop_.joinable()) loop_.join();
  }

  /// Stops the loop; later commands are rejected with SessionClosed.
  void close() {
    stop();
    std::lock_guard lock(mutex_);
    closed_ = true;
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

 private:
  void rebuild() {
    EpisodeSetup setup = to_setup(scenario_);
    setup.options.async_planning = true;
    setup.options.record_samples = false;
    setup.options.max_time = std::numeric_limits<double>::infinity();
    executor_ = std::make_unique<Executor>(make_executor(setup));
    script_ = EventScript(setup.environment_events, setup.disturbances);
  }

  void tick_locked() {
    if (executor_->finished()) return;
    (void)script_.poll(*executor_);
    executor_->step();
  }

  void run() {
    using Clock = std::chrono::steady_clock;
    auto next = Clock::now();
    std::unique_lock lock(mutex_);
    while (running_) {
      if (paused_ || executor_->finished()) {
        wake_.wait_for(lock, std::chrono::milliseconds(50));
        next = Clock::now();
        continue;
      }
      tick_locked();
      next += std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(scenario_.dt / speed_));
      wake_.wait_until(lock, next, [this] { return !running_; });
    }
  }

  Scenario scenario_;
  std::unique_ptr<Executor> executor_;
  EventScript script_;
  std::uint64_t version_base_ = 0;
  bool paused_ = false;
  bool closed_ = false;
  double speed_ = 1.0;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::atomic<bool> running_{false};
  std::thread loop_;
};

/// Handles one decoded client message; returns the ack or reject message.
inline Json handle_message(LiveSession& session, const std::string& text) {
  Json id = nullptr;
  try {
    const Json msg = Json::parse(text);
    if (!msg.is_object()) throw Error(ErrorCode::kParseError, "message must be an object");
    if (msg.contains("id")) id = msg["id"];
    const detail::Reader r(msg, "");
    r.expect_object({"type", "id", "payload"});
    const std::string type = r.string("type");
    const Json payload = msg.contains("payload") ? msg["payload"] : Json::object();
    const Reply reply = session.handle_command(parse_command(type, payload));
    if (reply.accepted) return {{"type", "ack"}, {"id", id}, {"payload", {{"version", reply.version}}}};
    return {{"type", "reject"},
            {"id", id},
            {"payload", {{"code", reply.code}, {"reason", reply.reason}, {"version", reply.version}}}};
  } catch (const Json::exception& e) {
    return {{"type", "reject"}, {"id", id}, {"payload", {{"code", "ParseError"}, {"reason", e.what()}}}};
  } catch (const Error& e) {
    return {{"type", "reject"},
            {"id", id},
            {"payload", {{"code", std::string(to_string(e.code()))}, {"reason", e.what()}}}};
  }
}

// ---------------------------------------------------------------------------
// WebSocket helpers (RFC 6455, text frames only).

namespace ws {

inline constexpr const char* kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

inline std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

inline std::string accept_key(const std::string& client_key) {
  const std::string src = client_key + kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(src.data()), src.size(), digest);
  return base64(digest, SHA_DIGEST_LENGTH);
}

inline std::string encode_frame(const std::string& payload, std::uint8_t opcode = 0x1) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | opcode));
  const std::size_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(n));
  } else if (n < 65536) {
    f.push_back(static_cast<char>(126));
    f.push_back(static_cast<char>((n >> 8) & 0xff));
    f.push_back(static_cast<char>(n & 0xff));
  } else {
    f.push_back(static_cast<char>(127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xff));
  }
  return f + payload;
}

struct Decoded {
  std::uint8_t opcode = 0;
  std::string payload;
  std::size_t consumed = 0;  // 0 = need more bytes
};

inline Decoded decode_frame(const std::string& buf) {
  Decoded d;
  if (buf.size() < 2) return d;
  const auto b0 = static_cast<std::uint8_t>(buf[0]), b1 = static_cast<std::uint8_t>(buf[1]);
  d.opcode = b0 & 0x0f;
  const bool masked = b1 & 0x80;
  std::uint64_t len = b1 & 0x7f;
  std::size_t pos = 2;
  if (len == 126) {
    if (buf.size() < 4) return d;
    len = (static_cast<std::uint8_t>(buf[2]) << 8) | static_cast<std::uint8_t>(buf[3]);
    pos = 4;
  } else if (len == 127) {
    if (buf.size() < 10) return d;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf[2 + i]);
    pos = 10;
  }
  unsigned char mask[4] = {0, 0, 0, 0};
  if (masked) {
    if (buf.size() < pos + 4) return d;
    for (int i = 0; i < 4; ++i) mask[i] = static_cast<unsigned char>(buf[pos + i]);
    pos += 4;
  }
  if (buf.size() < pos + len) return d;
  d.payload = buf.substr(pos, len);
  if (masked) {
    for (std::size_t i = 0; i < d.payload.size(); ++i) d.payload[i] = static_cast<char>(d.payload[i] ^ mask[i % 4]);
  }
  d.consumed = pos + len;
  return d;
}

/// Client-side (masked) frame, for scripted clients and tests.
inline std::string encode_masked_frame(const std::string& payload, std::uint32_t mask_seed = 0x1234abcd) {
  std::string f = encode_frame(payload);
  std::size_t header = f.size() - payload.size();
  f[1] = static_cast<char>(f[1] | 0x80);
  const unsigned char mask[4] = {static_cast<unsigned char>(mask_seed >> 24), static_cast<unsigned char>(mask_seed >> 16),
                                 static_cast<unsigned char>(mask_seed >> 8), static_cast<unsigned char>(mask_seed)};
  std::string out = f.substr(0, header);
  out.append(reinterpret_cast<const char*>(mask), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(static_cast<char>(payload[i] ^ mask[i % 4]));
  return out;
}

}  // namespace ws

// ---------------------------------------------------------------------------
// Server.

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  double frame_rate = 60.0;
  std::string web_root = "web";
};

/// Bind address from MPPC_BIND_ADDRESS when set.
inline std::string bind_address_from_env(const std::string& fallback) {
  const char* v = std::getenv("MPPC_BIND_ADDRESS");
  return v && *v ? std::string(v) : fallback;
}

class LiveServer {
 public:
  LiveServer(LiveSession& session, ServerOptions options) : session_(session), options_(std::move(options)) {}
  ~LiveServer() { stop(); }

  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  /// Binds and starts the accept and broadcast threads. Returns the port.
  int start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(ErrorCode::kInvalidArgument, "socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
    if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
      throw Error(ErrorCode::kInvalidArgument, "bad bind address " + options_.bind_address);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw Error(ErrorCode::kInvalidArgument, "cannot listen on " + options_.bind_address + ":" +
                                                   std::to_string(options_.port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    broadcast_thread_ = std::thread([this] { broadcast_loop(); });
    return port_;
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    if (broadcast_thread_.joinable()) broadcast_thread_.join();
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(clients_mutex_);
      for (auto& c : clients_) ::shutdown(c->fd, SHUT_RDWR);
      threads.swap(client_threads_);
    }
    for (auto& t : threads) {
      if (t.joinable()) t.join();
    }
    std::lock_guard lock(clients_mutex_);
    for (auto& c : clients_) ::close(c->fd);
    clients_.clear();
  }

  int port() const { return port_; }

 private:
  struct Client {
    int fd = -1;
    bool websocket = false;
    std::mutex write_mutex;
    std::atomic<bool> open{true};
  };

  static bool send_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) return false;
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  bool send_message(Client& c, const Json& msg) {
    if (!c.open) return false;
    const std::string text = msg.dump();
    std::lock_guard lock(c.write_mutex);
    const bool ok = send_all(c.fd, c.websocket ? ws::encode_frame(text) : text + "\n");
    if (!ok) c.open = false;
    return ok;
  }

  void accept_loop() {
    while (running_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (!running_) return;
        continue;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      timeval tv{0, 200000};
      ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
      auto client = std::make_shared<Client>();
      client->fd = fd;
      std::lock_guard lock(clients_mutex_);
      clients_.push_back(client);
      client_threads_.emplace_back([this, client] { serve(client); });
    }
  }

  void broadcast_loop() {
    const auto period = std::chrono::duration<double>(1.0 / options_.frame_rate);
    auto next = std::chrono::steady_clock::now();
    while (running_) {
      next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
      std::this_thread::sleep_until(next);
      std::vector<std::shared_ptr<Client>> targets;
      {
        std::lock_guard lock(clients_mutex_);
        for (auto& c : clients_) {
          if (c->open && registered(*c)) targets.push_back(c);
        }
      }
      if (targets.empty()) continue;
      const Json msg = {{"type", "frame"}, {"id", nullptr}, {"payload", to_json(session_.frame())}};
      for (auto& c : targets) send_message(*c, msg);
    }
  }

  bool registered(const Client& c) {
    std::lock_guard lock(registered_mutex_);
    return std::find(registered_.begin(), registered_.end(), &c) != registered_.end();
  }
  void set_registered(const Client& c, bool on) {
    std::lock_guard lock(registered_mutex_);
    if (on) {
      registered_.push_back(&c);
    } else {
      registered_.erase(std::remove(registered_.begin(), registered_.end(), &c), registered_.end());
    }
  }

  // Reads until `pred(buffer)` holds or the peer closes.
  static bool read_more(int fd, std::string& buf) {
    char tmp[4096];
    const ssize_t n = ::recv(fd, tmp, sizeof(tmp), 0);
    if (n <= 0) return false;
    buf.append(tmp, static_cast<std::size_t>(n));
    return true;
  }

  void serve(std::shared_ptr<Client> c) {
    std::string buf;
    while (buf.empty()) {
      if (!read_more(c->fd, buf)) return finish(*c);
    }
    if (buf[0] == '{' || buf[0] == '[' || std::isspace(static_cast<unsigned char>(buf[0]))) return serve_lines(*c, buf);
    if (buf.rfind("GET", 0) == 0 || std::string("GET").rfind(buf, 0) == 0) return serve_http(*c, buf);
    return finish(*c);
  }

  void finish(Client& c) {
    set_registered(c, false);
    c.open = false;
    ::shutdown(c.fd, SHUT_RDWR);
  }

  void greet(Client& c) {
    send_message(c, {{"type", "hello"}, {"id", nullptr}, {"payload", session_.hello()}});
    send_message(c, {{"type", "frame"}, {"id", nullptr}, {"payload", to_json(session_.frame())}});
    set_registered(c, true);
  }

  void serve_lines(Client& c, std::string buf) {
    greet(c);
    while (running_ && c.open) {
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        send_message(c, handle_message(session_, line));
      }
      if (!read_more(c.fd, buf)) break;
    }
    finish(c);
  }

  std::string static_file(const std::string& path) const {
    std::ifstream in(options_.web_root + path, std::ios::binary);
    if (!in) return {};
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void serve_http(Client& c, std::string buf) {
    while (buf.find("\r\n\r\n") == std::string::npos) {
      if (buf.size() > 16384 || !read_more(c.fd, buf)) return finish(c);
    }
    const std::size_t header_end = buf.find("\r\n\r\n");
    std::istringstream head(buf.substr(0, header_end));
    std::string method, target, version, line;
    head >> method >> target >> version;
    std::getline(head, line);
    std::string ws_key;
    bool upgrade = false;
    while (std::getline(head, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string name = line.substr(0, colon), value = line.substr(colon + 1);
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
      value.erase(0, value.find_first_not_of(' '));
      if (name == "sec-websocket-key") ws_key = value;
      if (name == "upgrade") {
        std::transform(value.begin(), value.end(), value.begin(), [](unsigned char ch) { return std::tolower(ch); });
        upgrade = value == "websocket";
      }
    }
    buf.erase(0, header_end + 4);
    if (target == "/ws" && upgrade && !ws_key.empty()) {
      const std::string resp =
          "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
          "Sec-WebSocket-Accept: " +
          ws::accept_key(ws_key) + "\r\n\r\n";
      if (!send_all(c.fd, resp)) return finish(c);
      c.websocket = true;
      return serve_websocket(c, buf);
    }
    std::string body, type = "text/html; charset=utf-8", status = "200 OK";
    if (target == "/" || target == "/index.html") {
      body = static_file("/index.html");
      if (body.empty()) body = "<!doctype html><title>mppc</title><p>UI assets not found; connect to /ws.</p>";
    } else if (target == "/frame") {
      body = to_json(session_.frame()).dump();
      type = "application/json";
    } else {
      status = "404 Not Found";
      body = "not found";
      type = "text/plain";
    }
    send_all(c.fd, "HTTP/1.1 " + status + "\r\nContent-Type: " + type + "\r\nContent-Length: " +
                       std::to_string(body.size()) + "\r\nConnection: close\r\n\r\n" + body);
    finish(c);
  }

  void serve_websocket(Client& c, std::string buf) {
    greet(c);
    while (running_ && c.open) {
      for (;;) {
        const auto d = ws::decode_frame(buf);
        if (d.consumed == 0) break;
        buf.erase(0, d.consumed);
        if (d.opcode == 0x8) {
          std::lock_guard lock(c.write_mutex);
          send_all(c.fd, ws::encode_frame("", 0x8));
          return finish(c);
        }
        if (d.opcode == 0x9) {
          std::lock_guard lock(c.write_mutex);
          send_all(c.fd, ws::encode_frame(d.payload, 0xA));
          continue;
        }
        if (d.opcode == 0x1) send_message(c, handle_message(session_, d.payload));
      }
      if (!read_more(c.fd, buf)) break;
    }
    finish(c);
  }

  LiveSession& session_;
  ServerOptions options_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread broadcast_thread_;
  std::mutex clients_mutex_;
  std::vector<std::shared_ptr<Client>> clients_;
  std::vector<std::thread> client_threads_;
  std::mutex registered_mutex_;
  std::vector<const Client*> registered_;
};

}  // namespace mppc
