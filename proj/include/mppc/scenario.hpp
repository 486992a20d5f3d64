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

// Scenario files, plan/log serialization, benchmarking and trace export.
//
// Scenario JSON is parsed strictly: unknown keys and wrong types are errors
// that carry the JSON path of the offending field. Angles are stored in
// degrees in files (`*_deg` keys) and radians in memory.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mppc/env_model.hpp"
#include "mppc/leg_kinematics.hpp"
#include "mppc/miopt_planner.hpp"
#include "mppc/mppc.hpp"
#include "mppc/sim_executor.hpp"

namespace mppc {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct ScenarioEvent {
  Trigger trigger;
  std::variant<EnvironmentUpdate, Vec2> action;  // Vec2: velocity impulse
  bool operator==(const ScenarioEvent&) const = default;
};

struct Scenario {
  std::string name;
  std::string description;
  Parkour parkour;
  LegParams leg;
  MppcConfig mppc;  // carries limits and the goal
  SolverConfig solver;
  PhaseGains gains;
  NoiseModel noise;
  std::uint64_t seed = 0;
  double x_start = 0.0;
  double goal_tolerance = 0.05;
  double dt = 1.0 / 200.0;
  double max_time = 120.0;
  double circumference = 7.2;  // display wrap only
  std::vector<ScenarioEvent> events;

  const Limits& limits() const { return mppc.limits; }
};

inline bool operator==(const SolverConfig& a, const SolverConfig& b) {
  return a.constraint_tolerance == b.constraint_tolerance &&
         a.relative_optimality_tolerance == b.relative_optimality_tolerance &&
         a.max_nlp_iterations == b.max_nlp_iterations && a.max_nodes == b.max_nodes &&
         a.penalty_growth == b.penalty_growth;
}

inline bool operator==(const Scenario& a, const Scenario& b) {
  return a.name == b.name && a.description == b.description && a.parkour == b.parkour && a.leg == b.leg &&
         a.mppc == b.mppc && a.solver == b.solver && a.gains == b.gains && a.noise == b.noise && a.seed == b.seed &&
         a.x_start == b.x_start && a.goal_tolerance == b.goal_tolerance && a.dt == b.dt &&
         a.max_time == b.max_time && a.circumference == b.circumference && a.events == b.events;
}

// ---------------------------------------------------------------------------
// Strict reader.

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const Json& json() const { return j_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kParseError, "at " + (path_.empty() ? std::string("<root>") : path_) + ": " + what);
  }

  Reader child(const std::string& key) const { return Reader(j_.at(key), join(key)); }
  Reader element(std::size_t i) const { return Reader(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    for (const auto& [key, _] : j_.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        Reader(j_, join(key)).fail("unknown field");
      }
    }
  }
  bool has(const char* key) const { return j_.contains(key); }

  double number(const char* key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      Reader(j_, join(key)).fail("missing required number");
    }
    const auto& v = j_.at(key);
    if (!v.is_number()) Reader(v, join(key)).fail("expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) Reader(v, join(key)).fail("expected a finite number");
    return d;
  }
  double degrees(const char* key, double fallback_rad) const {
    return has(key) ? deg2rad(number(key)) : fallback_rad;
  }
  long integer(const char* key, std::optional<long> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      Reader(j_, join(key)).fail("missing required integer");
    }
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) Reader(v, join(key)).fail("expected an integer");
    return v.get<long>();
  }
  std::string string(const char* key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      Reader(j_, join(key)).fail("missing required string");
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) Reader(v, join(key)).fail("expected a string");
    return v.get<std::string>();
  }
  std::vector<Reader> array(const char* key) const {
    std::vector<Reader> out;
    if (!has(key)) return out;
    const Reader arr = child(key);
    if (!arr.json().is_array()) arr.fail("expected an array");
    for (std::size_t i = 0; i < arr.json().size(); ++i) out.push_back(arr.element(i));
    return out;
  }

 private:
  const Json& j_;
  std::string path_;
};

inline Obstacle read_obstacle(const Reader& r) {
  r.expect_object({"id", "A", "B", "H"});
  Obstacle o{r.string("id", ""), r.number("A"), r.number("B"), r.number("H")};
  if (!(o.A < o.B)) Reader(r.json()["B"], r.join("B")).fail("InvertedBounds: need A < B");
  if (!(o.H > 0.0)) Reader(r.json()["H"], r.join("H")).fail("height must be positive");
  return o;
}

inline RestrictedArea read_area(const Reader& r) {
  r.expect_object({"id", "a", "b"});
  RestrictedArea a{r.string("id", ""), r.number("a"), r.number("b")};
  if (!(a.a < a.b)) Reader(r.json()["b"], r.join("b")).fail("InvertedBounds: need a < b");
  return a;
}

inline Parkour read_course(const Reader& r) {
  r.expect_object({"x_min", "x_max", "margin_h", "margin_v", "obstacles", "restricted_areas"});
  Parkour p;
  p.x_min = r.number("x_min", 0.0);
  p.x_max = r.number("x_max", 10.0);
  p.margin_h = r.number("margin_h", kDefaultMargin);
  p.margin_v = r.number("margin_v", kDefaultMargin);
  if (p.margin_h < 0.0) Reader(r.json(), r.join("margin_h")).fail("margin must be non-negative");
  if (p.margin_v < 0.0) Reader(r.json(), r.join("margin_v")).fail("margin must be non-negative");
  for (const auto& o : r.array("obstacles")) p.obstacles.push_back(read_obstacle(o));
  for (const auto& a : r.array("restricted_areas")) p.areas.push_back(read_area(a));
  try {
    (void)validate(p);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return p;
}

inline LegParams read_leg(const Reader& r) {
  r.expect_object({"l1", "l2", "mass", "r_takeoff", "r_flight", "theta_flight_deg", "gravity"});
  LegParams d;
  LegParams p{r.number("l1", d.l1),
              r.number("l2", d.l2),
              r.number("mass", d.mass),
              r.number("r_takeoff", d.r_takeoff),
              r.number("r_flight", d.r_flight),
              r.degrees("theta_flight_deg", d.theta_flight),
              r.number("gravity", d.gravity)};
  try {
    validate(p);
    (void)flight_config(p);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return p;
}

inline Limits read_limits(const Reader& r) {
  r.expect_object({"t_min", "t_max", "v_min", "v_max", "theta_min_deg", "theta_max_deg"});
  Limits d;
  Limits l{r.number("t_min", d.t_min), r.number("t_max", d.t_max),
           r.number("v_min", d.v_min), r.number("v_max", d.v_max),
           r.degrees("theta_min_deg", d.theta_min), r.degrees("theta_max_deg", d.theta_max)};
  try {
    validate(l);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return l;
}

inline SolverConfig read_solver(const Reader& r) {
  r.expect_object({"constraint_tolerance", "relative_optimality_tolerance", "max_nlp_iterations", "max_nodes",
                   "penalty_growth"});
  SolverConfig d;
  SolverConfig s;
  s.constraint_tolerance = r.number("constraint_tolerance", d.constraint_tolerance);
  s.relative_optimality_tolerance = r.number("relative_optimality_tolerance", d.relative_optimality_tolerance);
  s.max_nlp_iterations = static_cast<int>(r.integer("max_nlp_iterations", d.max_nlp_iterations));
  s.max_nodes = r.integer("max_nodes", d.max_nodes);
  s.penalty_growth = r.number("penalty_growth", d.penalty_growth);
  if (!(s.constraint_tolerance > 0.0 && s.relative_optimality_tolerance > 0.0)) r.fail("tolerances must be positive");
  if (s.max_nlp_iterations <= 0 || s.max_nodes <= 0) r.fail("iteration and node limits must be positive");
  if (!(s.penalty_growth > 1.0)) r.fail("penalty growth must exceed 1");
  return s;
}

inline JointGains read_joint_gains(const Reader& r, JointGains d) {
  r.expect_object({"kp", "kd"});
  return {r.number("kp", d.kp), r.number("kd", d.kd)};
}

inline PhaseGains read_gains(const Reader& r, const LegParams& leg) {
  r.expect_object({"flight", "absorption", "reposition", "staging", "exertion", "initialization_time",
                   "absorption_time", "reposition_time", "staging_time", "crouch_extension"});
  PhaseGains g;
  if (r.has("flight")) g.flight = read_joint_gains(r.child("flight"), g.flight);
  if (r.has("absorption")) g.absorption = read_joint_gains(r.child("absorption"), g.absorption);
  if (r.has("reposition")) g.reposition = read_joint_gains(r.child("reposition"), g.reposition);
  if (r.has("staging")) g.staging = read_joint_gains(r.child("staging"), g.staging);
  if (r.has("exertion")) g.exertion = read_joint_gains(r.child("exertion"), g.exertion);
  g.initialization_time = r.number("initialization_time", g.initialization_time);
  g.absorption_time = r.number("absorption_time", g.absorption_time);
  g.reposition_time = r.number("reposition_time", g.reposition_time);
  g.staging_time = r.number("staging_time", g.staging_time);
  g.crouch_extension = r.number("crouch_extension", g.crouch_extension);
  try {
    validate(g, leg);
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return g;
}

inline Trigger read_trigger(const Reader& r) {
  r.expect_object({"time", "after_takeoff", "delay"});
  Trigger t;
  if (r.has("time")) t.at_time = r.number("time");
  if (r.has("after_takeoff")) t.after_takeoff = static_cast<int>(r.integer("after_takeoff"));
  t.delay = r.number("delay", 0.0);
  if (t.at_time.has_value() == t.after_takeoff.has_value()) r.fail("trigger needs exactly one of time, after_takeoff");
  if (t.after_takeoff && *t.after_takeoff < 1) Reader(r.json(), r.join("after_takeoff")).fail("jump index is 1-based");
  if (t.delay < 0.0) Reader(r.json(), r.join("delay")).fail("delay must be non-negative");
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Environment updates and disturbances share one {type, payload} shape with
// the wire protocol.

inline EnvironmentUpdate parse_update(const std::string& type, const detail::Reader& p) {
  using detail::Reader;
  if (type == "add_obstacle") return AddObstacle{detail::read_obstacle(p)};
  if (type == "move_obstacle") {
    p.expect_object({"id", "A", "B", "H"});
    MoveObstacle m{p.string("id"), p.number("A"), p.number("B"), p.number("H")};
    if (!(m.A < m.B)) Reader(p.json(), p.join("B")).fail("InvertedBounds: need A < B");
    return m;
  }
  if (type == "remove_obstacle") {
    p.expect_object({"id"});
    return RemoveObstacle{p.string("id")};
  }
  if (type == "set_restricted_area") return SetRestrictedArea{detail::read_area(p)};
  if (type == "remove_restricted_area") {
    p.expect_object({"id"});
    return RemoveRestrictedArea{p.string("id")};
  }
  p.fail("unknown update type '" + type + "'");
}

inline bool is_update_type(const std::string& t) {
  return t == "add_obstacle" || t == "move_obstacle" || t == "remove_obstacle" || t == "set_restricted_area" ||
         t == "remove_restricted_area";
}

inline Json obstacle_json(const Obstacle& o) { return {{"id", o.id}, {"A", o.A}, {"B", o.B}, {"H", o.H}}; }
inline Json area_json(const RestrictedArea& a) { return {{"id", a.id}, {"a", a.a}, {"b", a.b}}; }

inline std::pair<std::string, Json> update_json(const EnvironmentUpdate& u) {
  return std::visit(
      detail::Overloaded{
          [](const AddObstacle& a) { return std::pair<std::string, Json>("add_obstacle", obstacle_json(a.obstacle)); },
          [](const MoveObstacle& m) {
            return std::pair<std::string, Json>("move_obstacle", {{"id", m.id}, {"A", m.A}, {"B", m.B}, {"H", m.H}});
          },
          [](const RemoveObstacle& r) { return std::pair<std::string, Json>("remove_obstacle", {{"id", r.id}}); },
          [](const SetRestrictedArea& s) { return std::pair<std::string, Json>("set_restricted_area", area_json(s.area)); },
          [](const RemoveRestrictedArea& r) {
            return std::pair<std::string, Json>("remove_restricted_area", {{"id", r.id}});
          }},
      u);
}

// ---------------------------------------------------------------------------

inline Scenario scenario_from_json(const Json& root) {
  using detail::Reader;
  const Reader r(root, "");
  r.expect_object({"schema_version", "name", "description", "course", "leg", "limits", "mppc", "solver", "gains",
                   "noise", "seed", "x_start", "x_goal", "goal_tolerance", "dt", "max_time", "circumference",
                   "events"});
  if (r.integer("schema_version") != kSchemaVersion) {
    Reader(root, "schema_version").fail("unsupported schema version");
  }
  Scenario s;
  s.name = r.string("name", "");
  s.description = r.string("description", "");
  if (r.has("course")) s.parkour = detail::read_course(r.child("course"));
  if (r.has("leg")) s.leg = detail::read_leg(r.child("leg"));
  if (r.has("limits")) s.mppc.limits = detail::read_limits(r.child("limits"));
  if (r.has("mppc")) {
    const Reader m = r.child("mppc");
    m.expect_object({"lookahead", "n_slack"});
    s.mppc.lookahead = m.number("lookahead", s.mppc.lookahead);
    s.mppc.n_slack = static_cast<int>(m.integer("n_slack", s.mppc.n_slack));
    if (!(s.mppc.lookahead > 0.0)) Reader(root, "mppc.lookahead").fail("lookahead must be positive");
    if (s.mppc.n_slack < 0) Reader(root, "mppc.n_slack").fail("n_slack must be non-negative");
  }
  if (r.has("solver")) s.solver = detail::read_solver(r.child("solver"));
  if (r.has("gains")) s.gains = detail::read_gains(r.child("gains"), s.leg);
  if (r.has("noise")) {
    const Reader n = r.child("noise");
    n.expect_object({"sigma_v", "sigma_theta_deg"});
    s.noise.sigma_v = n.number("sigma_v", 0.0);
    s.noise.sigma_theta = n.degrees("sigma_theta_deg", 0.0);
    if (s.noise.sigma_v < 0.0 || s.noise.sigma_theta < 0.0) n.fail("noise levels must be non-negative");
  }
  const long seed = r.integer("seed", 0);
  if (seed < 0) Reader(root, "seed").fail("seed must be non-negative");
  s.seed = static_cast<std::uint64_t>(seed);
  s.x_start = r.number("x_start", s.parkour.x_min);
  s.mppc.x_goal = r.number("x_goal");
  s.goal_tolerance = r.number("goal_tolerance", s.goal_tolerance);
  s.dt = r.number("dt", s.dt);
  s.max_time = r.number("max_time", s.max_time);
  s.circumference = r.number("circumference", s.circumference);
  if (!(s.goal_tolerance > 0.0)) Reader(root, "goal_tolerance").fail("must be positive");
  if (!(s.dt > 0.0)) Reader(root, "dt").fail("must be positive");
  if (!(s.max_time > 0.0)) Reader(root, "max_time").fail("must be positive");
  if (!(s.circumference > 0.0)) Reader(root, "circumference").fail("must be positive");
  const auto course = validate(s.parkour);
  if (!within_extent(course, s.x_start)) Reader(root, "x_start").fail("OutOfExtent: start outside the course");
  if (!within_extent(course, s.mppc.x_goal)) Reader(root, "x_goal").fail("OutOfExtent: goal outside the course");
  if (!(s.mppc.x_goal >= s.x_start)) Reader(root, "x_goal").fail("goal must not lie behind the start");

  for (const auto& e : r.array("events")) {
    e.expect_object({"trigger", "type", "payload"});
    ScenarioEvent ev;
    ev.trigger = detail::read_trigger(e.child("trigger"));
    const std::string type = e.string("type");
    const Reader payload = e.child("payload");
    if (type == "disturb") {
      payload.expect_object({"dvx", "dvz"});
      ev.action = Vec2(payload.number("dvx", 0.0), payload.number("dvz", 0.0));
    } else if (is_update_type(type)) {
      ev.action = parse_update(type, payload);
    } else {
      Reader(e.json(), e.join("type")).fail("unknown event type '" + type + "'");
    }
    s.events.push_back(std::move(ev));
  }
  // Timed events first in time order, then jump-relative ones by jump and delay.
  std::stable_sort(s.events.begin(), s.events.end(), [](const ScenarioEvent& a, const ScenarioEvent& b) {
    auto key = [](const Trigger& t) {
      return t.at_time ? std::tuple<int, double, double>(0, *t.at_time, 0.0)
                       : std::tuple<int, double, double>(1, *t.after_takeoff, t.delay);
    };
    return key(a.trigger) < key(b.trigger);
  });
  return s;
}

inline Scenario parse_scenario(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("at <root>: ") + e.what());
  }
  return scenario_from_json(root);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

#ifndef MPPC_SCENARIO_DIR
#define MPPC_SCENARIO_DIR "scenarios"
#endif

/// Accepts a file path or the name of a bundled scenario ("static_course").
/// Bundled files are looked up in $MPPC_SCENARIO_DIR, then in the directory
/// compiled in as MPPC_SCENARIO_DIR.
inline Scenario resolve_scenario(const std::string& name_or_path) {
  if (std::ifstream(name_or_path).good()) return load_scenario(name_or_path);
  std::vector<std::string> dirs;
  if (const char* env = std::getenv("MPPC_SCENARIO_DIR")) dirs.emplace_back(env);
  dirs.emplace_back(MPPC_SCENARIO_DIR);
  for (const auto& d : dirs) {
    const std::string path = d + "/" + name_or_path + ".json";
    if (std::ifstream(path).good()) return load_scenario(path);
  }
  throw Error(ErrorCode::kInvalidArgument, "no scenario file or bundled scenario named '" + name_or_path + "'");
}

// Degrees for a file such that reading them back restores `rad` exactly
// whenever a short decimal does.
inline double file_degrees(double rad) {
  const double deg = rad2deg(rad);
  for (double scale : {1.0, 1e3, 1e6, 1e9}) {
    const double rounded = std::round(deg * scale) / scale;
    if (deg2rad(rounded) == rad) return rounded;
  }
  return deg;
}

inline Json trigger_json(const Trigger& t) {
  Json j = Json::object();
  if (t.at_time) j["time"] = *t.at_time;
  if (t.after_takeoff) j["after_takeoff"] = *t.after_takeoff;
  if (t.delay != 0.0 || t.after_takeoff) j["delay"] = t.delay;
  return j;
}

inline Json to_json(const Scenario& s) {
  Json course = {{"x_min", s.parkour.x_min},       {"x_max", s.parkour.x_max},
                 {"margin_h", s.parkour.margin_h}, {"margin_v", s.parkour.margin_v},
                 {"obstacles", Json::array()},     {"restricted_areas", Json::array()}};
  for (const auto& o : s.parkour.obstacles) course["obstacles"].push_back(obstacle_json(o));
  for (const auto& a : s.parkour.areas) course["restricted_areas"].push_back(area_json(a));
  auto gains = [](const JointGains& g) { return Json{{"kp", g.kp}, {"kd", g.kd}}; };
  const auto& l = s.mppc.limits;
  Json j = {
      {"schema_version", kSchemaVersion},
      {"name", s.name},
      {"description", s.description},
      {"course", course},
      {"leg",
       {{"l1", s.leg.l1},
        {"l2", s.leg.l2},
        {"mass", s.leg.mass},
        {"r_takeoff", s.leg.r_takeoff},
        {"r_flight", s.leg.r_flight},
        {"theta_flight_deg", file_degrees(s.leg.theta_flight)},
        {"gravity", s.leg.gravity}}},
      {"limits",
       {{"t_min", l.t_min},
        {"t_max", l.t_max},
        {"v_min", l.v_min},
        {"v_max", l.v_max},
        {"theta_min_deg", file_degrees(l.theta_min)},
        {"theta_max_deg", file_degrees(l.theta_max)}}},
      {"mppc", {{"lookahead", s.mppc.lookahead}, {"n_slack", s.mppc.n_slack}}},
      {"solver",
       {{"constraint_tolerance", s.solver.constraint_tolerance},
        {"relative_optimality_tolerance", s.solver.relative_optimality_tolerance},
        {"max_nlp_iterations", s.solver.max_nlp_iterations},
        {"max_nodes", s.solver.max_nodes},
        {"penalty_growth", s.solver.penalty_growth}}},
      {"gains",
       {{"flight", gains(s.gains.flight)},
        {"absorption", gains(s.gains.absorption)},
        {"reposition", gains(s.gains.reposition)},
        {"staging", gains(s.gains.staging)},
        {"exertion", gains(s.gains.exertion)},
        {"initialization_time", s.gains.initialization_time},
        {"absorption_time", s.gains.absorption_time},
        {"reposition_time", s.gains.reposition_time},
        {"staging_time", s.gains.staging_time},
        {"crouch_extension", s.gains.crouch_extension}}},
      {"noise", {{"sigma_v", s.noise.sigma_v}, {"sigma_theta_deg", file_degrees(s.noise.sigma_theta)}}},
      {"seed", s.seed},
      {"x_start", s.x_start},
      {"x_goal", s.mppc.x_goal},
      {"goal_tolerance", s.goal_tolerance},
      {"dt", s.dt},
      {"max_time", s.max_time},
      {"circumference", s.circumference},
      {"events", Json::array()}};
  for (const auto& e : s.events) {
    Json ej = {{"trigger", trigger_json(e.trigger)}};
    if (const auto* dv = std::get_if<Vec2>(&e.action)) {
      ej["type"] = "disturb";
      ej["payload"] = {{"dvx", dv->x()}, {"dvz", dv->y()}};
    } else {
      auto [type, payload] = update_json(std::get<EnvironmentUpdate>(e.action));
      ej["type"] = type;
      ej["payload"] = payload;
    }
    j["events"].push_back(ej);
  }
  return j;
}

inline EpisodeSetup to_setup(const Scenario& s, std::optional<std::uint64_t> seed = std::nullopt) {
  EpisodeSetup e;
  e.parkour = s.parkour;
  e.leg = s.leg;
  e.mppc = s.mppc;
  e.solver = s.solver;
  e.gains = s.gains;
  e.noise = s.noise;
  e.seed = seed.value_or(s.seed);
  e.x_start = s.x_start;
  e.options.dt = s.dt;
  e.options.goal_tolerance = s.goal_tolerance;
  e.options.max_time = s.max_time;
  for (const auto& ev : s.events) {
    if (const auto* dv = std::get_if<Vec2>(&ev.action)) {
      e.disturbances.push_back({ev.trigger, *dv});
    } else {
      e.environment_events.push_back({ev.trigger, std::get<EnvironmentUpdate>(ev.action)});
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Plans and logs.

inline Json point_json(const Vec2& p) { return Json::array({p.x(), p.y()}); }

inline Json jump_json(const JumpSpec& j) {
  return {{"t", j.t},
          {"v", j.v},
          {"theta", j.theta},
          {"takeoff", point_json(j.takeoff)},
          {"landing", point_json(j.landing)},
          {"segment", {{"lo", j.segment.lo}, {"hi", j.segment.hi}, {"z", j.segment.z}}}};
}

inline Json to_json(const Plan& p) {
  Json j = {{"jumps", Json::array()},
            {"total_flight_time", p.total_flight_time},
            {"delta_a", p.assignment.delta_a},
            {"delta_b", p.assignment.delta_b},
            {"solver_stats",
             {{"nlp_iterations", p.stats.nlp_iterations},
              {"nodes_expanded", p.stats.nodes_expanded},
              {"leaves_solved", p.stats.leaves_solved},
              {"setup_time", p.stats.setup_seconds},
              {"solve_time", p.stats.solve_seconds},
              {"node_limit_hit", p.stats.node_limit_hit}}}};
  for (const auto& jump : p.jumps) j["jumps"].push_back(jump_json(jump));
  return j;
}

inline Json to_json(const MppcResult& r) {
  return {{"target", r.target_used},   {"horizon", r.horizon_used}, {"setup_time", r.setup_time},
          {"solve_time", r.solve_time}, {"loop_time", r.loop_time},  {"nodes", r.nodes},
          {"plan", to_json(r.full_plan)}};
}

inline Json sample_json(const TickSample& s) {
  return {{"type", "tick"},           {"time", s.time},           {"phase", std::string(to_string(s.phase))},
          {"hip", point_json(s.hip)}, {"hip_vel", point_json(s.hip_vel)}, {"foot", point_json(s.foot)},
          {"knee", point_json(s.knee)}};
}

inline Json jump_record_json(const JumpRecord& r) {
  Json plan = Json::array();
  for (const auto& j : r.plan) plan.push_back(jump_json(j));
  return {{"type", "jump"},
          {"index", r.index},
          {"time", r.takeoff_time},
          {"takeoff_time", r.takeoff_time},
          {"landing_time", r.landing_time},
          {"takeoff", point_json(r.takeoff)},
          {"planned", jump_json(r.planned)},
          {"plan", plan},
          {"env_version", r.env_version},
          {"landed", r.landed},
          {"actual_landing", point_json(r.actual_landing)},
          {"theta_c", r.theta_c},
          {"v_c", r.v_c},
          {"energy_release", r.energy_release},
          {"energy_landing", r.energy_landing},
          {"margin_violation", r.margin_violation},
          {"disturbed", r.disturbed},
          {"timing",
           {{"setup_time", r.timing.setup},
            {"solve_time", r.timing.solve},
            {"loop_time", r.timing.loop},
            {"horizon", r.timing.horizon},
            {"nodes", r.timing.nodes},
            {"target", r.timing.target},
            {"final_window", r.timing.final_window}}}};
}

inline Json event_json(const LogEvent& e) {
  return {{"type", "event"}, {"time", e.time}, {"kind", e.kind}, {"detail", e.detail}};
}

inline Json outcome_json(const EpisodeLog& log) {
  return {{"type", "outcome"},
          {"time", log.duration},
          {"outcome", std::string(to_string(log.outcome))},
          {"success", log.success()},
          {"jumps", log.jumps.size()},
          {"final_x", log.final_x},
          {"soft_failures", log.soft_failures},
          {"hard_failures", log.hard_failures}};
}

/// JSON lines ordered by time: ticks, jumps, events, then the outcome.
inline std::string to_jsonl(const EpisodeLog& log) {
  std::vector<std::pair<double, Json>> lines;
  for (const auto& s : log.samples) lines.emplace_back(s.time, sample_json(s));
  for (const auto& j : log.jumps) lines.emplace_back(j.takeoff_time, jump_record_json(j));
  for (const auto& e : log.events) lines.emplace_back(e.time, event_json(e));
  std::stable_sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [_, j] : lines) out += j.dump() + "\n";
  out += outcome_json(log).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark.

struct BenchRow {
  int jump = 0;
  double setup_time = 0.0;
  double solve_time = 0.0;
  double loop_time = 0.0;
  int horizon = 0;
  long nodes = 0;
  bool final_window = false;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  int repetitions = 0;
  int successes = 0;

  double median_loop_time() const {
    if (rows.empty()) return 0.0;
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.loop_time);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  bool final_is_minimum() const {
    if (rows.empty()) return false;
    return std::all_of(rows.begin(), rows.end(), [&](const BenchRow& r) { return r.loop_time >= rows.back().loop_time; });
  }
};

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Runs the scenario `repetitions` times and reports per-jump planner
/// timings (median over repetitions). Rows follow the first repetition's
/// jump sequence; later repetitions with a different structure are skipped.
inline BenchReport bench(const Scenario& scenario, int repetitions) {
  BenchReport report;
  report.repetitions = std::max(0, repetitions);
  if (repetitions <= 0) return report;
  std::vector<std::vector<JumpRecord>> runs;
  for (int r = 0; r < repetitions; ++r) {
    auto setup = to_setup(scenario);
    setup.options.record_samples = false;
    auto log = run_episode(setup);
    report.successes += log.success() ? 1 : 0;
    runs.push_back(std::move(log.jumps));
  }
  const auto& ref = runs.front();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    std::vector<double> setup, solve, loop;
    for (const auto& run : runs) {
      if (run.size() != ref.size() || run[i].timing.horizon != ref[i].timing.horizon) continue;
      setup.push_back(run[i].timing.setup);
      solve.push_back(run[i].timing.solve);
      loop.push_back(run[i].timing.loop);
    }
    report.rows.push_back({ref[i].index, detail::median(setup), detail::median(solve), detail::median(loop),
                           ref[i].timing.horizon, ref[i].timing.nodes, ref[i].timing.final_window});
  }
  return report;
}

inline Json to_json(const BenchReport& r) {
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"jump", row.jump},
                    {"setup_time", row.setup_time},
                    {"solve_time", row.solve_time},
                    {"loop_time", row.loop_time},
                    {"horizon", row.horizon},
                    {"nodes", row.nodes},
                    {"final_window", row.final_window}});
  }
  return {{"repetitions", r.repetitions},
          {"successes", r.successes},
          {"median_loop_time", r.median_loop_time()},
          {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Trace export.

/// Foot positions along the arc a jump record was planned to fly, from the
/// release point to the planned landing.
inline std::vector<Vec2> planned_foot_arc(const JumpRecord& r, const OffsetModel& model, int samples = 40) {
  std::vector<Vec2> pts;
  const auto& j = r.planned;
  const auto c = model.at(j.theta);
  const Vec2 start = r.takeoff + Vec2(c.c_xe, c.c_ze);
  const Vec2 vel = velocity_components(j.v, j.theta);
  for (int i = 0; i <= samples; ++i) {
    const double s = j.t * i / samples;
    pts.emplace_back(start.x() + vel.x() * s, start.y() + vel.y() * s - 0.5 * model.gravity() * s * s);
  }
  return pts;
}

enum class TraceFormat { kSvg, kCsv, kJson };

inline TraceFormat parse_trace_format(const std::string& name) {
  if (name == "svg") return TraceFormat::kSvg;
  if (name == "csv") return TraceFormat::kCsv;
  if (name == "json") return TraceFormat::kJson;
  throw Error(ErrorCode::kUnsupportedFormat, "trace format '" + name + "' (expected svg, csv or json)");
}

inline constexpr const char* kCsvHeader = "time,phase,hip_x,hip_z,foot_x,foot_z,knee_x,knee_z";

inline std::string export_trace(const EpisodeLog& log, const ValidatedParkour& course, const LegParams& leg,
                                const std::string& format) {
  const TraceFormat fmt = parse_trace_format(format);
  const OffsetModel model = OffsetModel::from_leg(leg);
  std::ostringstream out;
  out.precision(9);
  if (fmt == TraceFormat::kCsv) {
    out << kCsvHeader << "\n";
    for (const auto& s : log.samples) {
      out << s.time << "," << to_string(s.phase) << "," << s.hip.x() << "," << s.hip.y() << "," << s.foot.x() << ","
          << s.foot.y() << "," << s.knee.x() << "," << s.knee.y() << "\n";
    }
    return out.str();
  }
  if (fmt == TraceFormat::kJson) {
    Json terrain = Json::array();
    for (const auto& p : terrain_pieces(course)) terrain.push_back({{"lo", p.lo}, {"hi", p.hi}, {"z", p.z}});
    Json areas = Json::array();
    for (const auto& a : course.areas()) areas.push_back(area_json(a));
    Json foot = Json::array(), hip = Json::array(), arcs = Json::array();
    for (const auto& s : log.samples) {
      foot.push_back(point_json(s.foot));
      hip.push_back(point_json(s.hip));
    }
    for (const auto& r : log.jumps) {
      Json arc = Json::array();
      for (const auto& p : planned_foot_arc(r, model)) arc.push_back(point_json(p));
      arcs.push_back(arc);
    }
    Json j = {{"terrain", terrain}, {"restricted_areas", areas}, {"foot", foot},
              {"hip", hip},         {"planned_arcs", arcs},      {"outcome", std::string(to_string(log.outcome))}};
    return j.dump(2) + "\n";
  }

  // SVG: x to the right, z up, 200 px per metre.
  const double scale = 200.0, pad = 20.0, z_top = 1.0;
  const double width = (course->x_max - course->x_min) * scale + 2 * pad;
  const double height = z_top * scale + 2 * pad;
  auto X = [&](double x) { return pad + (x - course->x_min) * scale; };
  auto Z = [&](double z) { return pad + (z_top - z) * scale; };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& a : course.areas()) {
    out << "<rect class=\"restricted\" x=\"" << X(a.a) << "\" y=\"" << Z(0.02) << "\" width=\"" << (a.b - a.a) * scale
        << "\" height=\"" << 0.02 * scale << "\" fill=\"#d33\" opacity=\"0.6\"/>\n";
  }
  out << "<polyline class=\"terrain\" fill=\"none\" stroke=\"black\" stroke-width=\"2\" points=\"";
  for (const auto& p : terrain_pieces(course)) out << X(p.lo) << "," << Z(p.z) << " " << X(p.hi) << "," << Z(p.z) << " ";
  out << "\"/>\n";
  for (const auto& o : course.obstacles()) {
    out << "<line class=\"obstacle-top\" x1=\"" << X(o.A) << "\" y1=\"" << Z(o.H) << "\" x2=\"" << X(o.B)
        << "\" y2=\"" << Z(o.H) << "\" stroke=\"#2a2\" stroke-width=\"3\"/>\n";
  }
  for (const auto& r : log.jumps) {
    out << "<polyline class=\"planned-arc\" fill=\"none\" stroke=\"#36c\" stroke-dasharray=\"4 3\" points=\"";
    for (const auto& p : planned_foot_arc(r, model)) out << X(p.x()) << "," << Z(p.y()) << " ";
    out << "\"/>\n";
  }
  if (!log.samples.empty()) {
    out << "<polyline class=\"foot\" fill=\"none\" stroke=\"#e80\" points=\"";
    for (const auto& s : log.samples) out << X(s.foot.x()) << "," << Z(s.foot.y()) << " ";
    out << "\"/>\n<polyline class=\"hip\" fill=\"none\" stroke=\"#888\" points=\"";
    for (const auto& s : log.samples) out << X(s.hip.x()) << "," << Z(s.hip.y()) << " ";
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace mppc
