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

// mppc: plan, run, bench and serve hopping scenarios.
//
// Exit codes: 0 success, 1 episode failure, 2 invalid input, 3 infeasible.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mppc/live_service.hpp"
#include "mppc/mppc.hpp"
#include "mppc/scenario.hpp"
#include "mppc/sim_executor.hpp"

#ifndef MPPC_WEB_DIR
#define MPPC_WEB_DIR "web"
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitEpisodeFailure = 1;
constexpr int kExitInvalidInput = 2;
constexpr int kExitInfeasible = 3;

std::atomic<bool> g_interrupted{false};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mppc::Error(mppc::ErrorCode::kInvalidArgument, "cannot write " + path);
  out << text;
}

int cmd_plan(const std::string& name, bool as_json) {
  const auto sc = mppc::resolve_scenario(name);
  const auto env = mppc::validate(sc.parkour);
  const auto model = mppc::OffsetModel::from_leg(sc.leg);
  const auto out = mppc::mppc_step(env, model, sc.x_start, sc.mppc, sc.solver);
  if (as_json) {
    mppc::Json j = {{"status", std::string(mppc::to_string(out.status))}, {"message", out.message},
                    {"x_start", sc.x_start}};
    if (out.result) j["result"] = mppc::to_json(*out.result);
    std::cout << j.dump(2) << "\n";
  } else if (out.result) {
    const auto& r = *out.result;
    std::printf("target %.4f m, %d jumps, flight time %.4f s, loop %.2f ms, %ld nodes\n", r.target_used,
                r.horizon_used, r.full_plan.total_flight_time, 1e3 * r.loop_time, r.nodes);
    for (const auto& jmp : r.full_plan.jumps) {
      std::printf("  t=%.4f s  v=%.4f m/s  theta=%.3f deg  takeoff x=%.4f  landing x=%.4f z=%.3f\n", jmp.t, jmp.v,
                  mppc::rad2deg(jmp.theta), jmp.takeoff.x(), jmp.landing.x(), jmp.landing.y());
    }
  } else {
    std::printf("%s: %s\n", std::string(mppc::to_string(out.status)).c_str(), out.message.c_str());
  }
  return out.ok() ? kExitOk : kExitInfeasible;
}

int cmd_run(const std::string& name, const std::string& log_path, std::optional<std::uint64_t> seed,
            const std::string& trace_path, const std::string& format) {
  const auto sc = mppc::resolve_scenario(name);
  if (!trace_path.empty()) (void)mppc::parse_trace_format(format);
  auto setup = mppc::to_setup(sc, seed);
  setup.options.record_samples = !log_path.empty() || !trace_path.empty();
  const auto log = mppc::run_episode(setup);
  if (!log_path.empty()) write_file(log_path, mppc::to_jsonl(log));
  if (!trace_path.empty()) write_file(trace_path, mppc::export_trace(log, mppc::validate(sc.parkour), sc.leg, format));
  std::printf("%s after %d jumps, t=%.3f s, x=%.4f m, soft failures %d, hard failures %d\n",
              std::string(mppc::to_string(log.outcome)).c_str(), log.landed_jumps(), log.duration, log.final_x,
              log.soft_failures, log.hard_failures);
  if (log.success()) return kExitOk;
  const bool infeasible = log.outcome == mppc::Outcome::kStuck;
  return infeasible ? kExitInfeasible : kExitEpisodeFailure;
}

int cmd_bench(const std::string& name, int reps, bool as_json) {
  const auto sc = mppc::resolve_scenario(name);
  const auto report = mppc::bench(sc, reps);
  if (as_json) {
    std::cout << mppc::to_json(report).dump(2) << "\n";
  } else {
    std::printf("%-5s %10s %10s %10s %4s %7s\n", "jump", "setup_ms", "solve_ms", "loop_ms", "N", "nodes");
    for (const auto& r : report.rows) {
      std::printf("%-5d %10.3f %10.3f %10.3f %4d %7ld%s\n", r.jump, 1e3 * r.setup_time, 1e3 * r.solve_time,
                  1e3 * r.loop_time, r.horizon, r.nodes, r.final_window ? "  final" : "");
    }
    std::printf("median loop %.3f ms over %d repetitions, %d succeeded\n", 1e3 * report.median_loop_time(),
                report.repetitions, report.successes);
  }
  return report.successes == report.repetitions ? kExitOk : kExitEpisodeFailure;
}

int cmd_serve(const std::string& name, int port, const std::string& web_root) {
  mppc::LiveSession session(mppc::resolve_scenario(name));
  mppc::ServerOptions opts;
  opts.port = port;
  opts.bind_address = mppc::bind_address_from_env(opts.bind_address);
  opts.web_root = web_root;
  mppc::LiveServer server(session, opts);
  const int bound = server.start();
  session.start();
  std::printf("serving on http://%s:%d/ (ws path /ws)\n", opts.bind_address.c_str(), bound);
  std::fflush(stdout);
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  session.close();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ballistic hopping planner and simulator"};
  app.require_subcommand(1);

  std::string scenario;
  bool json = false;
  auto* plan = app.add_subcommand("plan", "Plan from the scenario's start position");
  plan->add_option("scenario", scenario, "Bundled scenario name or JSON path")->required();
  plan->add_flag("--json", json, "Print the plan as JSON");

  std::string log_path, trace_path, format = "svg";
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run one episode");
  run->add_option("scenario", scenario, "Bundled scenario name or JSON path")->required();
  run->add_option("--log", log_path, "Write the episode log as JSON lines");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--trace", trace_path, "Write a trace plot or table");
  run->add_option("--format", format, "Trace format: svg, csv or json");

  int reps = 5;
  auto* bench = app.add_subcommand("bench", "Time every planning step");
  bench->add_option("scenario", scenario, "Bundled scenario name or JSON path")->required();
  bench->add_option("--reps", reps, "Repetitions")->check(CLI::NonNegativeNumber);
  bench->add_flag("--json", json, "Print the report as JSON");

  int port = 8080;
  std::string web_root = MPPC_WEB_DIR;
  auto* serve = app.add_subcommand("serve", "Serve a live session");
  serve->add_option("scenario", scenario, "Bundled scenario name or JSON path")->required();
  serve->add_option("--port", port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--web-root", web_root, "Directory with the UI assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalidInput;
  }

  try {
    if (*plan) return cmd_plan(scenario, json);
    if (*run) return cmd_run(scenario, log_path, seed, trace_path, format);
    if (*bench) return cmd_bench(scenario, reps, json);
    if (*serve) return cmd_serve(scenario, port, web_root);
  } catch (const mppc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalidInput;
  }
  return kExitInvalidInput;
}
