// Command-line driver: simulate | compare | gp-check | solver-check | report.
// Exit codes: 0 success, 1 usage or config error, 2 infeasible run, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dualmpc/checks.hpp"
#include "dualmpc/config.hpp"
#include "dualmpc/error.hpp"
#include "dualmpc/report.hpp"
#include "dualmpc/sim.hpp"

namespace fs = std::filesystem;
using namespace dualmpc;

namespace {

enum class Level { Warn, Info, Debug };

Level log_level() {
  const char* v = std::getenv("DUAL_GPMPC_LOG");
  if (!v) return Level::Warn;
  const std::string s(v);
  if (s == "debug") return Level::Debug;
  if (s == "info") return Level::Info;
  return Level::Warn;
}

std::mutex log_mutex;

void log_msg(Level level, const std::string& msg) {
  static const Level current = log_level();
  if (static_cast<int>(level) > static_cast<int>(current)) return;
  const std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << (level == Level::Debug ? "[debug] " : level == Level::Info ? "[info] " : "[warn] ") << msg << '\n';
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::IoError: return 1;
    case ErrorKind::RmpcInfeasible:
    case ErrorKind::InfeasibleTightening:
    case ErrorKind::NoRciExists:
    case ErrorKind::AssumptionViolation: return 2;
    case ErrorKind::NumericalFailure: return 3;
  }
  return 3;
}

struct Args {
  std::string config;
  std::string out = "out";
  std::string input;
  std::string controller;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  bool plot = false;
};

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("-c,--config", a.config, "Scenario file (default: built-in benchmark)");
  sub->add_option("-o,--out", a.out, "Output directory")->capture_default_str();
}

void add_run_flags(CLI::App* sub, Args& a) {
  sub->add_option("--seed", a.seed, "Override the disturbance seed");
  sub->add_flag("--trace", a.trace, "Write per-solve SQP iteration logs to the output directory");
  sub->add_flag("--plot", a.plot, "Write x1/x2/u SVG plots");
}

sim::ScenarioConfig load(const Args& a) {
  sim::ScenarioConfig c = a.config.empty() ? sim::benchmark_config() : sim::load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (!a.controller.empty()) c.controller = sim::parse_controller(a.controller);
  c.validate();
  return c;
}

sim::Metrics metrics_or_nan(const sim::SimLog& log, const sim::ScenarioConfig& c) {
  if (!log.records.empty()) return sim::compute_metrics(log, c);
  sim::Metrics m;
  m.controller = sim::to_string(log.controller);
  m.e_ss_5s_pct = m.e_ss_10s_pct = m.max_violation = m.mean_solve_ms = m.max_solve_ms = std::nan("");
  return m;
}

void print_table(const std::vector<sim::Metrics>& ms) {
  std::printf("%-10s %10s %10s %10s %10s %10s %12s %12s\n", "controller", "ess5_%", "ess10_%", "max_viol",
              "mean_ms", "max_ms", "cum_J", "cum_Delta");
  for (const sim::Metrics& m : ms)
    std::printf("%-10s %10.4f %10.4f %10.3g %10.2f %10.2f %12.4g %12.4g\n", m.controller.c_str(), m.e_ss_5s_pct,
                m.e_ss_10s_pct, m.max_violation, m.mean_solve_ms, m.max_solve_ms, m.cum_J, m.cum_Delta);
}

std::string step_line(sim::ControllerKind kind, const sim::StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s k=%d x=(%.5f, %.5f) u=%.5f %s J=%.4g Delta=%.4g Y=%.4g ms=%.1f",
                sim::to_string(kind), r.k, r.x1, r.x2, r.u, r.status.c_str(), r.J, r.Delta, r.Y, r.solve_ms);
  return buf;
}

// Trace files stay open for the whole run; one per controller.
struct Traces {
  std::mutex mutex;
  std::map<sim::ControllerKind, std::unique_ptr<std::ofstream>> files;

  std::ofstream* open(const fs::path& dir, sim::ControllerKind kind) {
    const std::lock_guard<std::mutex> lock(mutex);
    const fs::path p = dir / ("trace_" + std::string(sim::to_string(kind)) + ".log");
    auto f = std::make_unique<std::ofstream>(p);
    if (!*f) throw Error(ErrorKind::IoError, "cannot write " + p.string());
    log_msg(Level::Info, "tracing to " + p.string());
    return (files[kind] = std::move(f)).get();
  }
};

sim::StepCallback observe(sim::ControllerKind kind, std::ofstream* trace) {
  return [kind, trace](const sim::StepRecord& r) {
    if (trace) *trace << "# step " << r.k << " done: " << r.status << " u=" << r.u << '\n';
    log_msg(Level::Debug, step_line(kind, r));
  };
}

int finish(const std::vector<sim::SimLog>& logs) {
  int code = 0;
  for (const sim::SimLog& l : logs) {
    for (const std::string& w : l.warnings) log_msg(Level::Info, std::string(sim::to_string(l.controller)) + ": " + w);
    if (l.error) {
      log_msg(Level::Warn, std::string(sim::to_string(l.controller)) + " aborted: " + l.error_message);
      code = std::max(code, exit_code(*l.error));
    }
  }
  return code;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

int simulate(const Args& a) {
  sim::ScenarioConfig c = load(a);
  ensure_dir(a.out);
  Traces traces;
  std::ofstream* trace = a.trace ? traces.open(a.out, c.controller) : nullptr;
  c.solver.trace = trace;
  log_msg(Level::Info, std::string("running ") + sim::to_string(c.controller));
  const sim::SimLog l = sim::run_closed_loop(c, observe(c.controller, trace));
  const std::vector<sim::Metrics> ms{metrics_or_nan(l, c)};
  for (const fs::path& p : report::emit_report({l}, ms, c, a.out, a.plot)) log_msg(Level::Info, "wrote " + p.string());
  print_table(ms);
  return finish({l});
}

int compare(const Args& a) {
  const sim::ScenarioConfig c = load(a);
  ensure_dir(a.out);
  Traces traces;
  const sim::Comparison cmp = sim::run_comparison(c, [&](sim::ControllerKind kind, sim::ScenarioConfig& own) {
    std::ofstream* trace = a.trace ? traces.open(a.out, kind) : nullptr;
    own.solver.trace = trace;
    log_msg(Level::Info, std::string("running ") + sim::to_string(kind));
    return observe(kind, trace);
  });
  for (const fs::path& p : report::emit_report(cmp.logs, cmp.metrics, c, a.out, a.plot))
    log_msg(Level::Info, "wrote " + p.string());
  print_table(cmp.metrics);
  return finish(cmp.logs);
}

int run_checks(const std::vector<checks::CheckResult>& results) {
  bool ok = true;
  for (const checks::CheckResult& r : results) {
    std::printf("%s %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 3;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + p.string());
  log_msg(Level::Info, "wrote " + p.string());
}

// Rebuilds metrics.json and the plots from the CSVs of an earlier run.
int rebuild_report(const Args& a) {
  const sim::ScenarioConfig c = load(a);
  const fs::path in = a.input.empty() ? fs::path(a.out) : fs::path(a.input);
  std::vector<sim::SimLog> logs;
  for (sim::ControllerKind kind : {sim::ControllerKind::Rmpc, sim::ControllerKind::Passive,
                                   sim::ControllerKind::Active, sim::ControllerKind::SingleActive}) {
    const fs::path p = in / ("run_" + std::string(sim::to_string(kind)) + ".csv");
    if (!fs::exists(p)) continue;
    std::ifstream is(p);
    if (!is) throw Error(ErrorKind::IoError, "cannot read " + p.string());
    try {
      logs.push_back(report::read_csv(is, kind));
    } catch (const Error& e) {
      throw Error(e.kind(), p.string() + ": " + e.what());
    }
  }
  if (logs.empty()) throw Error(ErrorKind::IoError, "no run_<controller>.csv files in " + in.string());
  std::vector<sim::Metrics> ms;
  for (const sim::SimLog& l : logs) ms.push_back(metrics_or_nan(l, c));
  ensure_dir(a.out);
  write_text(fs::path(a.out) / "metrics.json", report::metrics_json(ms));
  for (report::Channel ch : {report::Channel::X1, report::Channel::X2, report::Channel::U})
    write_text(fs::path(a.out) / (std::string(report::to_string(ch)) + ".svg"), report::svg_plot(ch, logs, c));
  print_table(ms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual MPC with Gaussian-process residual learning"};
  app.require_subcommand(1);
  Args a;

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Closed-loop run of one controller");
  add_common(sim_cmd, a);
  add_run_flags(sim_cmd, a);
  sim_cmd->add_option("--controller", a.controller, "rmpc | passive | active | single (default: from config)");

  CLI::App* cmp_cmd = app.add_subcommand("compare", "All four controllers on the same scenario");
  add_common(cmp_cmd, a);
  add_run_flags(cmp_cmd, a);

  CLI::App* gp_cmd = app.add_subcommand("gp-check", "GP oracle suite");
  add_common(gp_cmd, a);
  CLI::App* solver_cmd = app.add_subcommand("solver-check", "QP/SQP smoke tests and OCP derivative checks");
  add_common(solver_cmd, a);

  CLI::App* rep_cmd = app.add_subcommand("report", "Rebuild metrics.json and plots from run CSVs");
  add_common(rep_cmd, a);
  rep_cmd->add_option("-i,--input", a.input, "Directory with run_<controller>.csv (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim_cmd) return simulate(a);
    if (*cmp_cmd) return compare(a);
    if (*gp_cmd) return run_checks(checks::gp_suite(load(a)));
    if (*solver_cmd) return run_checks(checks::solver_suite(load(a)));
    if (*rep_cmd) return rebuild_report(a);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
