#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "dualmpc/error.hpp"
#include "dualmpc/report.hpp"

using namespace dualmpc;
using namespace dualmpc::report;
namespace fs = std::filesystem;
using Eigen::Vector2d;

namespace {

sim::SimLog fake_log(sim::ControllerKind kind, double level) {
  sim::SimLog log;
  log.controller = kind;
  for (int k = 0; k < 100; ++k) {
    sim::StepRecord r;
    r.k = k;
    r.t = 0.1 * k;
    r.x1 = level * (1.0 - std::exp(-0.5 * r.t));
    r.x2 = 0.5 * level * std::exp(-0.5 * r.t);
    r.u = -0.3 * r.x1;
    r.status = "optimal";
    r.solve_ms = 1.0 + k;
    r.J = 10.0 / (1.0 + k);
    r.Delta = k % 3 == 0 ? 0.25 : 0.0;
    r.Y = 1.0 / 3.0;
    r.gp_size = k;
    r.budget_max = std::numeric_limits<double>::infinity();
    r.fallback = k == 7;
    log.records.push_back(r);
  }
  log.final_state = Vector2d(level, 0.0);
  log.final_time = 10.0;
  return log;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualmpc_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Csv, HeaderIsFixedColumnOrder) {
  std::ostringstream os;
  write_csv(os, fake_log(sim::ControllerKind::Rmpc, 1.0));
  const std::string header = os.str().substr(0, os.str().find('\n'));
  EXPECT_EQ(header,
            "k,t,x1,x2,u,status,solve_ms,J,J_B,Delta,Y,H,gp_size,max_sigma_x,slack,assumption2,kkt,"
            "contingency_ok,cov_psd,budget_mean,budget_max,fallback");
}

TEST(Csv, RoundTripKeepsRecordsAndFinalState) {
  const sim::SimLog a = fake_log(sim::ControllerKind::Active, 0.97);
  std::ostringstream os;
  write_csv(os, a);
  std::istringstream is(os.str());
  const sim::SimLog b = read_csv(is, sim::ControllerKind::Active);
  ASSERT_EQ(b.records.size(), a.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(b.records[i].x1, a.records[i].x1);
    EXPECT_EQ(b.records[i].u, a.records[i].u);
    EXPECT_EQ(b.records[i].Y, a.records[i].Y);
    EXPECT_EQ(b.records[i].status, a.records[i].status);
    EXPECT_EQ(b.records[i].fallback, a.records[i].fallback);
    EXPECT_TRUE(std::isinf(b.records[i].budget_max));
  }
  EXPECT_EQ(b.final_state, a.final_state);
  EXPECT_EQ(b.final_time, a.final_time);
}

TEST(Csv, MalformedRowReportsLine) {
  std::ostringstream os;
  write_csv(os, fake_log(sim::ControllerKind::Rmpc, 1.0));
  std::string text = os.str();
  const auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
  text.insert(third + 1, "1,2,3\n");
  std::istringstream is(text);
  try {
    read_csv(is, sim::ControllerKind::Rmpc);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(MetricsJson, KeysAndNan) {
  sim::Metrics m;
  m.controller = "passive";
  m.e_ss_5s_pct = 0.17;
  m.e_ss_10s_pct = std::nan("");
  const auto j = nlohmann::json::parse(metrics_json({m}));
  ASSERT_TRUE(j.is_array());
  ASSERT_EQ(j.size(), 1u);
  for (const char* key : {"controller", "e_ss_5s_pct", "e_ss_10s_pct", "max_violation", "mean_solve_ms",
                          "max_solve_ms", "cum_J", "cum_Delta"})
    EXPECT_TRUE(j[0].contains(key)) << key;
  EXPECT_EQ(j[0].size(), 8u);
  EXPECT_EQ(j[0]["controller"], "passive");
  EXPECT_DOUBLE_EQ(j[0]["e_ss_5s_pct"].get<double>(), 0.17);
  EXPECT_TRUE(j[0]["e_ss_10s_pct"].is_null());
}

TEST(Svg, StateChannelHasSetpointAndUpperBound) {
  const sim::ScenarioConfig c = sim::benchmark_config();
  const std::string svg = svg_plot(Channel::X1, {fake_log(sim::ControllerKind::Rmpc, 0.97)}, c);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(svg.find("<script"), std::string::npos);
  EXPECT_EQ(svg.find(" onload"), std::string::npos);
  EXPECT_NE(svg.find("class=\"setpoint\""), std::string::npos);
  // Horizontal red dashed line at x1 = 1.1.
  const std::regex line("<line class=\"constraint\" x1=\"[^\"]+\" y1=\"([^\"]+)\" x2=\"[^\"]+\" y2=\"([^\"]+)\" "
                        "stroke=\"red\" stroke-dasharray=\"6,4\" data-value=\"1.1\"/>");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, line));
  EXPECT_EQ(m[1].str(), m[2].str());
}

TEST(Svg, OneSeriesPerLog) {
  const sim::ScenarioConfig c = sim::benchmark_config();
  const std::vector<sim::SimLog> logs = {fake_log(sim::ControllerKind::Rmpc, 0.97),
                                         fake_log(sim::ControllerKind::Passive, 1.0)};
  const std::string svg = svg_plot(Channel::U, logs, c);
  EXPECT_NE(svg.find("class=\"rmpc\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"passive\""), std::string::npos);
  EXPECT_EQ(svg.find("class=\"setpoint\""), std::string::npos);
}

TEST(Emit, ComparisonWritesEightFiles) {
  const fs::path dir = fresh_dir("emit");
  const sim::ScenarioConfig c = sim::benchmark_config();
  std::vector<sim::SimLog> logs;
  std::vector<sim::Metrics> ms;
  for (sim::ControllerKind k : {sim::ControllerKind::Rmpc, sim::ControllerKind::Passive, sim::ControllerKind::Active,
                                sim::ControllerKind::SingleActive}) {
    logs.push_back(fake_log(k, 1.0));
    ms.push_back(sim::compute_metrics(logs.back(), c));
  }
  const auto written = emit_report(logs, ms, c, dir, true);
  EXPECT_EQ(written.size(), 8u);
  for (const char* f : {"run_rmpc.csv", "run_passive.csv", "run_active.csv", "run_single.csv", "metrics.json",
                        "x1.svg", "x2.svg", "u.svg"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::ifstream js(dir / "metrics.json");
  EXPECT_EQ(nlohmann::json::parse(js).size(), 4u);
  fs::remove_all(dir);

  EXPECT_EQ(emit_report(logs, ms, c, dir, false).size(), 5u);
  fs::remove_all(dir);
}

TEST(Emit, EmptyLogListWritesNothing) {
  const fs::path dir = fresh_dir("empty");
  try {
    emit_report({}, {}, sim::benchmark_config(), dir, true);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Emit, UnwritableDirectoryNamesPath) {
  const fs::path file = fresh_dir("blocker");
  std::ofstream(file) << "x";
  try {
    emit_report({fake_log(sim::ControllerKind::Rmpc, 1.0)}, {}, sim::benchmark_config(), file / "sub", false);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
    EXPECT_NE(std::string(e.what()).find(file.string()), std::string::npos) << e.what();
  }
  fs::remove(file);
}
