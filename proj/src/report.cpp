#include "dualmpc/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dualmpc/error.hpp"

namespace dualmpc::report {

namespace fs = std::filesystem;
using sim::SimLog;
using sim::StepRecord;

const char* to_string(Channel c) {
  switch (c) {
    case Channel::X1: return "x1";
    case Channel::X2: return "x2";
    case Channel::U: return "u";
  }
  return "?";
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_row(std::ostream& os, const StepRecord& r) {
  auto b = [](bool v) { return v ? "1" : "0"; };
  os << r.k << ',' << num(r.t) << ',' << num(r.x1) << ',' << num(r.x2) << ',' << num(r.u) << ',' << r.status
     << ',' << num(r.solve_ms) << ',' << num(r.J) << ',' << num(r.J_B) << ',' << num(r.Delta) << ',' << num(r.Y)
     << ',' << num(r.H) << ',' << r.gp_size << ',' << num(r.max_sigma_x) << ',' << num(r.slack) << ','
     << b(r.assumption2) << ',' << num(r.kkt) << ',' << b(r.contingency_ok) << ',' << b(r.cov_psd) << ','
     << num(r.budget_mean) << ',' << num(r.budget_max) << ',' << b(r.fallback) << '\n';
}

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

const char* color_of(sim::ControllerKind c) {
  switch (c) {
    case sim::ControllerKind::Rmpc: return "#1f77b4";
    case sim::ControllerKind::Passive: return "#ff7f0e";
    case sim::ControllerKind::Active: return "#2ca02c";
    case sim::ControllerKind::SingleActive: return "#9467bd";
  }
  return "#000000";
}

Series series_of(Channel channel, const SimLog& log) {
  Series s{sim::to_string(log.controller), color_of(log.controller), {}};
  for (const StepRecord& r : log.records) {
    const double v = channel == Channel::X1 ? r.x1 : channel == Channel::X2 ? r.x2 : r.u;
    s.points.emplace_back(r.t, v);
  }
  if (channel != Channel::U && !log.records.empty() && log.final_time > log.records.back().t)
    s.points.emplace_back(log.final_time, log.final_state[channel == Channel::X1 ? 0 : 1]);
  return s;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace

void write_csv(std::ostream& os, const SimLog& log) {
  const auto& cols = sim::csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const StepRecord& r : log.records) write_row(os, r);
  if (!log.records.empty()) {
    StepRecord last;
    last.k = log.records.back().k + 1;
    last.t = log.final_time;
    last.x1 = log.final_state[0];
    last.x2 = log.final_state[1];
    last.status = "final";
    last.gp_size = static_cast<int>(log.dataset.size());
    write_row(os, last);
  }
}

SimLog read_csv(std::istream& is, sim::ControllerKind controller) {
  SimLog log;
  log.controller = controller;
  std::string line;
  int lineno = 1;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(is, line)) fail("missing header");
  const auto& cols = sim::csv_columns();
  if (split(line) != cols) fail("unexpected header");
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line);
    if (f.size() != cols.size()) fail("expected " + std::to_string(cols.size()) + " fields");
    StepRecord r;
    try {
      std::size_t i = 0;
      auto d = [&] { return std::stod(f[i++]); };
      auto n = [&] { return std::stoi(f[i++]); };
      auto b = [&] { return f[i++] == "1"; };
      r.k = n();
      r.t = d();
      r.x1 = d();
      r.x2 = d();
      r.u = d();
      r.status = f[i++];
      r.solve_ms = d();
      r.J = d();
      r.J_B = d();
      r.Delta = d();
      r.Y = d();
      r.H = d();
      r.gp_size = n();
      r.max_sigma_x = d();
      r.slack = d();
      r.assumption2 = b();
      r.kkt = d();
      r.contingency_ok = b();
      r.cov_psd = b();
      r.budget_mean = d();
      r.budget_max = d();
      r.fallback = b();
    } catch (const std::exception&) {
      fail("malformed number");
    }
    if (r.status == "final") {
      log.final_state = Eigen::Vector2d(r.x1, r.x2);
      log.final_time = r.t;
    } else {
      log.records.push_back(r);
      log.final_state = Eigen::Vector2d(r.x1, r.x2);
      log.final_time = r.t;
    }
  }
  return log;
}

std::string metrics_json(const std::vector<sim::Metrics>& metrics) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const sim::Metrics& m : metrics) {
    nlohmann::ordered_json o;
    o["controller"] = m.controller;
    o["e_ss_5s_pct"] = m.e_ss_5s_pct;
    o["e_ss_10s_pct"] = m.e_ss_10s_pct;
    o["max_violation"] = m.max_violation;
    o["mean_solve_ms"] = m.mean_solve_ms;
    o["max_solve_ms"] = m.max_solve_ms;
    o["cum_J"] = m.cum_J;
    o["cum_Delta"] = m.cum_Delta;
    arr.push_back(o);
  }
  return arr.dump(2) + "\n";
}

std::string svg_plot(Channel channel, const std::vector<SimLog>& logs, const sim::ScenarioConfig& config) {
  constexpr double W = 760.0;
  constexpr double H = 380.0;
  constexpr double left = 70.0;
  constexpr double right = 150.0;
  constexpr double top = 30.0;
  constexpr double bottom = 50.0;

  std::vector<Series> series;
  for (const SimLog& log : logs) series.push_back(series_of(channel, log));

  // Setpoint as a staircase over the run, for the state channels.
  std::vector<std::pair<double, double>> setpoint;
  if (channel != Channel::U) {
    const int j = channel == Channel::X1 ? 0 : 1;
    for (std::size_t i = 0; i < config.setpoints.size(); ++i) {
      const double t0 = std::min(config.setpoints[i].time, config.duration);
      const double t1 = i + 1 < config.setpoints.size() ? std::min(config.setpoints[i + 1].time, config.duration)
                                                        : config.duration;
      setpoint.emplace_back(t0, config.setpoints[i].x_ref[j]);
      setpoint.emplace_back(t1, config.setpoints[i].x_ref[j]);
    }
  }
  std::vector<double> bounds;
  if (channel == Channel::U) {
    bounds = {config.mpc.U.lower[0], config.mpc.U.upper[0]};
  } else {
    const int j = channel == Channel::X1 ? 0 : 1;
    bounds = {config.mpc.X.lower[j], config.mpc.X.upper[j]};
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Series& s : series)
    for (const auto& p : s.points) {
      lo = std::min(lo, p.second);
      hi = std::max(hi, p.second);
    }
  for (const auto& p : setpoint) {
    lo = std::min(lo, p.second);
    hi = std::max(hi, p.second);
  }
  // Position bounds are always shown; velocity bounds only when the data comes near them.
  for (double b : bounds) {
    if (channel == Channel::X2 && std::isfinite(lo) && (b < lo - 0.5 * (hi - lo) || b > hi + 0.5 * (hi - lo)))
      continue;
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  if (!std::isfinite(lo)) lo = -1.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double t_end = std::max(config.duration, 1e-9);

  auto px = [&](double t) { return left + (W - left - right) * t / t_end; };
  auto py = [&](double v) { return top + (H - top - bottom) * (hi - v) / (hi - lo); };
  auto polyline = [&](const std::vector<std::pair<double, double>>& pts) {
    std::string s;
    for (const auto& p : pts) s += short_num(px(p.first)) + "," + short_num(py(p.second)) + " ";
    if (!s.empty()) s.pop_back();
    return s;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right << "\" height=\""
     << H - top - bottom << "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (int i = 0; i <= 10; ++i) {
    const double t = t_end * i / 10.0;
    os << "<line x1=\"" << short_num(px(t)) << "\" y1=\"" << H - bottom << "\" x2=\"" << short_num(px(t))
       << "\" y2=\"" << H - bottom + 5 << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << short_num(px(t)) << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">"
       << short_num(t) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double v = lo + (hi - lo) * i / 5.0;
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << short_num(py(v)) << "\" x2=\"" << left << "\" y2=\""
       << short_num(py(v)) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << short_num(py(v) + 4) << "\" text-anchor=\"end\">"
       << short_num(v) << "</text>\n";
  }
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">t [s]</text>\n";
  os << "<text x=\"18\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (top + H - bottom) / 2 << ")\">" << to_string(channel) << "</text>\n";

  for (double b : bounds) {
    if (b < lo || b > hi) continue;
    os << "<line class=\"constraint\" x1=\"" << short_num(px(0.0)) << "\" y1=\"" << short_num(py(b)) << "\" x2=\""
       << short_num(px(t_end)) << "\" y2=\"" << short_num(py(b))
       << "\" stroke=\"red\" stroke-dasharray=\"6,4\" data-value=\"" << label_num(b) << "\"/>\n";
  }
  if (!setpoint.empty())
    os << "<polyline class=\"setpoint\" points=\"" << polyline(setpoint)
       << "\" fill=\"none\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  for (const Series& s : series)
    os << "<polyline class=\"" << s.name << "\" points=\"" << polyline(s.points) << "\" fill=\"none\" stroke=\""
       << s.color << "\" stroke-width=\"1.5\"/>\n";

  double ly = top + 10.0;
  const double lx = W - right + 15.0;
  for (const Series& s : series) {
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 20 << "\" y2=\"" << ly << "\" stroke=\""
       << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 26 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
    ly += 18.0;
  }
  if (!setpoint.empty()) {
    os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 20 << "\" y2=\"" << ly
       << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    os << "<text x=\"" << lx + 26 << "\" y=\"" << ly + 4 << "\">setpoint</text>\n";
    ly += 18.0;
  }
  os << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 20 << "\" y2=\"" << ly
     << "\" stroke=\"red\" stroke-dasharray=\"6,4\"/>\n";
  os << "<text x=\"" << lx + 26 << "\" y=\"" << ly + 4 << "\">constraint</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::vector<fs::path> emit_report(const std::vector<SimLog>& logs, const std::vector<sim::Metrics>& metrics,
                                  const sim::ScenarioConfig& config, const fs::path& out_dir, bool plot) {
  if (logs.empty()) throw Error(ErrorKind::InvalidArgument, "emit_report: no logs to report");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  for (const SimLog& log : logs) {
    std::ostringstream os;
    write_csv(os, log);
    const fs::path p = out_dir / ("run_" + std::string(sim::to_string(log.controller)) + ".csv");
    write_file(p, os.str());
    written.push_back(p);
  }
  const fs::path mp = out_dir / "metrics.json";
  write_file(mp, metrics_json(metrics));
  written.push_back(mp);
  if (plot) {
    for (Channel c : {Channel::X1, Channel::X2, Channel::U}) {
      const fs::path p = out_dir / (std::string(to_string(c)) + ".svg");
      write_file(p, svg_plot(c, logs, config));
      written.push_back(p);
    }
  }
  return written;
}

}  // namespace dualmpc::report
