#include "dualmpc/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "dualmpc/error.hpp"

namespace dualmpc::sim {

const char* to_string(ControllerKind c) {
  switch (c) {
    case ControllerKind::Rmpc: return "rmpc";
    case ControllerKind::Passive: return "passive";
    case ControllerKind::Active: return "active";
    case ControllerKind::SingleActive: return "single";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& s) {
  for (ControllerKind c : {ControllerKind::Rmpc, ControllerKind::Passive, ControllerKind::Active,
                           ControllerKind::SingleActive})
    if (s == to_string(c)) return c;
  throw Error(ErrorKind::ConfigError, "unknown controller '" + s + "' (rmpc|passive|active|single)");
}

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // Shortest text that reads back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(const Vector2d& v) { return fmt(v[0]) + ", " + fmt(v[1]); }

double to_double(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || std::isnan(v))
    throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

template <class Int>
Int to_int(const std::string& s) {
  Int v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

Vector2d to_vec2(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 2) throw std::invalid_argument("expected two comma-separated numbers");
  return {to_double(parts[0]), to_double(parts[1])};
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("expected true or false");
}

std::string fmt_setpoints(const std::vector<Setpoint>& sp) {
  std::string out;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (i) out += "; ";
    out += fmt(sp[i].time) + ": " + fmt(sp[i].x_ref);
  }
  return out;
}

std::vector<Setpoint> to_setpoints(const std::string& s) {
  std::vector<Setpoint> out;
  for (const std::string& item : split(s, ';')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("setpoint entries are 'time: x1, x2'");
    out.push_back({to_double(trim(item.substr(0, colon))), to_vec2(trim(item.substr(colon + 1)))});
  }
  return out;
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(ScenarioConfig&, const std::string&)> parse;
  std::function<std::string(const ScenarioConfig&)> format;
};

#define DOUBLE_KEY(sec, key, field)                                                   \
  Key {                                                                               \
    sec, key, [](ScenarioConfig& c, const std::string& v) { c.field = to_double(v); }, \
        [](const ScenarioConfig& c) { return fmt(c.field); }                          \
  }
#define VEC2_KEY(sec, key, field)                                                    \
  Key {                                                                              \
    sec, key, [](ScenarioConfig& c, const std::string& v) { c.field = to_vec2(v); }, \
        [](const ScenarioConfig& c) { return fmt(Vector2d(c.field)); }               \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      DOUBLE_KEY("plant", "mass", plant.mass),
      DOUBLE_KEY("plant", "damping", plant.damping),
      DOUBLE_KEY("plant", "spring", plant.spring),
      DOUBLE_KEY("plant", "sample_time", plant.sample_time),
      {"plant", "integrator",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "euler") c.integrator = model::Integrator::Euler;
         else if (v == "rk4") c.integrator = model::Integrator::Rk4;
         else throw std::invalid_argument("expected euler or rk4");
       },
       [](const ScenarioConfig& c) {
         return std::string(c.integrator == model::Integrator::Euler ? "euler" : "rk4");
       }},
      VEC2_KEY("plant", "noise_lower", noise_lower),
      VEC2_KEY("plant", "noise_upper", noise_upper),

      {"mpc", "horizon", [](ScenarioConfig& c, const std::string& v) { c.mpc.horizon = to_int<int>(v); },
       [](const ScenarioConfig& c) { return std::to_string(c.mpc.horizon); }},
      {"mpc", "Q",
       [](ScenarioConfig& c, const std::string& v) { c.mpc.Q = to_vec2(v).asDiagonal(); },
       [](const ScenarioConfig& c) { return fmt(Vector2d(c.mpc.Q.diagonal())); }},
      DOUBLE_KEY("mpc", "R", mpc.R),
      DOUBLE_KEY("mpc", "lambda", lambda),
      VEC2_KEY("mpc", "x_lower", mpc.X.lower),
      VEC2_KEY("mpc", "x_upper", mpc.X.upper),
      DOUBLE_KEY("mpc", "u_lower", mpc.U.lower[0]),
      DOUBLE_KEY("mpc", "u_upper", mpc.U.upper[0]),
      VEC2_KEY("mpc", "w_lower", mpc.W.lower),
      VEC2_KEY("mpc", "w_upper", mpc.W.upper),
      {"mpc", "tightening_gain",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "lqr") c.mpc.gain = ocp::TighteningGain::Lqr;
         else if (v == "zero") c.mpc.gain = ocp::TighteningGain::Zero;
         else throw std::invalid_argument("expected lqr or zero");
       },
       [](const ScenarioConfig& c) {
         return std::string(c.mpc.gain == ocp::TighteningGain::Lqr ? "lqr" : "zero");
       }},
      DOUBLE_KEY("mpc", "slack_penalty", mpc.slack_penalty),
      DOUBLE_KEY("mpc", "tightening_eps", mpc.tightening_eps),

      DOUBLE_KEY("gp", "sigma_f2", gp.hyper.sigma_f2),
      DOUBLE_KEY("gp", "length_scale", gp.hyper.length_scale),
      DOUBLE_KEY("gp", "sigma_v2", gp.hyper.sigma_v2),
      DOUBLE_KEY("gp", "jitter", gp.hyper.jitter),
      {"gp", "mode",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "exact") c.gp.mode = gp::GpMode::Exact;
         else if (v == "sparse") c.gp.mode = gp::GpMode::Sparse;
         else throw std::invalid_argument("expected exact or sparse");
       },
       [](const ScenarioConfig& c) { return std::string(c.gp.mode == gp::GpMode::Exact ? "exact" : "sparse"); }},
      {"gp", "inducing_points",
       [](ScenarioConfig& c, const std::string& v) { c.gp.inducing_points = to_int<int>(v); },
       [](const ScenarioConfig& c) { return std::to_string(c.gp.inducing_points); }},
      {"gp", "inducing",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "feature") c.gp.inducing = InducingRule::Feature;
         else if (v == "time") c.gp.inducing = InducingRule::Time;
         else throw std::invalid_argument("expected feature or time");
       },
       [](const ScenarioConfig& c) {
         return std::string(c.gp.inducing == InducingRule::Feature ? "feature" : "time");
       }},
      {"gp", "refit_every",
       [](ScenarioConfig& c, const std::string& v) { c.gp.refit_every = to_int<int>(v); },
       [](const ScenarioConfig& c) { return std::to_string(c.gp.refit_every); }},
      {"gp", "max_points",
       [](ScenarioConfig& c, const std::string& v) { c.gp.max_points = to_int<int>(v); },
       [](const ScenarioConfig& c) { return std::to_string(c.gp.max_points); }},
      DOUBLE_KEY("gp", "dedup_tol", gp.dedup_tol),

      DOUBLE_KEY("learning", "beta_bar", learning.beta_bar),
      DOUBLE_KEY("learning", "gamma_bar", learning.gamma_bar),
      DOUBLE_KEY("learning", "beta_max", learning.beta_max),
      DOUBLE_KEY("learning", "gamma_max", learning.gamma_max),

      DOUBLE_KEY("sim", "duration", duration),
      {"sim", "setpoints",
       [](ScenarioConfig& c, const std::string& v) { c.setpoints = to_setpoints(v); },
       [](const ScenarioConfig& c) { return fmt_setpoints(c.setpoints); }},
      VEC2_KEY("sim", "x0", x0),
      {"sim", "controller",
       [](ScenarioConfig& c, const std::string& v) { c.controller = parse_controller(v); },
       [](const ScenarioConfig& c) { return std::string(to_string(c.controller)); }},
      {"sim", "seed", [](ScenarioConfig& c, const std::string& v) { c.seed = to_int<std::uint64_t>(v); },
       [](const ScenarioConfig& c) { return std::to_string(c.seed); }},

      {"solver", "max_iterations",
       [](ScenarioConfig& c, const std::string& v) { c.solver.max_iterations = to_int<int>(v); },
       [](const ScenarioConfig& c) { return std::to_string(c.solver.max_iterations); }},
      DOUBLE_KEY("solver", "kkt_tolerance", solver.kkt_tolerance),
      DOUBLE_KEY("solver", "constraint_tolerance", solver.constraint_tolerance),
      {"solver", "hessian",
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "exact") c.solver.hessian = nlp::HessianMode::Exact;
         else if (v == "bfgs") c.solver.hessian = nlp::HessianMode::Bfgs;
         else throw std::invalid_argument("expected exact or bfgs");
       },
       [](const ScenarioConfig& c) {
         return std::string(c.solver.hessian == nlp::HessianMode::Exact ? "exact" : "bfgs");
       }},
      {"solver", "adaptive_damping",
       [](ScenarioConfig& c, const std::string& v) { c.solver.adaptive_damping = to_bool(v); },
       [](const ScenarioConfig& c) { return std::string(c.solver.adaptive_damping ? "true" : "false"); }},
  };
  return table;
}

#undef DOUBLE_KEY
#undef VEC2_KEY

const std::vector<std::string> kSections = {"plant", "mpc", "gp", "learning", "sim", "solver"};

}  // namespace

ScenarioConfig benchmark_config() { return ScenarioConfig{}; }

int ScenarioConfig::num_steps() const {
  return static_cast<int>(std::llround(duration / plant.sample_time));
}

Vector2d ScenarioConfig::setpoint(double t) const {
  Vector2d r = setpoints.front().x_ref;
  for (const Setpoint& s : setpoints)
    if (s.time <= t + 1e-9) r = s.x_ref;
  return r;
}

bool ScenarioConfig::has_noise() const { return (noise_upper - noise_lower).cwiseAbs().maxCoeff() > 0.0; }

void ScenarioConfig::validate() const {
  try {
    plant.validate();
  } catch (const Error& e) {
    config_error(std::string("plant: ") + e.what());
  }
  try {
    gp.hyper.validate();
  } catch (const Error& e) {
    config_error(std::string("gp: ") + e.what());
  }
  if (!(duration >= 0.0)) config_error("sim.duration must be >= 0");
  const double steps = duration / plant.sample_time;
  if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
    config_error("sim.duration must be a multiple of plant.sample_time");
  if (setpoints.empty()) config_error("sim.setpoints must not be empty");
  for (std::size_t i = 1; i < setpoints.size(); ++i)
    if (setpoints[i].time < setpoints[i - 1].time) config_error("sim.setpoints must be sorted by time");
  if (mpc.horizon < 1) config_error("mpc.horizon must be >= 1");
  if (!(mpc.R > 0.0)) config_error("mpc.R must be > 0");
  if ((mpc.Q.diagonal().array() < 0.0).any()) config_error("mpc.Q must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) config_error("mpc.lambda must lie in [0, 1]");
  if (mpc.X.empty()) config_error("mpc.x_lower/x_upper: empty state set");
  if (mpc.U.empty()) config_error("mpc.u_lower/u_upper: empty input set");
  if (mpc.W.empty()) config_error("mpc.w_lower/w_upper: empty disturbance set");
  if (!mpc.X.contains(x0)) config_error("sim.x0 must lie in the state set");
  if (!(mpc.slack_penalty > 0.0)) config_error("mpc.slack_penalty must be > 0");
  if (!(mpc.tightening_eps > 0.0)) config_error("mpc.tightening_eps must be > 0");
  if ((noise_upper.array() < noise_lower.array()).any()) config_error("plant.noise_lower must be <= noise_upper");
  if (gp.inducing_points < 1) config_error("gp.inducing_points must be >= 1");
  if (gp.refit_every < 1) config_error("gp.refit_every must be >= 1");
  if (gp.max_points < 0) config_error("gp.max_points must be >= 0");
  if (!(gp.dedup_tol >= 0.0)) config_error("gp.dedup_tol must be >= 0");
  if (learning.beta_bar < 0.0 || learning.gamma_bar < 0.0 || learning.beta_max < 0.0 || learning.gamma_max < 0.0)
    config_error("learning: parameters must be >= 0");
  if (solver.max_iterations < 1) config_error("solver.max_iterations must be >= 1");
  if (!(solver.kkt_tolerance > 0.0 && solver.constraint_tolerance > 0.0))
    config_error("solver: tolerances must be > 0");
}

ScenarioConfig parse_config(std::istream& is) {
  std::map<std::string, const Key*> lookup;
  for (const Key& k : keys()) lookup[k.section + "." + k.name] = &k;

  ScenarioConfig c;
  std::set<std::string> seen_sections;
  std::set<std::string> seen_keys;
  std::string section;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) { config_error("line " + std::to_string(lineno) + ": " + msg); };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end())
        fail("unknown section [" + section + "]");
      if (!seen_sections.insert(section).second) fail("duplicate section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of a section");
    const std::string name = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string path = section + "." + name;
    const auto it = lookup.find(path);
    if (it == lookup.end()) fail("unknown key " + path);
    if (!seen_keys.insert(path).second) fail("duplicate key " + path);
    try {
      it->second->parse(c, value);
    } catch (const Error& e) {
      fail(path + ": " + e.what());
    } catch (const std::exception& e) {
      fail(path + ": " + e.what());
    }
  }
  for (const std::string& s : kSections)
    if (!seen_sections.count(s)) config_error("missing section [" + s + "]: " + s);
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + path);
  try {
    return parse_config(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

void write_config(std::ostream& os, const ScenarioConfig& config) {
  std::string section;
  for (const Key& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) os << '\n';
      section = k.section;
      os << '[' << section << "]\n";
    }
    os << k.name << " = " << k.format(config) << '\n';
  }
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  auto same_box = [](const setops::BoxSet& x, const setops::BoxSet& y) {
    return x.lower == y.lower && x.upper == y.upper;
  };
  auto same_setpoints = [&] {
    if (a.setpoints.size() != b.setpoints.size()) return false;
    for (std::size_t i = 0; i < a.setpoints.size(); ++i)
      if (a.setpoints[i].time != b.setpoints[i].time || a.setpoints[i].x_ref != b.setpoints[i].x_ref) return false;
    return true;
  };
  const auto& pa = a.plant;
  const auto& pb = b.plant;
  const auto& ga = a.gp;
  const auto& gb = b.gp;
  return pa.mass == pb.mass && pa.damping == pb.damping && pa.spring == pb.spring &&
         pa.sample_time == pb.sample_time && a.integrator == b.integrator && a.noise_lower == b.noise_lower &&
         a.noise_upper == b.noise_upper && a.mpc.horizon == b.mpc.horizon && a.mpc.Q == b.mpc.Q &&
         a.mpc.R == b.mpc.R && same_box(a.mpc.X, b.mpc.X) && same_box(a.mpc.U, b.mpc.U) &&
         same_box(a.mpc.W, b.mpc.W) && a.mpc.gain == b.mpc.gain && a.mpc.slack_penalty == b.mpc.slack_penalty &&
         a.mpc.tightening_eps == b.mpc.tightening_eps && a.lambda == b.lambda &&
         ga.hyper.sigma_f2 == gb.hyper.sigma_f2 && ga.hyper.length_scale == gb.hyper.length_scale &&
         ga.hyper.sigma_v2 == gb.hyper.sigma_v2 && ga.hyper.jitter == gb.hyper.jitter && ga.mode == gb.mode &&
         ga.inducing_points == gb.inducing_points && ga.inducing == gb.inducing &&
         ga.refit_every == gb.refit_every && ga.max_points == gb.max_points && ga.dedup_tol == gb.dedup_tol &&
         a.learning.beta_bar == b.learning.beta_bar && a.learning.gamma_bar == b.learning.gamma_bar &&
         a.learning.beta_max == b.learning.beta_max && a.learning.gamma_max == b.learning.gamma_max &&
         a.duration == b.duration && same_setpoints() && a.x0 == b.x0 && a.controller == b.controller &&
         a.seed == b.seed && a.solver.max_iterations == b.solver.max_iterations &&
         a.solver.kkt_tolerance == b.solver.kkt_tolerance &&
         a.solver.constraint_tolerance == b.solver.constraint_tolerance && a.solver.hessian == b.solver.hessian &&
         a.solver.adaptive_damping == b.solver.adaptive_damping;
}

}  // namespace dualmpc::sim
