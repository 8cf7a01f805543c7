#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dualmpc/config.hpp"
#include "dualmpc/sim.hpp"

namespace dualmpc::report {

enum class Channel { X1, X2, U };

const char* to_string(Channel c);

/// Header from sim::csv_columns(), one row per step, then a closing row with
/// status "final" that carries the state at the end of the run.
void write_csv(std::ostream& os, const sim::SimLog& log);

/// Inverse of write_csv up to the fields the CSV carries. Throws ConfigError
/// with the line number on malformed input.
sim::SimLog read_csv(std::istream& is, sim::ControllerKind controller);

/// Array of objects with the keys controller, e_ss_5s_pct, e_ss_10s_pct,
/// max_violation, mean_solve_ms, max_solve_ms, cum_J, cum_Delta.
std::string metrics_json(const std::vector<sim::Metrics>& metrics);

/// Static SVG of one channel for every log, with the setpoint as a black
/// dashed line and the constraint bounds as red dashed lines.
std::string svg_plot(Channel channel, const std::vector<sim::SimLog>& logs, const sim::ScenarioConfig& config);

/// Writes run_<controller>.csv per log, metrics.json and, with `plot`,
/// x1.svg, x2.svg and u.svg into `out_dir` (created if needed). Returns the
/// written paths. An empty log list is an InvalidArgument error and writes
/// nothing; file failures are IoError naming the path.
std::vector<std::filesystem::path> emit_report(const std::vector<sim::SimLog>& logs,
                                               const std::vector<sim::Metrics>& metrics,
                                               const sim::ScenarioConfig& config,
                                               const std::filesystem::path& out_dir, bool plot);

}  // namespace dualmpc::report
