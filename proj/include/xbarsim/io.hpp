#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "xbarsim/protocol.hpp"

namespace xbarsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decimal text with 15 significant digits; value-for-value stable so
/// emitted files are byte-identical across re-runs.
std::string format_number(double value);

/// Strict JSON configuration: unknown keys are rejected with their
/// path, omitted keys take the documented defaults, and the resulting
/// configuration is cross-validated. Throws ConfigError.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

/// Fully resolved configuration, parseable back into an identical
/// RunConfig.
std::string config_to_json(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::filesystem::path& path);

std::vector<std::string> validate(const RunConfig& cfg);

/// Long-form sweep table CSV. Scenario rows carry metrics; margin rows
/// print "margin" in the scenario column and only the margin value.
void emit_table(const SweepTable& table, std::ostream& os);
void emit_table(const SweepTable& table, const std::filesystem::path& path);

/// Long-form grid CSV (i,j,value) with 1-based indices.
void emit_map(const Grid& grid, std::ostream& os);
void emit_map(const Grid& grid, const std::filesystem::path& path);

/// One-row CSV with the read metrics and solver diagnostics of a
/// single solve.
void emit_run_summary(const ReadMetrics& metrics, const SolveResult& solve,
                      std::ostream& os);
void emit_run_summary(const ReadMetrics& metrics, const SolveResult& solve,
                      const std::filesystem::path& path);

}  // namespace xbarsim
