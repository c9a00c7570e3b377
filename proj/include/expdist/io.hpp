#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "expdist/diagnostics.hpp"
#include "expdist/solver.hpp"

namespace expdist {

using json = nlohmann::json;

// Schema violation in an input document; path is a JSON pointer to the
// offending value.
class SchemaError : public ConfigError {
public:
    SchemaError(std::string path, const std::string& message)
        : ConfigError(path + ": " + message), path_(std::move(path)) {}
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Shortest decimal form that parses back to the same double.
[[nodiscard]] std::string format_double(double x);

// Serialized form of every artifact, stable across runs.
[[nodiscard]] std::string dump_json(const json& doc);
[[nodiscard]] json parse_json(const std::string& text);
[[nodiscard]] json read_json_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Field dump: {grid: {nx, ny, spacing, domain, delta?}, nodes, boundary_mask, metadata}.
[[nodiscard]] json field_to_json(const MapField& map, const json& metadata = json::object());
struct LoadedField {
    MapField map;
    json metadata;
};
[[nodiscard]] LoadedField field_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json config_to_json(const SolveConfig& config);
// Missing keys take their defaults; unknown keys and bad values raise SchemaError.
[[nodiscard]] SolveConfig config_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json diagnostics_to_json(const DiagnosticOptions& options);
[[nodiscard]] DiagnosticOptions diagnostics_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json to_json(const EnergyReport& report);
[[nodiscard]] EnergyReport energy_report_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json to_json(const TraceEntry& entry);
[[nodiscard]] TraceEntry trace_entry_from_json(const json& doc, const std::string& path = "");

// Solve artifact; the config and rng_seed are recorded alongside the map.
[[nodiscard]] json solve_result_to_json(const SolveResult& result, const SolveConfig& config);
struct LoadedSolve {
    SolveResult result;
    SolveConfig config;
};
[[nodiscard]] LoadedSolve solve_result_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json sweep_result_to_json(const SweepResult& sweep, const SolveConfig& config);

[[nodiscard]] json to_json(const ResidualBundle& bundle);
[[nodiscard]] ResidualBundle residual_bundle_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json to_json(const QuadDifferentialField& field);
[[nodiscard]] QuadDifferentialField quad_field_from_json(const json& doc, const std::string& path = "");

[[nodiscard]] json to_json(const std::vector<HamiltonEntry>& entries);

// CSV with a header row; doubles in shortest round-trip form.
[[nodiscard]] std::string trace_csv(const std::vector<TraceEntry>& trace);
[[nodiscard]] std::string history_csv(const std::vector<IterationRecord>& history);
[[nodiscard]] std::string per_element_csv(const MapField& map);

}  // namespace expdist
