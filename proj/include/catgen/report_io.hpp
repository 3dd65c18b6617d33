#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "catgen/config.hpp"
#include "catgen/data_model.hpp"
#include "catgen/simulation.hpp"
#include "catgen/smoother.hpp"

namespace catgen {

void write_text_file(const std::filesystem::path& path, const std::string& content);

// Stable, key-sorted dump (nlohmann objects iterate in key order).
std::string canonical_json(const nlohmann::json& j);
std::string config_hash(const nlohmann::json& effective_config);

void write_curve_csv(const std::filesystem::path& path, const CateCurve& curve);
nlohmann::json curve_to_json(const CateCurve& curve);

void write_pseudo_outcomes_csv(const std::filesystem::path& path, const PseudoOutcomes& pseudo);

nlohmann::json diagnostics_to_json(const DiagnosticsReport& report);

nlohmann::json simulation_report_to_json(const SimulationReport& report);
void write_simulation_report_csv(const std::filesystem::path& path,
                                 const SimulationReport& report);

void write_bandwidth_table_csv(const std::filesystem::path& path,
                               const BandwidthSelection& selection);

} // namespace catgen
