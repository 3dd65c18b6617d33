#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>

#include <json.hpp>

#include "catgen/crossfit.hpp"
#include "catgen/data_model.hpp"
#include "catgen/simulation.hpp"
#include "catgen/smoother.hpp"

namespace catgen {

struct DataConfig {
    std::filesystem::path path;
    SchemaConfig schema;
};

struct SmootherGridConfig {
    int points = 41;
    double central_mass = 0.90;                      // used when range is empty
    std::optional<std::pair<double, double>> range;  // explicit [lo, hi]
};

struct SmootherConfig {
    BandwidthSpec bandwidth;
    SmootherGridConfig grid;
};

struct SimulationConfig {
    std::vector<OutcomeKind> outcome_kinds{OutcomeKind::Binary};
    std::vector<int> n_list{2500};
    std::vector<int> n_s1_list{1000};
    int replicates = 500;
    double noise_sd = 1.0;
    std::array<double, 3> selection_slopes{0.6, -0.3, 0.6};
    std::array<double, 3> tau_coefficients{1.0, 1.0, -0.5};
    std::array<bool, kEstimatorCount> estimators{true, true, false, false};
    std::int64_t truth_mc_size = 10000000;
    double trim_fraction = 0.05;
    bool exact_trial_size = false;
    bool dump_replicate_curves = false;
    int grid_points = 41;
    double grid_central = 0.90;
};

struct OutputConfig {
    std::filesystem::path dir = "out";
    bool csv = true;
    bool json = true;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::optional<DataConfig> data;
    CrossfitConfig nuisance;
    SmootherConfig smoother;
    std::optional<SimulationConfig> simulation;
    OutputConfig output;
};

// Strict parse: unknown keys anywhere are a ConfigError. Relative data paths
// resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& j,
                           const std::filesystem::path& base_dir = ".");

// Canonical JSON with all defaults materialized; hashed into the manifest.
nlohmann::json effective_config_json(const RunConfig& config);

// Scenario matrix {outcome_kind} x {n} x {n_s1} expanded from the config.
SimulationPlan build_simulation_plan(const RunConfig& config);

} // namespace catgen
