#include "catgen/config.hpp"

#include <fstream>
#include <set>

namespace catgen {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
T get_field(const json& j, const std::string& where, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

std::array<double, 3> get_triple(const json& j, const std::string& where, const char* key,
                                 const std::array<double, 3>& fallback) {
    if (!j.contains(key)) return fallback;
    auto vec = get_field<std::vector<double>>(j, where, key, {});
    if (vec.size() != 3) throw ConfigError(where + "." + key + ": expected exactly 3 numbers");
    return {vec[0], vec[1], vec[2]};
}

SchemaConfig parse_schema(const json& j) {
    reject_unknown_keys(j, "data.schema",
                        {"s", "a", "y", "covariates", "effect_modifier", "outcome_kind"});
    SchemaConfig schema;
    schema.s_column = get_field<std::string>(j, "data.schema", "s", "s");
    schema.a_column = get_field<std::string>(j, "data.schema", "a", "a");
    schema.y_column = get_field<std::string>(j, "data.schema", "y", "y");
    schema.covariate_columns =
        get_field<std::vector<std::string>>(j, "data.schema", "covariates", {});
    if (!j.contains("effect_modifier"))
        throw ConfigError("data.schema: effect_modifier is required");
    schema.effect_modifier = j.at("effect_modifier").get<std::string>();
    schema.outcome_kind = outcome_kind_from_string(
        get_field<std::string>(j, "data.schema", "outcome_kind", "continuous"));
    schema.validate();
    return schema;
}

DataConfig parse_data(const json& j, const std::filesystem::path& base_dir) {
    reject_unknown_keys(j, "data", {"path", "schema", "lenient"});
    if (!j.contains("path")) throw ConfigError("data: path is required");
    if (!j.contains("schema")) throw ConfigError("data: schema is required");
    DataConfig data;
    std::filesystem::path p = j.at("path").get<std::string>();
    data.path = p.is_absolute() ? p : base_dir / p;
    data.schema = parse_schema(j.at("schema"));
    data.schema.lenient = get_field<bool>(j, "data", "lenient", false);
    return data;
}

CrossfitConfig parse_nuisance(const json& j) {
    reject_unknown_keys(j, "nuisance",
                        {"library", "folds", "clip_epsilon", "treatment_probability",
                         "super_learner_folds", "super_learner_loss", "stratify_folds_by_s"});
    CrossfitConfig cfg;
    if (j.contains("library")) {
        if (!j.at("library").is_array()) throw ConfigError("nuisance.library: expected an array");
        cfg.library.clear();
        for (const auto& spec : j.at("library")) cfg.library.push_back(LearnerSpec::from_json(spec));
    } else {
        cfg.library = {LearnerSpec{LearnerKind::GlmMainEffects},
                       LearnerSpec{LearnerKind::GlmPairwiseInteractions},
                       LearnerSpec{LearnerKind::RidgePoly2},
                       LearnerSpec{LearnerKind::BoostedStumps},
                       LearnerSpec{LearnerKind::RandomForest}};
    }
    cfg.n_folds = get_field<int>(j, "nuisance", "folds", 5);
    cfg.clip_epsilon = get_field<double>(j, "nuisance", "clip_epsilon", 0.01);
    if (j.contains("treatment_probability")) {
        const auto& t = j.at("treatment_probability");
        if (t.is_string()) {
            if (t.get<std::string>() != "fit")
                throw ConfigError("nuisance.treatment_probability: expected a number or \"fit\"");
            cfg.known_treatment_probability.reset();
        } else if (t.is_number()) {
            cfg.known_treatment_probability = t.get<double>();
        } else {
            throw ConfigError("nuisance.treatment_probability: expected a number or \"fit\"");
        }
    }
    cfg.super_learner_folds = get_field<int>(j, "nuisance", "super_learner_folds", 5);
    std::string loss = get_field<std::string>(j, "nuisance", "super_learner_loss", "squared");
    if (loss == "squared")
        cfg.super_learner_loss = WeightLoss::Squared;
    else if (loss == "log_loss")
        cfg.super_learner_loss = WeightLoss::LogLoss;
    else
        throw ConfigError("nuisance.super_learner_loss: expected squared|log_loss");
    cfg.stratify_folds_by_s = get_field<bool>(j, "nuisance", "stratify_folds_by_s", false);
    cfg.validate();
    return cfg;
}

SmootherConfig parse_smoother(const json& j) {
    reject_unknown_keys(j, "smoother", {"kernel", "bandwidth", "grid"});
    SmootherConfig cfg;
    std::string kernel = get_field<std::string>(j, "smoother", "kernel", "epanechnikov");
    if (kernel != "epanechnikov")
        throw ConfigError("smoother.kernel: only 'epanechnikov' is available");
    if (j.contains("bandwidth")) {
        const auto& b = j.at("bandwidth");
        reject_unknown_keys(b, "smoother.bandwidth", {"mode", "h", "grid", "folds"});
        std::string mode = get_field<std::string>(b, "smoother.bandwidth", "mode", "cv");
        if (mode == "fixed") {
            cfg.bandwidth.mode = BandwidthSpec::Mode::Fixed;
            if (!b.contains("h")) throw ConfigError("smoother.bandwidth: fixed mode requires h");
            cfg.bandwidth.fixed_h = b.at("h").get<double>();
        } else if (mode == "cv") {
            cfg.bandwidth.mode = BandwidthSpec::Mode::Cv;
            cfg.bandwidth.cv_folds = get_field<int>(b, "smoother.bandwidth", "folds", 5);
            if (b.contains("grid") && !b.at("grid").is_string())
                cfg.bandwidth.cv_grid = b.at("grid").get<std::vector<double>>();
            else if (b.contains("grid") && b.at("grid").get<std::string>() != "auto")
                throw ConfigError("smoother.bandwidth.grid: expected \"auto\" or an array");
        } else {
            throw ConfigError("smoother.bandwidth.mode: expected fixed|cv");
        }
    }
    cfg.bandwidth.validate();
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        reject_unknown_keys(g, "smoother.grid", {"points", "range"});
        cfg.grid.points = get_field<int>(g, "smoother.grid", "points", 41);
        if (cfg.grid.points < 2) throw ConfigError("smoother.grid.points: must be >= 2");
        if (g.contains("range")) {
            const auto& r = g.at("range");
            if (r.is_string()) {
                if (r.get<std::string>() != "central90")
                    throw ConfigError("smoother.grid.range: expected \"central90\" or [lo, hi]");
            } else {
                auto vec = r.get<std::vector<double>>();
                if (vec.size() != 2 || !(vec[0] < vec[1]))
                    throw ConfigError("smoother.grid.range: expected [lo, hi] with lo < hi");
                cfg.grid.range = {vec[0], vec[1]};
            }
        }
    }
    return cfg;
}

SimulationConfig parse_simulation(const json& j) {
    reject_unknown_keys(j, "simulation",
                        {"outcome_kind", "n", "n_s1", "replicates", "noise_sd",
                         "selection_slopes", "tau_coefficients", "estimators", "truth_mc_size",
                         "trim_fraction", "exact_trial_size", "dump_replicate_curves",
                         "grid_points", "grid_central"});
    SimulationConfig cfg;

    auto as_list = [&](const char* key, auto parse_one) {
        using T = decltype(parse_one(json{}));
        std::vector<T> out;
        if (!j.contains(key)) return out;
        const auto& node = j.at(key);
        if (node.is_array())
            for (const auto& item : node) out.push_back(parse_one(item));
        else
            out.push_back(parse_one(node));
        return out;
    };

    auto kinds = as_list("outcome_kind", [](const json& item) {
        return outcome_kind_from_string(item.get<std::string>());
    });
    if (!kinds.empty()) cfg.outcome_kinds = kinds;
    auto ns = as_list("n", [](const json& item) { return item.get<int>(); });
    if (!ns.empty()) cfg.n_list = ns;
    auto ns1 = as_list("n_s1", [](const json& item) { return item.get<int>(); });
    if (!ns1.empty()) cfg.n_s1_list = ns1;

    cfg.replicates = get_field<int>(j, "simulation", "replicates", 500);
    if (cfg.replicates < 1) throw ConfigError("simulation.replicates: must be >= 1");
    cfg.noise_sd = get_field<double>(j, "simulation", "noise_sd", 1.0);
    cfg.selection_slopes = get_triple(j, "simulation", "selection_slopes", cfg.selection_slopes);
    cfg.tau_coefficients = get_triple(j, "simulation", "tau_coefficients", cfg.tau_coefficients);
    if (j.contains("estimators")) {
        cfg.estimators = {false, false, false, false};
        for (const auto& e : j.at("estimators"))
            cfg.estimators[static_cast<int>(estimator_kind_from_string(e.get<std::string>()))] =
                true;
    }
    cfg.truth_mc_size = get_field<std::int64_t>(j, "simulation", "truth_mc_size", 10000000);
    cfg.trim_fraction = get_field<double>(j, "simulation", "trim_fraction", 0.05);
    cfg.exact_trial_size = get_field<bool>(j, "simulation", "exact_trial_size", false);
    cfg.dump_replicate_curves = get_field<bool>(j, "simulation", "dump_replicate_curves", false);
    cfg.grid_points = get_field<int>(j, "simulation", "grid_points", 41);
    cfg.grid_central = get_field<double>(j, "simulation", "grid_central", 0.90);
    return cfg;
}

OutputConfig parse_output(const json& j) {
    reject_unknown_keys(j, "output", {"dir", "formats"});
    OutputConfig cfg;
    if (j.contains("dir")) cfg.dir = j.at("dir").get<std::string>();
    if (j.contains("formats")) {
        cfg.csv = cfg.json = false;
        for (const auto& f : j.at("formats")) {
            std::string token = f.get<std::string>();
            if (token == "csv")
                cfg.csv = true;
            else if (token == "json")
                cfg.json = true;
            else
                throw ConfigError("output.formats: expected csv|json, got '" + token + "'");
        }
        if (!cfg.csv && !cfg.json) throw ConfigError("output.formats: empty");
    }
    return cfg;
}

} // namespace

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    reject_unknown_keys(j, "config",
                        {"seed", "data", "nuisance", "smoother", "simulation", "output"});
    RunConfig cfg;
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw ConfigError("seed: expected a non-negative integer");
        auto s = j.at("seed").get<std::int64_t>();
        if (s < 0) throw ConfigError("seed: expected a non-negative integer");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (j.contains("data")) cfg.data = parse_data(j.at("data"), base_dir);
    if (j.contains("nuisance"))
        cfg.nuisance = parse_nuisance(j.at("nuisance"));
    else
        cfg.nuisance = parse_nuisance(nlohmann::json::object());
    if (j.contains("smoother"))
        cfg.smoother = parse_smoother(j.at("smoother"));
    if (j.contains("simulation")) cfg.simulation = parse_simulation(j.at("simulation"));
    if (j.contains("output")) cfg.output = parse_output(j.at("output"));
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

nlohmann::json effective_config_json(const RunConfig& config) {
    nlohmann::json j;
    j["seed"] = config.seed;

    if (config.data) {
        nlohmann::json schema{
            {"s", config.data->schema.s_column},
            {"a", config.data->schema.a_column},
            {"y", config.data->schema.y_column},
            {"covariates", config.data->schema.covariate_columns},
            {"effect_modifier", config.data->schema.effect_modifier},
            {"outcome_kind", to_string(config.data->schema.outcome_kind)},
        };
        j["data"] = {{"path", config.data->path.string()},
                     {"schema", schema},
                     {"lenient", config.data->schema.lenient}};
    }

    nlohmann::json lib = nlohmann::json::array();
    for (const auto& spec : config.nuisance.library) lib.push_back(spec.to_json());
    j["nuisance"] = {
        {"library", lib},
        {"folds", config.nuisance.n_folds},
        {"clip_epsilon", config.nuisance.clip_epsilon},
        {"treatment_probability", config.nuisance.known_treatment_probability
                                      ? nlohmann::json(*config.nuisance.known_treatment_probability)
                                      : nlohmann::json("fit")},
        {"super_learner_folds", config.nuisance.super_learner_folds},
        {"super_learner_loss",
         config.nuisance.super_learner_loss == WeightLoss::Squared ? "squared" : "log_loss"},
        {"stratify_folds_by_s", config.nuisance.stratify_folds_by_s},
    };

    nlohmann::json bw;
    if (config.smoother.bandwidth.mode == BandwidthSpec::Mode::Fixed) {
        bw = {{"mode", "fixed"}, {"h", config.smoother.bandwidth.fixed_h}};
    } else {
        bw = {{"mode", "cv"}, {"folds", config.smoother.bandwidth.cv_folds}};
        if (config.smoother.bandwidth.cv_grid.empty())
            bw["grid"] = "auto";
        else
            bw["grid"] = config.smoother.bandwidth.cv_grid;
    }
    nlohmann::json grid{{"points", config.smoother.grid.points}};
    if (config.smoother.grid.range)
        grid["range"] = {config.smoother.grid.range->first, config.smoother.grid.range->second};
    else
        grid["range"] = "central90";
    j["smoother"] = {{"kernel", "epanechnikov"}, {"bandwidth", bw}, {"grid", grid}};

    if (config.simulation) {
        const auto& sim = *config.simulation;
        nlohmann::json kinds = nlohmann::json::array();
        for (auto k : sim.outcome_kinds) kinds.push_back(to_string(k));
        nlohmann::json estimators = nlohmann::json::array();
        for (int e = 0; e < kEstimatorCount; ++e)
            if (sim.estimators[e]) estimators.push_back(to_string(static_cast<EstimatorKind>(e)));
        j["simulation"] = {
            {"outcome_kind", kinds},
            {"n", sim.n_list},
            {"n_s1", sim.n_s1_list},
            {"replicates", sim.replicates},
            {"noise_sd", sim.noise_sd},
            {"selection_slopes", sim.selection_slopes},
            {"tau_coefficients", sim.tau_coefficients},
            {"estimators", estimators},
            {"truth_mc_size", sim.truth_mc_size},
            {"trim_fraction", sim.trim_fraction},
            {"exact_trial_size", sim.exact_trial_size},
            {"dump_replicate_curves", sim.dump_replicate_curves},
            {"grid_points", sim.grid_points},
            {"grid_central", sim.grid_central},
        };
    }

    j["output"] = {{"dir", config.output.dir.string()},
                   {"formats", [&] {
                        std::vector<std::string> fmts;
                        if (config.output.csv) fmts.push_back("csv");
                        if (config.output.json) fmts.push_back("json");
                        return fmts;
                    }()}};
    return j;
}

SimulationPlan build_simulation_plan(const RunConfig& config) {
    if (!config.simulation) throw ConfigError("simulate: config has no 'simulation' section");
    const SimulationConfig& sim = *config.simulation;

    SimulationPlan plan;
    plan.seed = config.seed;
    plan.estimators = sim.estimators;
    plan.pipeline.crossfit = config.nuisance;
    plan.pipeline.bandwidth = config.smoother.bandwidth;
    plan.grid_points = sim.grid_points;
    plan.grid_central = sim.grid_central;
    plan.trim_fraction = sim.trim_fraction;
    plan.truth_mc_size = sim.truth_mc_size;
    if (sim.dump_replicate_curves) plan.dump_replicates_dir = config.output.dir / "replicates";

    for (OutcomeKind kind : sim.outcome_kinds)
        for (int n : sim.n_list)
            for (int n_s1 : sim.n_s1_list) {
                DgpSpec dgp;
                dgp.outcome_kind = kind;
                dgp.n = n;
                dgp.n_s1_target = n_s1;
                dgp.selection_slopes = sim.selection_slopes;
                dgp.noise_sd = sim.noise_sd;
                dgp.tau_coefficients = sim.tau_coefficients;
                dgp.exact_trial_size = sim.exact_trial_size;
                plan.scenarios.push_back({dgp, sim.replicates});
            }
    plan.validate();
    return plan;
}

} // namespace catgen
