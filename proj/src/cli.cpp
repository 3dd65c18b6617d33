#include "catgen/cli.hpp"

#include <chrono>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "catgen/config.hpp"
#include "catgen/report_io.hpp"
#include "catgen/rng.hpp"

namespace catgen {

namespace {

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    int workers = 0; // 0 = library default
};

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

RunConfig load_effective_config(const CliOptions& opt) {
    RunConfig config = load_run_config(opt.config_path);
    if (opt.seed_override) config.seed = *opt.seed_override;
    if (opt.out_override) config.output.dir = *opt.out_override;
    return config;
}

nlohmann::json base_manifest(const std::string& command, const RunConfig& config) {
    nlohmann::json effective = effective_config_json(config);
    return nlohmann::json{
        {"command", command},
        {"config", effective},
        {"config_hash", config_hash(effective)},
        {"seed", config.seed},
    };
}

void finish_manifest(nlohmann::json& manifest, const std::filesystem::path& dir,
                     const Timer& timer) {
    manifest["timing"] = {{"wall_time_seconds", timer.seconds()}};
    write_text_file(dir / "manifest.json", canonical_json(manifest) + "\n");
}

struct EstimatePipeline {
    Cohort cohort;
    FoldAssignment folds;
    NuisanceFits nuisance;
    PseudoOutcomes pseudo;
};

EstimatePipeline run_nuisance_pipeline(const RunConfig& config, bool canonical_order) {
    if (!config.data) throw ConfigError("config has no 'data' section");
    EstimatePipeline p;
    p.cohort = load_cohort(config.data->path, config.data->schema);
    if (canonical_order) p.cohort = reorder_rows(p.cohort, canonical_row_order(p.cohort));
    p.folds = partition_folds_for_cohort(p.cohort, config.nuisance.n_folds,
                                         derive_seed(config.seed, 11),
                                         config.nuisance.stratify_folds_by_s);
    p.nuisance = fit_nuisances(p.cohort, p.folds, config.nuisance, derive_seed(config.seed, 12),
                               Exec::OpenMP);
    p.pseudo = build_pseudo_outcomes(p.cohort, p.nuisance, PseudoArm::Cate, Exec::OpenMP);
    return p;
}

Eigen::VectorXd estimation_grid(const RunConfig& config, const Eigen::VectorXd& v) {
    const SmootherGridConfig& grid_cfg = config.smoother.grid;
    double lo, hi;
    if (grid_cfg.range) {
        lo = grid_cfg.range->first;
        hi = grid_cfg.range->second;
    } else {
        // Central 90% of the observed effect modifier (type-7 quantiles).
        std::vector<double> sorted(v.data(), v.data() + v.size());
        std::sort(sorted.begin(), sorted.end());
        auto quantile = [&](double q) {
            double pos = q * (sorted.size() - 1);
            std::size_t i = static_cast<std::size_t>(pos);
            if (i + 1 >= sorted.size()) return sorted.back();
            double frac = pos - i;
            return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
        };
        double tail = (1.0 - grid_cfg.central_mass) / 2.0;
        lo = quantile(tail);
        hi = quantile(1.0 - tail);
    }
    Eigen::VectorXd grid(grid_cfg.points);
    for (int g = 0; g < grid_cfg.points; ++g)
        grid[g] = lo + (hi - lo) * g / (grid_cfg.points - 1);
    return grid;
}

nlohmann::json fold_weights_json(const NuisanceFits& nuisance) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& fm : nuisance.fold_models) {
        nlohmann::json f;
        auto weights_of = [](const std::optional<EnsembleModel>& m) {
            nlohmann::json w = nlohmann::json::array();
            if (m)
                for (int k = 0; k < m->weights.size(); ++k) w.push_back(m->weights[k]);
            return w;
        };
        f["selection"] = weights_of(fm.selection);
        f["outcome_a1"] = weights_of(fm.outcome1);
        f["outcome_a0"] = weights_of(fm.outcome0);
        folds.push_back(std::move(f));
    }
    return folds;
}

void cmd_estimate(const CliOptions& opt) {
    Timer timer;
    RunConfig config = load_effective_config(opt);
    std::filesystem::create_directories(config.output.dir);
    nlohmann::json manifest = base_manifest("estimate", config);

    EstimatePipeline p = run_nuisance_pipeline(config, false);
    Eigen::VectorXd grid = estimation_grid(config, p.pseudo.v);
    CateCurve curve = estimate_cate_curve(p.pseudo, grid, config.smoother.bandwidth,
                                          derive_seed(config.seed, 13), Exec::OpenMP);

    const auto& dir = config.output.dir;
    if (config.output.csv) {
        write_curve_csv(dir / "curve.csv", curve);
        write_pseudo_outcomes_csv(dir / "pseudo_outcomes.csv", p.pseudo);
    }
    if (config.output.json) {
        write_text_file(dir / "curve.json", canonical_json(curve_to_json(curve)) + "\n");
        write_text_file(dir / "nuisance.json", canonical_json(p.nuisance.to_json()) + "\n");
    }
    manifest["results"] = {
        {"bandwidth", curve.bandwidth},
        {"n", p.cohort.n()},
        {"n_s1", p.cohort.n_s1()},
        {"super_learner_weights", fold_weights_json(p.nuisance)},
        {"warnings", p.nuisance.warnings},
    };
    finish_manifest(manifest, dir, timer);
    std::cout << "estimate: wrote " << (dir / "curve.csv").string() << "\n";
}

void cmd_simulate(const CliOptions& opt) {
    Timer timer;
    RunConfig config = load_effective_config(opt);
    std::filesystem::create_directories(config.output.dir);
    nlohmann::json manifest = base_manifest("simulate", config);

    SimulationPlan plan = build_simulation_plan(config);
    SimulationReport report = run_simulation(plan, Exec::OpenMP);

    const auto& dir = config.output.dir;
    if (config.output.json)
        write_text_file(dir / "report.json",
                        canonical_json(simulation_report_to_json(report)) + "\n");
    if (config.output.csv) write_simulation_report_csv(dir / "report.csv", report);
    manifest["results"] = {{"scenarios", report.scenarios.size()}};
    finish_manifest(manifest, dir, timer);
    std::cout << "simulate: wrote " << (dir / "report.csv").string() << "\n";
}

void cmd_diagnose(const CliOptions& opt) {
    Timer timer;
    RunConfig config = load_effective_config(opt);
    std::filesystem::create_directories(config.output.dir);
    nlohmann::json manifest = base_manifest("diagnose", config);

    // Canonical row order makes the report invariant to input permutation.
    EstimatePipeline p = run_nuisance_pipeline(config, true);
    DiagnosticsReport report = diagnose_overlap(p.cohort, p.nuisance);

    const auto& dir = config.output.dir;
    write_text_file(dir / "diagnostics.json", canonical_json(diagnostics_to_json(report)) + "\n");
    manifest["results"] = {{"n", report.n}, {"n_s1", report.n_s1}, {"n_s0", report.n_s0}};
    finish_manifest(manifest, dir, timer);
    std::cout << "diagnose: wrote " << (dir / "diagnostics.json").string() << "\n";
}

void cmd_bandwidth(const CliOptions& opt) {
    Timer timer;
    RunConfig config = load_effective_config(opt);
    std::filesystem::create_directories(config.output.dir);
    nlohmann::json manifest = base_manifest("bandwidth", config);

    EstimatePipeline p = run_nuisance_pipeline(config, false);
    std::vector<double> grid = config.smoother.bandwidth.cv_grid.empty()
                                   ? default_bandwidth_grid(p.pseudo.v)
                                   : config.smoother.bandwidth.cv_grid;
    BandwidthSelection selection =
        select_bandwidth_cv(p.pseudo.v, p.pseudo.xi, grid, config.smoother.bandwidth.cv_folds,
                            derive_seed(config.seed, 13), Exec::OpenMP);

    const auto& dir = config.output.dir;
    write_bandwidth_table_csv(dir / "bandwidth.csv", selection);
    manifest["results"] = {{"h_star", selection.h_star}};
    finish_manifest(manifest, dir, timer);
    std::cout << "bandwidth: wrote " << (dir / "bandwidth.csv").string() << "\n";
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"catgen: target-population CATE estimation for nested trial designs"};
    app.require_subcommand(1);

    CliOptions opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "JSON config file")->required();
        sub->add_option("--seed", opt.seed_override, "override the config seed");
        sub->add_option("--out", opt.out_override, "override the output directory");
        sub->add_option("--workers", opt.workers, "max worker threads (0 = default)");
    };

    CLI::App* estimate = app.add_subcommand("estimate", "estimate the CATE curve from a cohort");
    CLI::App* simulate = app.add_subcommand("simulate", "run the Monte Carlo study");
    CLI::App* diagnose = app.add_subcommand("diagnose", "positivity/overlap diagnostics");
    CLI::App* bandwidth = app.add_subcommand("bandwidth", "cross-validated bandwidth table");
    for (auto* sub : {estimate, simulate, diagnose, bandwidth}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << R"({"status":"error","kind":"config","message":")" << e.what() << "\"}\n";
        return 2;
    }

    try {
        if (opt.workers > 0) set_max_threads(opt.workers);
        if (estimate->parsed()) cmd_estimate(opt);
        if (simulate->parsed()) cmd_simulate(opt);
        if (diagnose->parsed()) cmd_diagnose(opt);
        if (bandwidth->parsed()) cmd_bandwidth(opt);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << R"({"status":"error","kind":"config","message":)"
                  << nlohmann::json(e.what()).dump() << "}\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << R"({"status":"error","kind":"data","message":)"
                  << nlohmann::json(e.what()).dump() << "}\n";
        return 3;
    } catch (const EstimationError& e) {
        std::cerr << R"({"status":"error","kind":"estimation","message":)"
                  << nlohmann::json(e.what()).dump() << "}\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << R"({"status":"error","kind":"internal","message":)"
                  << nlohmann::json(e.what()).dump() << "}\n";
        return 1;
    }
}

} // namespace catgen
