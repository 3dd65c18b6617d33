#include <doctest.h>

#include <json.hpp>

#include "catgen/cli.hpp"
#include "catgen/config.hpp"
#include "catgen/csv.hpp"
#include "catgen/report_io.hpp"
#include "catgen/rng.hpp"
#include "test_helpers.hpp"

using namespace catgen;

namespace {

int cli(std::initializer_list<std::string> args) {
    std::vector<std::string> argv_s{"catgen"};
    argv_s.insert(argv_s.end(), args);
    std::vector<const char*> argv;
    for (const auto& a : argv_s) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string config_path(const std::string& name) {
    return (source_dir() / "configs" / name).string();
}

nlohmann::json manifest_without_timing(const std::filesystem::path& dir) {
    auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
    j.erase("timing");
    return j;
}

} // namespace

TEST_CASE("cli estimate: fixture run produces a clean 41-point curve") {
    auto out = make_temp_dir("estimate");
    REQUIRE(cli({"estimate", "--config", config_path("estimate_example.json"), "--out",
                 out.string()}) == 0);

    CsvTable curve = read_csv(out / "curve.csv");
    CHECK(curve.rows.size() == 41);
    int flag_col = curve.column_index("flags");
    int theta_col = curve.column_index("theta_hat");
    REQUIRE(flag_col >= 0);
    for (const auto& row : curve.rows) {
        CHECK(row[flag_col].find("degenerate") == std::string::npos);
        CHECK(row[theta_col] != "nan");
    }
    CHECK(std::filesystem::exists(out / "curve.json"));
    CHECK(std::filesystem::exists(out / "pseudo_outcomes.csv"));
    CHECK(std::filesystem::exists(out / "nuisance.json"));

    auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
    CHECK(manifest["command"] == "estimate");
    CHECK(manifest["results"]["bandwidth"].get<double>() > 0.0);
    CHECK(manifest.contains("config_hash"));
    std::filesystem::remove_all(out);
}

TEST_CASE("cli estimate: reruns and worker counts are byte-identical") {
    auto out1 = make_temp_dir("det1");
    auto out2 = make_temp_dir("det2");
    auto out3 = make_temp_dir("det3");
    const std::string cfg = config_path("estimate_example.json");
    REQUIRE(cli({"estimate", "--config", cfg, "--out", out1.string(), "--workers", "1"}) == 0);
    REQUIRE(cli({"estimate", "--config", cfg, "--out", out2.string(), "--workers", "1"}) == 0);
    REQUIRE(cli({"estimate", "--config", cfg, "--out", out3.string(), "--workers", "2"}) == 0);

    for (const char* name : {"curve.csv", "curve.json", "pseudo_outcomes.csv", "nuisance.json"}) {
        CHECK(read_file(out1 / name) == read_file(out2 / name));
        CHECK(read_file(out1 / name) == read_file(out3 / name));
    }
    // Manifests agree after masking wall time.
    CHECK(manifest_without_timing(out1) == manifest_without_timing(out2));
    CHECK(manifest_without_timing(out1) == manifest_without_timing(out3));
    for (const auto& dir : {out1, out2, out3}) std::filesystem::remove_all(dir);
}

TEST_CASE("cli: config validation failures exit 2 and name the field") {
    auto dir = make_temp_dir("cfg");
    auto base = nlohmann::json::parse(read_file(config_path("estimate_example.json")));
    base["nuisance"]["folds"] = 1;
    base["data"]["path"] = (source_dir() / "data/example_cohort.csv").string();
    write_file(dir / "bad.json", base.dump());
    CHECK(cli({"estimate", "--config", (dir / "bad.json").string(), "--out",
               (dir / "o").string()}) == 2);

    base["nuisance"]["folds"] = 5;
    base["smoother"]["mystery_knob"] = true;
    write_file(dir / "unknown.json", base.dump());
    CHECK(cli({"estimate", "--config", (dir / "unknown.json").string(), "--out",
               (dir / "o").string()}) == 2);

    CHECK(cli({"estimate", "--config", (dir / "absent.json").string()}) == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli simulate: tiny scenario writes a well-formed report; zero replicates exit 2") {
    auto out = make_temp_dir("simulate");
    REQUIRE(cli({"simulate", "--config", config_path("simulate_small.json"), "--out",
                 out.string()}) == 0);
    CsvTable report = read_csv(out / "report.csv");
    CHECK(report.rows.size() == 2); // proposed + naive
    auto j = nlohmann::json::parse(read_file(out / "report.json"));
    CHECK(j["scenarios"].size() == 1);
    CHECK(j["scenarios"][0]["estimators"].size() == 2);
    std::filesystem::remove_all(out);

    auto dir = make_temp_dir("simcfg");
    auto base = nlohmann::json::parse(read_file(config_path("simulate_small.json")));
    base["simulation"]["replicates"] = 0;
    write_file(dir / "zero.json", base.dump());
    CHECK(cli({"simulate", "--config", (dir / "zero.json").string(), "--out",
               (dir / "o").string()}) == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli diagnose: fixture report, bad path exit 3, permutation invariance") {
    auto out = make_temp_dir("diag");
    REQUIRE(cli({"diagnose", "--config", config_path("diagnose_example.json"), "--out",
                 out.string()}) == 0);
    auto report = nlohmann::json::parse(read_file(out / "diagnostics.json"));
    CHECK(report["n"] == 500);
    CHECK(report["n_s1"].get<int>() + report["n_s0"].get<int>() == 500);
    auto range = report["empirical_selection_range"];
    CHECK(range[0].get<double>() >= 0.0);
    CHECK(range[0].get<double>() <= range[1].get<double>());
    CHECK(range[1].get<double>() <= 1.0);

    // Bad data path.
    auto dir = make_temp_dir("diagcfg");
    auto base = nlohmann::json::parse(read_file(config_path("diagnose_example.json")));
    base["data"]["path"] = (dir / "nope.csv").string();
    write_file(dir / "badpath.json", base.dump());
    CHECK(cli({"diagnose", "--config", (dir / "badpath.json").string(), "--out",
               (dir / "o").string()}) == 3);

    // Permuting the input rows leaves the report byte-identical.
    CsvTable fixture = read_csv(source_dir() / "data/example_cohort.csv");
    std::mt19937_64 rng(99);
    std::shuffle(fixture.rows.begin(), fixture.rows.end(), rng);
    write_csv(dir / "permuted.csv", fixture.header, fixture.rows);
    base["data"]["path"] = (dir / "permuted.csv").string();
    write_file(dir / "perm.json", base.dump());
    auto out_perm = make_temp_dir("diagperm");
    REQUIRE(cli({"diagnose", "--config", (dir / "perm.json").string(), "--out",
                 out_perm.string()}) == 0);
    CHECK(read_file(out / "diagnostics.json") == read_file(out_perm / "diagnostics.json"));

    std::filesystem::remove_all(out);
    std::filesystem::remove_all(out_perm);
    std::filesystem::remove_all(dir);
}

TEST_CASE("cli bandwidth: table matches an in-process recomputation") {
    auto out = make_temp_dir("bw");
    REQUIRE(cli({"bandwidth", "--config", config_path("bandwidth_example.json"), "--out",
                 out.string()}) == 0);
    CsvTable table = read_csv(out / "bandwidth.csv");
    CHECK(table.rows.size() == 7); // grid length in the config

    // Rebuild the same pipeline through the library and compare scores.
    RunConfig config = load_run_config(config_path("bandwidth_example.json"));
    Cohort cohort = load_cohort(config.data->path, config.data->schema);
    FoldAssignment folds = partition_folds_for_cohort(cohort, config.nuisance.n_folds,
                                                      derive_seed(config.seed, 11),
                                                      config.nuisance.stratify_folds_by_s);
    NuisanceFits nuis =
        fit_nuisances(cohort, folds, config.nuisance, derive_seed(config.seed, 12));
    PseudoOutcomes pseudo = build_pseudo_outcomes(cohort, nuis, PseudoArm::Cate);
    BandwidthSelection sel =
        select_bandwidth_cv(pseudo.v, pseudo.xi, config.smoother.bandwidth.cv_grid,
                            config.smoother.bandwidth.cv_folds, derive_seed(config.seed, 13));

    int selected_rows = 0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        CHECK(parse_numeric_cell(table.rows[i][0], "h", 1) == sel.grid[i]);
        CHECK(parse_numeric_cell(table.rows[i][1], "cv_score", 1) ==
              doctest::Approx(sel.cv_score[i]).epsilon(1e-12));
        if (table.rows[i][2] == "1") {
            ++selected_rows;
            CHECK(sel.grid[i] == sel.h_star);
        }
        if (i > 0) CHECK(sel.grid[i] > sel.grid[i - 1]); // sorted by h
    }
    CHECK(selected_rows == 1);
    std::filesystem::remove_all(out);
}
