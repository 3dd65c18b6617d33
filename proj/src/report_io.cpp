#include "catgen/report_io.hpp"

#include <cmath>
#include <fstream>

#include "catgen/csv.hpp"
#include "catgen/hash.hpp"

namespace catgen {

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

std::string canonical_json(const nlohmann::json& j) { return j.dump(2); }

std::string config_hash(const nlohmann::json& effective_config) {
    return "fnv1a64:" + to_hex(fnv1a64(effective_config.dump()));
}

namespace {

nlohmann::json finite_or_null(double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json();
}

} // namespace

void write_curve_csv(const std::filesystem::path& path, const CateCurve& curve) {
    std::vector<std::vector<std::string>> rows;
    for (int g = 0; g < curve.grid.size(); ++g)
        rows.push_back({
            format_double(curve.grid[g]),
            format_double(curve.theta_hat[g]),
            format_double(curve.slope_hat[g]),
            format_double(curve.se[g]),
            format_double(curve.ci_lower[g]),
            format_double(curve.ci_upper[g]),
            std::to_string(curve.n_effective[g]),
            point_flags_string(curve.flags[g]),
        });
    write_csv(path, {"v", "theta_hat", "slope_hat", "se", "ci_lower", "ci_upper", "n_effective",
                     "flags"},
              rows);
}

nlohmann::json curve_to_json(const CateCurve& curve) {
    nlohmann::json points = nlohmann::json::array();
    for (int g = 0; g < curve.grid.size(); ++g)
        points.push_back({
            {"v", curve.grid[g]},
            {"theta_hat", finite_or_null(curve.theta_hat[g])},
            {"slope_hat", finite_or_null(curve.slope_hat[g])},
            {"se", finite_or_null(curve.se[g])},
            {"ci_lower", finite_or_null(curve.ci_lower[g])},
            {"ci_upper", finite_or_null(curve.ci_upper[g])},
            {"n_effective", curve.n_effective[g]},
            {"flags", point_flags_string(curve.flags[g])},
        });
    return nlohmann::json{{"bandwidth", curve.bandwidth}, {"n", curve.n}, {"points", points}};
}

void write_pseudo_outcomes_csv(const std::filesystem::path& path, const PseudoOutcomes& pseudo) {
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < pseudo.v.size(); ++i)
        rows.push_back({format_double(pseudo.v[i]), format_double(pseudo.xi[i])});
    write_csv(path, {"v", "xi"}, rows);
}

nlohmann::json diagnostics_to_json(const DiagnosticsReport& report) {
    nlohmann::json covariates = nlohmann::json::array();
    for (const auto& c : report.covariate_summaries)
        covariates.push_back({
            {"name", c.name},
            {"mean_s1", c.mean_s1},
            {"sd_s1", c.sd_s1},
            {"mean_s0", c.mean_s0},
            {"sd_s0", c.sd_s0},
        });
    return nlohmann::json{
        {"n", report.n},
        {"n_s1", report.n_s1},
        {"n_s0", report.n_s0},
        {"empirical_selection_range", {report.selection_min, report.selection_max}},
        {"empirical_treatment_range", {report.treatment_min, report.treatment_max}},
        {"count_below_threshold", report.count_below_threshold},
        {"clip_epsilon", report.clip_epsilon},
        {"covariate_summaries", covariates},
    };
}

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(finite_or_null(v[i]));
    return out;
}

} // namespace

nlohmann::json simulation_report_to_json(const SimulationReport& report) {
    nlohmann::json scenarios = nlohmann::json::array();
    for (const auto& sc : report.scenarios) {
        nlohmann::json metrics = nlohmann::json::array();
        for (const auto& m : sc.metrics)
            metrics.push_back({
                {"estimator", m.estimator},
                {"integrated_abs_bias", m.integrated_abs_bias},
                {"integrated_rmse", m.integrated_rmse},
                {"integrated_coverage_truth", m.coverage_truth},
                {"integrated_coverage_smoothed", finite_or_null(m.coverage_smoothed)},
                {"integrated_coverage_repmean", m.coverage_repmean},
                {"replicates", m.replicates},
                {"trimmed", m.trimmed},
                {"mean_theta", vector_json(m.mean_theta)},
                {"abs_bias", vector_json(m.abs_bias)},
                {"rmse", vector_json(m.rmse)},
                {"coverage_truth_pct", vector_json(m.cover_truth_pct)},
            });
        scenarios.push_back({
            {"outcome_kind", to_string(sc.dgp.outcome_kind)},
            {"n", sc.dgp.n},
            {"n_s1_target", sc.dgp.n_s1_target},
            {"replicates", sc.replicates},
            {"grid", vector_json(sc.grid)},
            {"true_theta", vector_json(sc.truth.theta)},
            {"true_theta_second_derivative", vector_json(sc.truth.theta_second)},
            {"estimators", metrics},
        });
    }
    return nlohmann::json{{"seed", report.seed}, {"scenarios", scenarios}};
}

void write_simulation_report_csv(const std::filesystem::path& path,
                                 const SimulationReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& sc : report.scenarios)
        for (const auto& m : sc.metrics)
            rows.push_back({
                to_string(sc.dgp.outcome_kind),
                std::to_string(sc.dgp.n),
                std::to_string(sc.dgp.n_s1_target),
                m.estimator,
                std::to_string(m.replicates),
                format_double(m.integrated_abs_bias),
                format_double(m.integrated_rmse),
                format_double(m.coverage_truth),
                format_double(m.coverage_smoothed),
                format_double(m.coverage_repmean),
                m.trimmed ? "1" : "0",
            });
    write_csv(path,
              {"outcome_kind", "n", "n_s1_target", "estimator", "replicates",
               "integrated_abs_bias", "integrated_rmse", "coverage_truth", "coverage_smoothed",
               "coverage_repmean", "trimmed"},
              rows);
}

void write_bandwidth_table_csv(const std::filesystem::path& path,
                               const BandwidthSelection& selection) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < selection.grid.size(); ++i)
        rows.push_back({
            format_double(selection.grid[i]),
            format_double(selection.cv_score[i]),
            selection.grid[i] == selection.h_star ? "1" : "0",
        });
    write_csv(path, {"h", "cv_score", "selected"}, rows);
}

} // namespace catgen
