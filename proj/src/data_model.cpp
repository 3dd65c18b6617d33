#include "catgen/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "catgen/crossfit.hpp"
#include "catgen/csv.hpp"

namespace catgen {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(OutcomeKind kind) {
    return kind == OutcomeKind::Continuous ? "continuous" : "binary";
}

OutcomeKind outcome_kind_from_string(const std::string& s) {
    if (s == "continuous") return OutcomeKind::Continuous;
    if (s == "binary") return OutcomeKind::Binary;
    throw ConfigError("unknown outcome_kind '" + s + "' (expected continuous|binary)");
}

void SchemaConfig::validate() const {
    if (covariate_columns.empty()) throw ConfigError("schema: covariate_columns is empty");
    std::set<std::string> seen;
    for (const auto& c : covariate_columns)
        if (!seen.insert(c).second)
            throw ConfigError("schema: duplicate covariate column '" + c + "'");
    int hits = static_cast<int>(std::count(covariate_columns.begin(), covariate_columns.end(),
                                           effect_modifier));
    if (hits != 1)
        throw ConfigError("schema: effect_modifier '" + effect_modifier +
                          "' must appear exactly once in covariate_columns");
    for (const auto& c : {s_column, a_column, y_column})
        if (seen.count(c))
            throw ConfigError("schema: column '" + c + "' used both as covariate and as s/a/y");
}

int Cohort::n_s1() const {
    return static_cast<int>(std::count(s.begin(), s.end(), std::int8_t{1}));
}

Eigen::VectorXd Cohort::effect_modifier_values() const {
    return covariates.col(effect_modifier_index);
}

void Cohort::validate() const {
    const int n_units = n();
    if (static_cast<int>(a.size()) != n_units || y.size() != n_units ||
        covariates.rows() != n_units)
        throw DataError("cohort: inconsistent field lengths");
    if (effect_modifier_index < 0 || effect_modifier_index >= p())
        throw DataError("cohort: effect_modifier_index out of range");
    if (!covariates.allFinite()) throw DataError("cohort: non-finite covariate value");

    int treated = 0, control = 0, ns1 = 0, ns0 = 0;
    for (int i = 0; i < n_units; ++i) {
        if (s[i] == 1) {
            ++ns1;
            if (a[i] != 0 && a[i] != 1)
                throw DataError("cohort row " + std::to_string(i + 1) +
                                ": s=1 unit with treatment outside {0,1}");
            if (!std::isfinite(y[i]))
                throw DataError("cohort row " + std::to_string(i + 1) +
                                ": s=1 unit with absent outcome");
            if (outcome_kind == OutcomeKind::Binary && y[i] != 0.0 && y[i] != 1.0)
                throw DataError("cohort row " + std::to_string(i + 1) +
                                ": binary outcome outside {0,1}");
            (a[i] == 1 ? treated : control)++;
        } else if (s[i] == 0) {
            ++ns0;
            if (a[i] != -1)
                throw DataError("cohort row " + std::to_string(i + 1) +
                                ": s=0 unit with treatment recorded");
            if (!std::isnan(y[i]))
                throw DataError("cohort row " + std::to_string(i + 1) +
                                ": s=0 unit with outcome recorded");
        } else {
            throw DataError("cohort row " + std::to_string(i + 1) + ": s outside {0,1}");
        }
    }
    if (ns1 == 0 || ns0 == 0)
        throw DataError("cohort: need both randomized (s=1) and non-randomized (s=0) units, got " +
                        std::to_string(ns1) + "/" + std::to_string(ns0));
    if (treated == 0 || control == 0)
        throw DataError("cohort: trial subset needs at least one unit per arm");
}

Cohort load_cohort(const std::filesystem::path& path, const SchemaConfig& schema) {
    schema.validate();
    CsvTable table = read_csv(path);

    auto require_column = [&](const std::string& name) {
        int idx = table.column_index(name);
        if (idx < 0) throw DataError("missing column '" + name + "' in " + path.string());
        return idx;
    };

    const int s_idx = require_column(schema.s_column);
    const int a_idx = require_column(schema.a_column);
    const int y_idx = require_column(schema.y_column);
    std::vector<int> cov_idx;
    for (const auto& name : schema.covariate_columns) cov_idx.push_back(require_column(name));

    const int n = static_cast<int>(table.rows.size());
    if (n == 0) throw DataError("no data rows in " + path.string());
    const int p = static_cast<int>(cov_idx.size());

    Cohort cohort;
    cohort.covariates.resize(n, p);
    cohort.covariate_names = schema.covariate_columns;
    cohort.effect_modifier_index = static_cast<int>(
        std::find(schema.covariate_columns.begin(), schema.covariate_columns.end(),
                  schema.effect_modifier) -
        schema.covariate_columns.begin());
    cohort.s.resize(n);
    cohort.a.assign(n, -1);
    cohort.y = Eigen::VectorXd::Constant(n, kNaN);
    cohort.outcome_kind = schema.outcome_kind;

    for (int i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        const int rownum = i + 1;

        const std::string& s_cell = row[s_idx];
        if (is_absent_cell(s_cell))
            throw DataError("row " + std::to_string(rownum) + ": absent trial indicator");
        double s_val = parse_numeric_cell(s_cell, schema.s_column, rownum);
        if (s_val != 0.0 && s_val != 1.0)
            throw DataError("row " + std::to_string(rownum) + ": s value '" + s_cell +
                            "' outside {0,1}");
        cohort.s[i] = static_cast<std::int8_t>(s_val);

        for (int j = 0; j < p; ++j) {
            const std::string& cell = row[cov_idx[j]];
            if (is_absent_cell(cell))
                throw DataError("row " + std::to_string(rownum) + ": missing covariate '" +
                                schema.covariate_columns[j] + "'");
            cohort.covariates(i, j) =
                parse_numeric_cell(cell, schema.covariate_columns[j], rownum);
        }

        const std::string& a_cell = row[a_idx];
        const std::string& y_cell = row[y_idx];
        if (cohort.s[i] == 1) {
            if (is_absent_cell(a_cell) || is_absent_cell(y_cell))
                throw DataError("row " + std::to_string(rownum) +
                                ": s=1 unit missing treatment or outcome");
            double a_val = parse_numeric_cell(a_cell, schema.a_column, rownum);
            if (a_val != 0.0 && a_val != 1.0)
                throw DataError("row " + std::to_string(rownum) + ": treatment outside {0,1}");
            cohort.a[i] = static_cast<std::int8_t>(a_val);
            double y_val = parse_numeric_cell(y_cell, schema.y_column, rownum);
            if (schema.outcome_kind == OutcomeKind::Binary && y_val != 0.0 && y_val != 1.0)
                throw DataError("row " + std::to_string(rownum) +
                                ": binary outcome outside {0,1}");
            cohort.y[i] = y_val;
        } else {
            if (!is_absent_cell(a_cell) || !is_absent_cell(y_cell)) {
                if (!schema.lenient)
                    throw DataError("row " + std::to_string(rownum) +
                                    ": s=0 unit carries treatment/outcome fields (strict mode)");
                cohort.warnings.push_back("row " + std::to_string(rownum) +
                                          ": dropped a/y fields on s=0 unit");
            }
        }
    }

    cohort.validate();
    return cohort;
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path,
                 const SchemaConfig& schema) {
    std::vector<std::string> header = schema.covariate_columns;
    header.push_back(schema.s_column);
    header.push_back(schema.a_column);
    header.push_back(schema.y_column);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(cohort.n());
    for (int i = 0; i < cohort.n(); ++i) {
        std::vector<std::string> row;
        row.reserve(header.size());
        for (int j = 0; j < cohort.p(); ++j) row.push_back(format_double(cohort.covariates(i, j)));
        row.push_back(cohort.s[i] == 1 ? "1" : "0");
        if (cohort.s[i] == 1) {
            row.push_back(cohort.a[i] == 1 ? "1" : "0");
            row.push_back(format_double(cohort.y[i]));
        } else {
            row.push_back("");
            row.push_back("");
        }
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

DiagnosticsReport diagnose_overlap(const Cohort& cohort, const NuisanceFits& nuisance) {
    DiagnosticsReport report;
    report.n = cohort.n();
    report.n_s1 = cohort.n_s1();
    report.n_s0 = cohort.n_s0();
    report.clip_epsilon = nuisance.clip_epsilon;

    report.selection_min = nuisance.selection_raw.minCoeff();
    report.selection_max = nuisance.selection_raw.maxCoeff();
    report.count_below_threshold = static_cast<int>(
        (nuisance.selection_raw.array() < nuisance.clip_epsilon).count());

    double tmin = 1.0, tmax = 0.0;
    for (int i = 0; i < cohort.n(); ++i) {
        if (cohort.s[i] != 1) continue;
        tmin = std::min(tmin, nuisance.treatment_raw[i]);
        tmax = std::max(tmax, nuisance.treatment_raw[i]);
    }
    report.treatment_min = tmin;
    report.treatment_max = tmax;

    for (int j = 0; j < cohort.p(); ++j) {
        CovariateSummary cs;
        cs.name = cohort.covariate_names[j];
        double sum1 = 0, sum0 = 0, sq1 = 0, sq0 = 0;
        for (int i = 0; i < cohort.n(); ++i) {
            double x = cohort.covariates(i, j);
            if (cohort.s[i] == 1) {
                sum1 += x;
                sq1 += x * x;
            } else {
                sum0 += x;
                sq0 += x * x;
            }
        }
        auto finish = [](double sum, double sq, int m, double& mean, double& sd) {
            mean = sum / m;
            double var = m > 1 ? (sq - sum * sum / m) / (m - 1) : 0.0;
            sd = std::sqrt(std::max(0.0, var));
        };
        finish(sum1, sq1, report.n_s1, cs.mean_s1, cs.sd_s1);
        finish(sum0, sq0, report.n_s0, cs.mean_s0, cs.sd_s0);
        report.covariate_summaries.push_back(cs);
    }
    return report;
}

std::vector<int> canonical_row_order(const Cohort& cohort) {
    std::vector<int> order(cohort.n());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        for (int k = 0; k < cohort.p(); ++k) {
            if (cohort.covariates(i, k) != cohort.covariates(j, k))
                return cohort.covariates(i, k) < cohort.covariates(j, k);
        }
        if (cohort.s[i] != cohort.s[j]) return cohort.s[i] < cohort.s[j];
        if (cohort.a[i] != cohort.a[j]) return cohort.a[i] < cohort.a[j];
        double yi = cohort.s[i] == 1 ? cohort.y[i] : 0.0;
        double yj = cohort.s[j] == 1 ? cohort.y[j] : 0.0;
        return yi < yj;
    });
    return order;
}

Cohort reorder_rows(const Cohort& cohort, const std::vector<int>& order) {
    Cohort out = cohort;
    for (int i = 0; i < cohort.n(); ++i) {
        int src = order[i];
        out.covariates.row(i) = cohort.covariates.row(src);
        out.s[i] = cohort.s[src];
        out.a[i] = cohort.a[src];
        out.y[i] = cohort.y[src];
    }
    return out;
}

} // namespace catgen
