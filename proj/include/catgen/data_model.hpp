#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catgen/errors.hpp"

namespace catgen {

enum class OutcomeKind { Continuous, Binary };

std::string to_string(OutcomeKind kind);
OutcomeKind outcome_kind_from_string(const std::string& s);

struct SchemaConfig {
    std::string s_column = "s";
    std::string a_column = "a";
    std::string y_column = "y";
    std::vector<std::string> covariate_columns;
    std::string effect_modifier;
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    // Strict mode rejects s=0 rows carrying a or y; lenient drops the
    // fields with a warning.
    bool lenient = false;

    void validate() const;
};

// Trial-eligible cohort: covariates for everyone, treatment and outcome
// only where s=1.
struct Cohort {
    Eigen::MatrixXd covariates; // n x p
    std::vector<std::string> covariate_names;
    int effect_modifier_index = 0;
    std::vector<std::int8_t> s;
    std::vector<std::int8_t> a; // meaningful iff s[i]==1, else -1
    Eigen::VectorXd y;          // meaningful iff s[i]==1, else NaN
    OutcomeKind outcome_kind = OutcomeKind::Continuous;
    std::vector<std::string> warnings;

    int n() const { return static_cast<int>(s.size()); }
    int p() const { return static_cast<int>(covariates.cols()); }
    int n_s1() const;
    int n_s0() const { return n() - n_s1(); }
    double v(int i) const { return covariates(i, effect_modifier_index); }
    Eigen::VectorXd effect_modifier_values() const;

    // Checks every structural invariant; throws DataError on violation.
    void validate() const;
};

Cohort load_cohort(const std::filesystem::path& path, const SchemaConfig& schema);
void save_cohort(const Cohort& cohort, const std::filesystem::path& path,
                 const SchemaConfig& schema);

struct CovariateSummary {
    std::string name;
    double mean_s1, sd_s1, mean_s0, sd_s0;
};

struct DiagnosticsReport {
    int n = 0, n_s1 = 0, n_s0 = 0;
    double selection_min = 0, selection_max = 0; // raw fitted p(S=1|X), all units
    double treatment_min = 0, treatment_max = 0; // raw fitted p(A=1|X,S=1), s=1 units
    int count_below_threshold = 0;               // raw selection prob < clip epsilon
    double clip_epsilon = 0;
    std::vector<CovariateSummary> covariate_summaries;
};

struct NuisanceFits; // crossfit module

DiagnosticsReport diagnose_overlap(const Cohort& cohort, const NuisanceFits& nuisance);

// Stable content order for the cohort rows (covariates, then s, a, y).
// Used by the diagnose pipeline so its report is invariant to row
// permutation of the input file.
std::vector<int> canonical_row_order(const Cohort& cohort);
Cohort reorder_rows(const Cohort& cohort, const std::vector<int>& order);

} // namespace catgen
