#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catgen/crossfit.hpp"
#include "catgen/data_model.hpp"
#include "catgen/smoother.hpp"

namespace catgen {

// Nested-trial synthetic design: X ~ N(0, I3), logistic selection with the
// intercept calibrated to the target trial size, Bernoulli(1/2) treatment
// among participants, and the outcome models below. The effect modifier is
// X2 (index 1).
//
//   continuous: Y = 1 + X1 + X2 + X3 + A (t0 + t1 X2 + t2 X2^2) + N(0, sd^2)
//               so tau(v) = t0 + t1 v + t2 v^2 exactly
//   binary:     Y ~ Bern(expit(-0.5 + 0.5 X1 + 0.5 X2 + 0.3 X3
//                               + A (0.8 + 0.6 X2)))
struct DgpSpec {
    OutcomeKind outcome_kind = OutcomeKind::Binary;
    int n = 2500;
    int n_s1_target = 1000;
    std::array<double, 3> selection_slopes{0.6, -0.3, 0.6};
    double treatment_probability = 0.5;
    double noise_sd = 1.0;
    std::array<double, 3> tau_coefficients{1.0, 1.0, -0.5}; // continuous only
    bool exact_trial_size = false;

    void validate() const;
};

struct ResolvedDgp {
    DgpSpec spec;
    double selection_intercept = 0.0;
};

// Calibrates the selection intercept so E[sum S] matches n_s1_target, by
// bisection over a Monte Carlo sample of 1e6 covariate draws.
ResolvedDgp resolve_dgp(const DgpSpec& spec, std::uint64_t seed);

Cohort generate_cohort(const ResolvedDgp& dgp, std::uint64_t seed);
Cohort generate_cohort(const DgpSpec& spec, std::uint64_t seed); // resolves inline

struct TruthCurve {
    Eigen::VectorXd theta;
    Eigen::VectorXd theta_second; // d^2 theta / dv^2, for the bias reference
};

// Continuous: closed form. Binary: sharded Monte Carlo integration over
// (X1, X3) at each grid value of the effect modifier.
TruthCurve true_cate_curve(const DgpSpec& spec, const Eigen::VectorXd& grid,
                           std::int64_t mc_size, std::uint64_t seed, Exec exec = Exec::Serial);
double true_cate(const DgpSpec& spec, double v, std::int64_t mc_size, std::uint64_t seed,
                 Exec exec = Exec::Serial);

// Population ATE under the spec (closed form for continuous, MC for binary).
double true_ate(const DgpSpec& spec, std::int64_t mc_size, std::uint64_t seed,
                Exec exec = Exec::Serial);

// Oracle nuisance functions of the data-generating process.
NuisanceFunctions oracle_nuisances(const ResolvedDgp& dgp);

enum class EstimatorKind { Proposed = 0, Naive = 1, OracleForm = 2, TrialOnly = 3 };
inline constexpr int kEstimatorCount = 4;

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& s);

struct EstimatorCurve {
    Eigen::VectorXd theta, se, lo, hi;
    double bandwidth = std::numeric_limits<double>::quiet_NaN(); // NaN when not kernel-based
};

struct ReplicateResult {
    std::array<std::optional<EstimatorCurve>, kEstimatorCount> curves;
};

struct PipelineSettings {
    CrossfitConfig crossfit;
    BandwidthSpec bandwidth; // CV with auto grid by default
};

// One shared pseudo-outcome construction feeds proposed/naive/oracle; the
// trial-only comparator reruns the pipeline on s=1 rows with p(S=1|X) = 1.
ReplicateResult run_replicate(const ResolvedDgp& dgp,
                              const std::array<bool, kEstimatorCount>& estimators,
                              const PipelineSettings& pipeline, const Eigen::VectorXd& grid,
                              std::uint64_t seed);

// Ordinary least squares of xi on (1, v, ..., v^degree) with a
// heteroskedasticity-robust sandwich, evaluated on the grid.
EstimatorCurve fit_polynomial_baseline(const Eigen::VectorXd& v, const Eigen::VectorXd& xi,
                                       int degree, const Eigen::VectorXd& grid);

struct EstimatorMetrics {
    std::string estimator;
    double integrated_abs_bias = 0.0;
    double integrated_rmse = 0.0;
    double coverage_truth = 0.0;   // percent
    double coverage_smoothed = std::numeric_limits<double>::quiet_NaN();
    double coverage_repmean = 0.0; // vs the replicate-mean curve
    int replicates = 0;
    bool trimmed = false;
    // Per-grid summaries (same length as the grid).
    Eigen::VectorXd mean_theta, abs_bias, rmse, cover_truth_pct;
};

EstimatorMetrics integrated_metrics(const std::vector<EstimatorCurve>& replicates,
                                    const TruthCurve& truth, const Eigen::VectorXd& grid,
                                    double trim_fraction, bool trim_enabled);

struct Scenario {
    DgpSpec dgp;
    int replicates = 500;
};

struct SimulationPlan {
    std::vector<Scenario> scenarios;
    std::array<bool, kEstimatorCount> estimators{true, true, false, false};
    PipelineSettings pipeline;
    int grid_points = 41;
    double grid_central = 0.90; // central mass of V covered by the grid
    double trim_fraction = 0.05;
    std::int64_t truth_mc_size = 10000000;
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> dump_replicates_dir;

    void validate() const;
};

struct ScenarioResult {
    DgpSpec dgp;
    int replicates = 0;
    Eigen::VectorXd grid;
    TruthCurve truth;
    std::vector<EstimatorMetrics> metrics; // one per active estimator
};

struct SimulationReport {
    std::vector<ScenarioResult> scenarios;
    std::uint64_t seed = 0;
};

SimulationReport run_simulation(const SimulationPlan& plan, Exec exec = Exec::Serial);

// Evaluation grid over the central mass of the effect modifier's population
// distribution (X2 is standard normal under this design).
Eigen::VectorXd simulation_grid(int points, double central_mass);

} // namespace catgen
