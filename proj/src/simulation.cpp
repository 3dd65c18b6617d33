#include "catgen/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "catgen/csv.hpp"
#include "catgen/mathutil.hpp"
#include "catgen/rng.hpp"

namespace catgen {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Binary outcome model coefficients (see DgpSpec docs).
constexpr double kBinIntercept = -0.5;
constexpr double kBinX1 = 0.5;
constexpr double kBinX2 = 0.5;
constexpr double kBinX3 = 0.3;
constexpr double kBinTrt = 0.8;
constexpr double kBinTrtX2 = 0.6;

constexpr std::int64_t kTruthShardSize = 1 << 17;

double binary_eta(double x1, double x2, double x3, int a) {
    return kBinIntercept + kBinX1 * x1 + kBinX2 * x2 + kBinX3 * x3 +
           a * (kBinTrt + kBinTrtX2 * x2);
}

double continuous_mean(const DgpSpec& spec, double x1, double x2, double x3, int a) {
    const auto& t = spec.tau_coefficients;
    return 1.0 + x1 + x2 + x3 + a * (t[0] + t[1] * x2 + t[2] * x2 * x2);
}

} // namespace

void DgpSpec::validate() const {
    if (n < 4) throw ConfigError("dgp: n must be at least 4");
    if (n_s1_target < 2 || n_s1_target >= n)
        throw ConfigError("dgp: n_s1_target must be in [2, n)");
    if (!(treatment_probability > 0.0 && treatment_probability < 1.0))
        throw ConfigError("dgp: treatment_probability must be in (0,1)");
    if (!(noise_sd >= 0.0)) throw ConfigError("dgp: noise_sd must be >= 0");
}

ResolvedDgp resolve_dgp(const DgpSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int m = 1000000;
    std::mt19937_64 rng = make_rng(seed, stream::kCalibration);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> slope_term(m);
    for (int i = 0; i < m; ++i) {
        double x1 = normal(rng), x2 = normal(rng), x3 = normal(rng);
        slope_term[i] = spec.selection_slopes[0] * x1 + spec.selection_slopes[1] * x2 +
                        spec.selection_slopes[2] * x3;
    }
    const double target = static_cast<double>(spec.n_s1_target) / spec.n;
    auto mean_prob = [&](double b0) {
        double sum = 0.0;
        for (double w : slope_term) sum += expit(b0 + w);
        return sum / m;
    };
    double lo = -30.0, hi = 30.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
        double mid = 0.5 * (lo + hi);
        (mean_prob(mid) < target ? lo : hi) = mid;
    }
    return ResolvedDgp{spec, 0.5 * (lo + hi)};
}

Cohort generate_cohort(const ResolvedDgp& dgp, std::uint64_t seed) {
    const DgpSpec& spec = dgp.spec;
    const int n = spec.n;

    Cohort cohort;
    cohort.covariates.resize(n, 3);
    cohort.covariate_names = {"x1", "x2", "x3"};
    cohort.effect_modifier_index = 1;
    cohort.outcome_kind = spec.outcome_kind;
    cohort.s.resize(n);
    cohort.a.assign(n, -1);
    cohort.y = Eigen::VectorXd::Constant(n, kNaN);

    {
        std::mt19937_64 rng = make_rng(seed, stream::kDgpCovariates);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3; ++j) cohort.covariates(i, j) = normal(rng);
    }

    Eigen::VectorXd p_s(n);
    for (int i = 0; i < n; ++i)
        p_s[i] = expit(dgp.selection_intercept +
                       spec.selection_slopes[0] * cohort.covariates(i, 0) +
                       spec.selection_slopes[1] * cohort.covariates(i, 1) +
                       spec.selection_slopes[2] * cohort.covariates(i, 2));

    {
        std::mt19937_64 rng = make_rng(seed, stream::kDgpSelection);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        if (spec.exact_trial_size) {
            // Weighted sampling without replacement (Efraimidis-Spirakis keys).
            std::vector<std::pair<double, int>> keys(n);
            for (int i = 0; i < n; ++i)
                keys[i] = {std::pow(unif(rng), 1.0 / p_s[i]), i};
            std::sort(keys.begin(), keys.end(), std::greater<>());
            for (int i = 0; i < n; ++i) cohort.s[i] = 0;
            for (int r = 0; r < spec.n_s1_target; ++r) cohort.s[keys[r].second] = 1;
        } else {
            for (int i = 0; i < n; ++i) cohort.s[i] = unif(rng) < p_s[i] ? 1 : 0;
        }
    }

    {
        std::mt19937_64 rng = make_rng(seed, stream::kDgpTreatment);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            double u = unif(rng);
            if (cohort.s[i] == 1) cohort.a[i] = u < spec.treatment_probability ? 1 : 0;
        }
    }

    {
        std::mt19937_64 rng = make_rng(seed, stream::kDgpOutcome);
        if (spec.outcome_kind == OutcomeKind::Continuous) {
            std::normal_distribution<double> normal(0.0, 1.0);
            for (int i = 0; i < n; ++i) {
                double z = normal(rng);
                if (cohort.s[i] != 1) continue;
                cohort.y[i] = continuous_mean(spec, cohort.covariates(i, 0),
                                              cohort.covariates(i, 1), cohort.covariates(i, 2),
                                              cohort.a[i]) +
                              spec.noise_sd * z;
            }
        } else {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            for (int i = 0; i < n; ++i) {
                double u = unif(rng);
                if (cohort.s[i] != 1) continue;
                double p = expit(binary_eta(cohort.covariates(i, 0), cohort.covariates(i, 1),
                                            cohort.covariates(i, 2), cohort.a[i]));
                cohort.y[i] = u < p ? 1.0 : 0.0;
            }
        }
    }
    return cohort;
}

Cohort generate_cohort(const DgpSpec& spec, std::uint64_t seed) {
    return generate_cohort(resolve_dgp(spec, seed), seed);
}

TruthCurve true_cate_curve(const DgpSpec& spec, const Eigen::VectorXd& grid,
                           std::int64_t mc_size, std::uint64_t seed, Exec exec) {
    const int m = static_cast<int>(grid.size());
    TruthCurve truth;
    truth.theta.resize(m);
    truth.theta_second.resize(m);

    if (spec.outcome_kind == OutcomeKind::Continuous) {
        const auto& t = spec.tau_coefficients;
        for (int g = 0; g < m; ++g) {
            truth.theta[g] = t[0] + t[1] * grid[g] + t[2] * grid[g] * grid[g];
            truth.theta_second[g] = 2.0 * t[2];
        }
        return truth;
    }

    // Sharded Monte Carlo over (X1, X3); the treated/control linear
    // predictors and the curvature terms share the same draws.
    if (mc_size < 1) throw ConfigError("true_cate_curve: mc_size must be positive");
    const std::int64_t n_shards = (mc_size + kTruthShardSize - 1) / kTruthShardSize;
    Eigen::MatrixXd theta_acc = Eigen::MatrixXd::Zero(m, n_shards);
    Eigen::MatrixXd second_acc = Eigen::MatrixXd::Zero(m, n_shards);

    const std::uint64_t shard_master = derive_seed(seed, stream::kTruthShard);
    for_each_index(n_shards, exec, [&](std::int64_t shard) {
        std::int64_t count = std::min<std::int64_t>(kTruthShardSize,
                                                    mc_size - shard * kTruthShardSize);
        std::mt19937_64 rng = make_rng(shard_master, static_cast<std::uint64_t>(shard));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::int64_t i = 0; i < count; ++i) {
            double x1 = normal(rng), x3 = normal(rng);
            double base = kBinIntercept + kBinX1 * x1 + kBinX3 * x3;
            for (int g = 0; g < m; ++g) {
                double v = grid[g];
                double eta1 = base + kBinX2 * v + kBinTrt + kBinTrtX2 * v;
                double eta0 = base + kBinX2 * v;
                double p1 = expit(eta1), p0 = expit(eta0);
                theta_acc(g, shard) += p1 - p0;
                // d eta1/dv = kBinX2 + kBinTrtX2, d eta0/dv = kBinX2;
                // second derivative of expit: p(1-p)(1-2p).
                double d1 = kBinX2 + kBinTrtX2, d0 = kBinX2;
                second_acc(g, shard) += p1 * (1 - p1) * (1 - 2 * p1) * d1 * d1 -
                                        p0 * (1 - p0) * (1 - 2 * p0) * d0 * d0;
            }
        }
    });

    // Deterministic reduction in shard order.
    for (int g = 0; g < m; ++g) {
        double t_sum = 0.0, s_sum = 0.0;
        for (std::int64_t shard = 0; shard < n_shards; ++shard) {
            t_sum += theta_acc(g, shard);
            s_sum += second_acc(g, shard);
        }
        truth.theta[g] = t_sum / static_cast<double>(mc_size);
        truth.theta_second[g] = s_sum / static_cast<double>(mc_size);
    }
    return truth;
}

double true_cate(const DgpSpec& spec, double v, std::int64_t mc_size, std::uint64_t seed,
                 Exec exec) {
    Eigen::VectorXd grid(1);
    grid[0] = v;
    return true_cate_curve(spec, grid, mc_size, seed, exec).theta[0];
}

double true_ate(const DgpSpec& spec, std::int64_t mc_size, std::uint64_t seed, Exec exec) {
    if (spec.outcome_kind == OutcomeKind::Continuous) {
        // E[tau(V)] with V ~ N(0,1): t0 + t2.
        return spec.tau_coefficients[0] + spec.tau_coefficients[2];
    }
    // Integrate the binary CATE over V ~ N(0,1) by sharded MC as well.
    const std::int64_t n_shards = (mc_size + kTruthShardSize - 1) / kTruthShardSize;
    std::vector<double> acc(n_shards, 0.0);
    const std::uint64_t shard_master = derive_seed(seed, stream::kTruthShard + 17);
    for_each_index(n_shards, exec, [&](std::int64_t shard) {
        std::int64_t count = std::min<std::int64_t>(kTruthShardSize,
                                                    mc_size - shard * kTruthShardSize);
        std::mt19937_64 rng = make_rng(shard_master, static_cast<std::uint64_t>(shard));
        std::normal_distribution<double> normal(0.0, 1.0);
        double sum = 0.0;
        for (std::int64_t i = 0; i < count; ++i) {
            double x1 = normal(rng), x2 = normal(rng), x3 = normal(rng);
            sum += expit(binary_eta(x1, x2, x3, 1)) - expit(binary_eta(x1, x2, x3, 0));
        }
        acc[shard] = sum;
    });
    double total = 0.0;
    for (double s : acc) total += s;
    return total / static_cast<double>(mc_size);
}

NuisanceFunctions oracle_nuisances(const ResolvedDgp& dgp) {
    const DgpSpec spec = dgp.spec;
    const double b0 = dgp.selection_intercept;
    NuisanceFunctions fns;
    fns.selection = [spec, b0](const Eigen::RowVectorXd& x) {
        return expit(b0 + spec.selection_slopes[0] * x[0] + spec.selection_slopes[1] * x[1] +
                     spec.selection_slopes[2] * x[2]);
    };
    fns.treatment = [spec](const Eigen::RowVectorXd&) { return spec.treatment_probability; };
    if (spec.outcome_kind == OutcomeKind::Continuous) {
        fns.outcome1 = [spec](const Eigen::RowVectorXd& x) {
            return continuous_mean(spec, x[0], x[1], x[2], 1);
        };
        fns.outcome0 = [spec](const Eigen::RowVectorXd& x) {
            return continuous_mean(spec, x[0], x[1], x[2], 0);
        };
    } else {
        fns.outcome1 = [](const Eigen::RowVectorXd& x) {
            return expit(binary_eta(x[0], x[1], x[2], 1));
        };
        fns.outcome0 = [](const Eigen::RowVectorXd& x) {
            return expit(binary_eta(x[0], x[1], x[2], 0));
        };
    }
    return fns;
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
    case EstimatorKind::Proposed: return "proposed";
    case EstimatorKind::Naive: return "naive";
    case EstimatorKind::OracleForm: return "oracle_form";
    case EstimatorKind::TrialOnly: return "trial_only";
    }
    return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
    if (s == "proposed") return EstimatorKind::Proposed;
    if (s == "naive") return EstimatorKind::Naive;
    if (s == "oracle_form") return EstimatorKind::OracleForm;
    if (s == "trial_only") return EstimatorKind::TrialOnly;
    throw ConfigError("unknown estimator '" + s + "'");
}

EstimatorCurve fit_polynomial_baseline(const Eigen::VectorXd& v, const Eigen::VectorXd& xi,
                                       int degree, const Eigen::VectorXd& grid) {
    const int n = static_cast<int>(v.size());
    const int k = degree + 1;
    Eigen::MatrixXd B(n, k);
    for (int i = 0; i < n; ++i) {
        double pow_v = 1.0;
        for (int j = 0; j < k; ++j) {
            B(i, j) = pow_v;
            pow_v *= v[i];
        }
    }
    Eigen::MatrixXd A = B.transpose() * B;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eigen::VectorXd beta = ldlt.solve(B.transpose() * xi);
    if (!beta.allFinite()) {
        for (int j = 0; j < k; ++j) A(j, j) += 1e-10;
        beta = Eigen::LDLT<Eigen::MatrixXd>(A).solve(B.transpose() * xi);
    }
    Eigen::VectorXd resid = xi - B * beta;
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < n; ++i)
        meat += resid[i] * resid[i] * B.row(i).transpose() * B.row(i);
    Eigen::MatrixXd cov = ldlt.solve(ldlt.solve(meat).transpose());

    const int m = static_cast<int>(grid.size());
    EstimatorCurve out;
    out.theta.resize(m);
    out.se.resize(m);
    out.lo.resize(m);
    out.hi.resize(m);
    for (int g = 0; g < m; ++g) {
        Eigen::VectorXd x0(k);
        double pow_v = 1.0;
        for (int j = 0; j < k; ++j) {
            x0[j] = pow_v;
            pow_v *= grid[g];
        }
        double theta = x0.dot(beta);
        double var = x0.dot(cov * x0);
        double se = std::sqrt(std::max(0.0, var));
        out.theta[g] = theta;
        out.se[g] = se;
        out.lo[g] = theta - 1.96 * se;
        out.hi[g] = theta + 1.96 * se;
    }
    return out;
}

namespace {

EstimatorCurve curve_from_cate(const CateCurve& c) {
    EstimatorCurve out;
    out.theta = c.theta_hat;
    out.se = c.se;
    out.lo = c.ci_lower;
    out.hi = c.ci_upper;
    out.bandwidth = c.bandwidth;
    return out;
}

} // namespace

ReplicateResult run_replicate(const ResolvedDgp& dgp,
                              const std::array<bool, kEstimatorCount>& estimators,
                              const PipelineSettings& pipeline, const Eigen::VectorXd& grid,
                              std::uint64_t seed) {
    ReplicateResult result;
    Cohort cohort = generate_cohort(dgp, derive_seed(seed, 1));

    const bool want_shared = estimators[static_cast<int>(EstimatorKind::Proposed)] ||
                             estimators[static_cast<int>(EstimatorKind::Naive)] ||
                             estimators[static_cast<int>(EstimatorKind::OracleForm)];

    if (want_shared) {
        FoldAssignment folds = partition_folds_for_cohort(
            cohort, pipeline.crossfit.n_folds, derive_seed(seed, 2),
            pipeline.crossfit.stratify_folds_by_s);
        NuisanceFits nuis =
            fit_nuisances(cohort, folds, pipeline.crossfit, derive_seed(seed, 3), Exec::Serial);
        PseudoOutcomes pseudo = build_pseudo_outcomes(cohort, nuis, PseudoArm::Cate);

        if (estimators[static_cast<int>(EstimatorKind::Proposed)]) {
            CateCurve c = estimate_cate_curve(pseudo, grid, pipeline.bandwidth,
                                              derive_seed(seed, 4), Exec::Serial);
            result.curves[static_cast<int>(EstimatorKind::Proposed)] = curve_from_cate(c);
        }
        if (estimators[static_cast<int>(EstimatorKind::Naive)])
            result.curves[static_cast<int>(EstimatorKind::Naive)] =
                fit_polynomial_baseline(pseudo.v, pseudo.xi, 1, grid);
        if (estimators[static_cast<int>(EstimatorKind::OracleForm)])
            result.curves[static_cast<int>(EstimatorKind::OracleForm)] =
                fit_polynomial_baseline(pseudo.v, pseudo.xi, 2, grid);
    }

    if (estimators[static_cast<int>(EstimatorKind::TrialOnly)]) {
        Cohort trial = trial_subcohort(cohort);
        CrossfitConfig cfg = pipeline.crossfit;
        cfg.selection_identically_one = true;
        FoldAssignment folds = partition_folds_for_cohort(trial, cfg.n_folds,
                                                          derive_seed(seed, 5), false);
        NuisanceFits nuis = fit_nuisances(trial, folds, cfg, derive_seed(seed, 6), Exec::Serial);
        PseudoOutcomes pseudo = build_pseudo_outcomes(trial, nuis, PseudoArm::Cate);
        CateCurve c = estimate_cate_curve(pseudo, grid, pipeline.bandwidth, derive_seed(seed, 7),
                                          Exec::Serial);
        result.curves[static_cast<int>(EstimatorKind::TrialOnly)] = curve_from_cate(c);
    }
    return result;
}

EstimatorMetrics integrated_metrics(const std::vector<EstimatorCurve>& replicates,
                                    const TruthCurve& truth, const Eigen::VectorXd& grid,
                                    double trim_fraction, bool trim_enabled) {
    if (replicates.size() < 2)
        throw DataError("integrated_metrics: need at least two replicates");
    const int m = static_cast<int>(grid.size());
    if (truth.theta.size() != m)
        throw DataError("integrated_metrics: grid/truth length mismatch");

    EstimatorMetrics out;
    out.replicates = static_cast<int>(replicates.size());
    out.trimmed = trim_enabled && trim_fraction > 0.0;
    out.mean_theta.resize(m);
    out.abs_bias.resize(m);
    out.rmse.resize(m);
    out.cover_truth_pct.resize(m);

    bool any_bandwidth = false;
    for (const auto& rep : replicates)
        if (std::isfinite(rep.bandwidth)) any_bandwidth = true;

    double bias_sum = 0, rmse_sum = 0, cov_truth_sum = 0, cov_star_sum = 0, cov_mean_sum = 0;
    int used_points = 0;

    for (int g = 0; g < m; ++g) {
        std::vector<int> valid;
        for (std::size_t r = 0; r < replicates.size(); ++r)
            if (std::isfinite(replicates[r].theta[g])) valid.push_back(static_cast<int>(r));
        if (valid.size() < 2) {
            out.mean_theta[g] = kNaN;
            out.abs_bias[g] = kNaN;
            out.rmse[g] = kNaN;
            out.cover_truth_pct[g] = kNaN;
            continue;
        }

        if (out.trimmed) {
            int k = static_cast<int>(valid.size() * trim_fraction / 2.0);
            if (k > 0 && static_cast<int>(valid.size()) > 2 * k) {
                std::sort(valid.begin(), valid.end(), [&](int a, int b) {
                    return replicates[a].theta[g] < replicates[b].theta[g];
                });
                valid = std::vector<int>(valid.begin() + k, valid.end() - k);
                std::sort(valid.begin(), valid.end());
            }
        }

        const double theta_true = truth.theta[g];
        double sum = 0, sumsq = 0;
        int cover_truth = 0, cover_star = 0, cover_mean = 0;
        for (int r : valid) {
            double err = replicates[r].theta[g] - theta_true;
            sum += err;
            sumsq += err * err;
            if (replicates[r].lo[g] <= theta_true && theta_true <= replicates[r].hi[g])
                cover_truth++;
        }
        double mean_err = sum / valid.size();
        double mean_theta = theta_true + mean_err;
        for (int r : valid) {
            if (replicates[r].lo[g] <= mean_theta && mean_theta <= replicates[r].hi[g])
                cover_mean++;
            if (any_bandwidth && std::isfinite(replicates[r].bandwidth)) {
                double star = theta_true +
                              smoothing_bias_reference(truth.theta_second[g],
                                                       replicates[r].bandwidth);
                if (replicates[r].lo[g] <= star && star <= replicates[r].hi[g]) cover_star++;
            }
        }

        out.mean_theta[g] = mean_theta;
        out.abs_bias[g] = std::abs(mean_err);
        out.rmse[g] = std::sqrt(sumsq / valid.size());
        out.cover_truth_pct[g] = 100.0 * cover_truth / valid.size();

        bias_sum += out.abs_bias[g];
        rmse_sum += out.rmse[g];
        cov_truth_sum += out.cover_truth_pct[g];
        cov_mean_sum += 100.0 * cover_mean / valid.size();
        if (any_bandwidth) cov_star_sum += 100.0 * cover_star / valid.size();
        used_points++;
    }

    if (used_points == 0) throw EstimationError("integrated_metrics: no usable grid points");
    out.integrated_abs_bias = bias_sum / used_points;
    out.integrated_rmse = rmse_sum / used_points;
    out.coverage_truth = cov_truth_sum / used_points;
    out.coverage_repmean = cov_mean_sum / used_points;
    if (any_bandwidth) out.coverage_smoothed = cov_star_sum / used_points;
    return out;
}

void SimulationPlan::validate() const {
    if (scenarios.empty()) throw ConfigError("simulation: no scenarios");
    for (const auto& sc : scenarios) {
        sc.dgp.validate();
        if (sc.replicates < 1) throw ConfigError("simulation: replicates must be >= 1");
        if (estimators[static_cast<int>(EstimatorKind::OracleForm)] &&
            sc.dgp.outcome_kind == OutcomeKind::Binary)
            throw ConfigError("simulation: oracle_form requires a continuous outcome");
    }
    bool any = false;
    for (bool e : estimators) any = any || e;
    if (!any) throw ConfigError("simulation: no estimators selected");
    if (grid_points < 2) throw ConfigError("simulation: grid_points must be >= 2");
    if (!(grid_central > 0.0 && grid_central < 1.0))
        throw ConfigError("simulation: grid_central must be in (0,1)");
    if (!(trim_fraction >= 0.0 && trim_fraction < 0.5))
        throw ConfigError("simulation: trim_fraction must be in [0, 0.5)");
    if (truth_mc_size < 1) throw ConfigError("simulation: truth_mc_size must be positive");
    pipeline.crossfit.validate();
    pipeline.bandwidth.validate();
}

Eigen::VectorXd simulation_grid(int points, double central_mass) {
    double z = normal_quantile(0.5 + central_mass / 2.0);
    Eigen::VectorXd grid(points);
    for (int g = 0; g < points; ++g)
        grid[g] = -z + 2.0 * z * g / (points - 1);
    return grid;
}

namespace {

void dump_replicate_curves(const std::filesystem::path& dir, int scenario_index, int replicate,
                           const Eigen::VectorXd& grid, const ReplicateResult& rep) {
    for (int e = 0; e < kEstimatorCount; ++e) {
        if (!rep.curves[e]) continue;
        const EstimatorCurve& c = *rep.curves[e];
        std::vector<std::vector<std::string>> rows;
        for (int g = 0; g < grid.size(); ++g)
            rows.push_back({format_double(grid[g]), format_double(c.theta[g]),
                            format_double(c.se[g]), format_double(c.lo[g]),
                            format_double(c.hi[g])});
        auto name = "scenario" + std::to_string(scenario_index + 1) + "_rep" +
                    std::to_string(replicate + 1) + "_" +
                    to_string(static_cast<EstimatorKind>(e)) + ".csv";
        write_csv(dir / name, {"v", "theta_hat", "se", "ci_lower", "ci_upper"}, rows);
    }
}

} // namespace

SimulationReport run_simulation(const SimulationPlan& plan, Exec exec) {
    plan.validate();
    SimulationReport report;
    report.seed = plan.seed;

    for (std::size_t sc = 0; sc < plan.scenarios.size(); ++sc) {
        const Scenario& scenario = plan.scenarios[sc];
        const std::uint64_t scenario_seed = derive_seed(plan.seed, 500 + sc);
        ResolvedDgp dgp = resolve_dgp(scenario.dgp, scenario_seed);
        Eigen::VectorXd grid = simulation_grid(plan.grid_points, plan.grid_central);
        TruthCurve truth = true_cate_curve(scenario.dgp, grid, plan.truth_mc_size,
                                           derive_seed(scenario_seed, 1), exec);

        const int R = scenario.replicates;
        std::vector<ReplicateResult> reps(R);
        const std::uint64_t rep_master = derive_seed(scenario_seed, stream::kReplicate);
        for_each_index(R, exec, [&](std::int64_t r) {
            reps[r] = run_replicate(dgp, plan.estimators, plan.pipeline, grid,
                                    derive_seed(rep_master, static_cast<std::uint64_t>(r)));
        });

        if (plan.dump_replicates_dir) {
            std::filesystem::create_directories(*plan.dump_replicates_dir);
            for (int r = 0; r < R; ++r)
                dump_replicate_curves(*plan.dump_replicates_dir, static_cast<int>(sc), r, grid,
                                      reps[r]);
        }

        ScenarioResult result;
        result.dgp = scenario.dgp;
        result.replicates = R;
        result.grid = grid;
        result.truth = truth;
        const bool trim_enabled =
            plan.trim_fraction > 0.0 && scenario.dgp.n_s1_target == 125;
        for (int e = 0; e < kEstimatorCount; ++e) {
            if (!plan.estimators[e]) continue;
            std::vector<EstimatorCurve> curves;
            curves.reserve(R);
            for (const auto& rep : reps)
                if (rep.curves[e]) curves.push_back(*rep.curves[e]);
            EstimatorMetrics metrics =
                integrated_metrics(curves, truth, grid, plan.trim_fraction, trim_enabled);
            metrics.estimator = to_string(static_cast<EstimatorKind>(e));
            result.metrics.push_back(std::move(metrics));
        }
        report.scenarios.push_back(std::move(result));
    }
    return report;
}

} // namespace catgen
