#include <doctest.h>

#include <cmath>
#include <random>

#include "catgen/mathutil.hpp"
#include "catgen/rng.hpp"
#include "catgen/simulation.hpp"

using namespace catgen;

namespace {

PipelineSettings glm_pipeline() {
    PipelineSettings p;
    p.crossfit.library = {LearnerSpec{LearnerKind::GlmMainEffects}};
    p.crossfit.n_folds = 5;
    p.crossfit.super_learner_folds = 5;
    return p;
}

} // namespace

TEST_CASE("generate_cohort: X-independent selection hits binomial concentration") {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Continuous;
    spec.n = 5000;
    spec.n_s1_target = 1000; // p = 0.2
    spec.selection_slopes = {0.0, 0.0, 0.0};
    ResolvedDgp dgp = resolve_dgp(spec, 1);
    CHECK(std::abs(dgp.selection_intercept - logit(0.2)) < 0.01);

    Cohort cohort = generate_cohort(dgp, 1);
    double expected = 1000.0, band = 4.0 * std::sqrt(5000 * 0.2 * 0.8);
    CHECK(std::abs(cohort.n_s1() - expected) < band);
    cohort.validate();
}

TEST_CASE("generate_cohort: noiseless continuous outcomes reproduce the mean formula") {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Continuous;
    spec.n = 400;
    spec.n_s1_target = 150;
    spec.noise_sd = 0.0;
    ResolvedDgp dgp = resolve_dgp(spec, 2);
    Cohort cohort = generate_cohort(dgp, 2);
    for (int i = 0; i < cohort.n(); ++i) {
        if (cohort.s[i] != 1) continue;
        double x1 = cohort.covariates(i, 0), x2 = cohort.covariates(i, 1),
               x3 = cohort.covariates(i, 2);
        double tau = 1.0 + x2 - 0.5 * x2 * x2;
        double mean = 1.0 + x1 + x2 + x3 + cohort.a[i] * tau;
        CHECK(cohort.y[i] == mean);
    }
}

TEST_CASE("generate_cohort: calibrated trial size lands in a 10% band") {
    DgpSpec spec; // binary defaults, n=2500, target 1000
    ResolvedDgp dgp = resolve_dgp(spec, 3);
    int hits = 0;
    for (int seed = 0; seed < 100; ++seed) {
        Cohort cohort = generate_cohort(dgp, 1000 + seed);
        if (cohort.n_s1() >= 900 && cohort.n_s1() <= 1100) ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("generate_cohort: exact trial size option") {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Binary;
    spec.n = 1200;
    spec.n_s1_target = 333;
    spec.exact_trial_size = true;
    ResolvedDgp dgp = resolve_dgp(spec, 4);
    for (int seed = 0; seed < 5; ++seed)
        CHECK(generate_cohort(dgp, seed).n_s1() == 333);
}

TEST_CASE("true_cate: continuous closed form") {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Continuous;
    CHECK(true_cate(spec, 0.0, 0, 0) == 1.0);
    CHECK(true_cate(spec, 1.0, 0, 0) == 1.5);
    CHECK(true_ate(spec, 0, 0) == 0.5);

    // The closed form agrees with Monte Carlo integration over (X1, X3).
    Eigen::VectorXd grid = simulation_grid(11, 0.90);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int g = 0; g < grid.size(); ++g) {
        double v = grid[g];
        double acc = 0.0;
        const int mc = 1000000;
        for (int i = 0; i < mc; ++i) {
            double x1 = normal(rng), x3 = normal(rng);
            double y1 = 1.0 + x1 + v + x3 + (1.0 + v - 0.5 * v * v);
            double y0 = 1.0 + x1 + v + x3;
            acc += y1 - y0;
        }
        CHECK(std::abs(acc / mc - true_cate(spec, v, 0, 0)) < 0.005);
    }
}

TEST_CASE("true_cate: binary MC self-consistency at the reported precision") {
    DgpSpec spec; // binary
    double a = true_cate(spec, 0.0, 10000000, 11, Exec::OpenMP);
    double b = true_cate(spec, 0.0, 10000000, 12, Exec::OpenMP);
    CHECK(std::abs(a - b) < 0.001);
    CHECK(a > 0.0); // treatment helps at v=0 under this design
}

TEST_CASE("true_cate_curve: second derivative matches finite differences") {
    DgpSpec spec; // binary
    const double dv = 0.25;
    Eigen::VectorXd grid(3);
    grid << -dv, 0.0, dv;
    TruthCurve t = true_cate_curve(spec, grid, 4000000, 13, Exec::OpenMP);
    double fd = (t.theta[0] - 2.0 * t.theta[1] + t.theta[2]) / (dv * dv);
    CHECK(std::abs(fd - t.theta_second[1]) < 0.02);
}

TEST_CASE("oracle nuisances evaluate the data-generating process") {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Binary;
    ResolvedDgp dgp = resolve_dgp(spec, 5);
    NuisanceFunctions fns = oracle_nuisances(dgp);
    Eigen::RowVectorXd x(3);
    x << 0.3, -0.7, 1.1;
    double eta = dgp.selection_intercept + 0.6 * 0.3 + (-0.3) * (-0.7) + 0.6 * 1.1;
    CHECK(fns.selection(x) == doctest::Approx(expit(eta)).epsilon(1e-12));
    CHECK(fns.treatment(x) == 0.5);
    CHECK(fns.outcome1(x) ==
          doctest::Approx(expit(-0.5 + 0.5 * 0.3 + 0.5 * (-0.7) + 0.3 * 1.1 + 0.8 +
                                0.6 * (-0.7)))
              .epsilon(1e-12));
}

TEST_CASE("run_replicate: noiseless constant effect is recovered by every estimator") {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Continuous;
    spec.n = 400;
    spec.n_s1_target = 160;
    spec.noise_sd = 0.0;
    spec.tau_coefficients = {2.0, 0.0, 0.0};
    ResolvedDgp dgp = resolve_dgp(spec, 6);

    Eigen::VectorXd grid = simulation_grid(11, 0.90);
    std::array<bool, kEstimatorCount> all{true, true, true, true};
    ReplicateResult rep = run_replicate(dgp, all, glm_pipeline(), grid, 77);
    for (int e = 0; e < kEstimatorCount; ++e) {
        REQUIRE(rep.curves[e].has_value());
        for (int g = 0; g < grid.size(); ++g)
            CHECK(rep.curves[e]->theta[g] == doctest::Approx(2.0).epsilon(1e-6));
    }
    CHECK(std::isfinite(rep.curves[0]->bandwidth));
    CHECK(std::isnan(rep.curves[1]->bandwidth));
}

TEST_CASE("fit_polynomial_baseline: exact quadratic and sandwich sanity") {
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(60, -2.0, 2.0);
    Eigen::VectorXd xi = 1.0 + v.array() - 0.5 * v.array().square();
    Eigen::VectorXd grid(3);
    grid << -1.0, 0.0, 1.0;
    EstimatorCurve curve = fit_polynomial_baseline(v, xi, 2, grid);
    CHECK(curve.theta[0] == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(curve.theta[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(curve.theta[2] == doctest::Approx(1.5).epsilon(1e-9));
    for (int g = 0; g < 3; ++g) CHECK(curve.se[g] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("integrated_metrics: exact replicates, hand arithmetic, trimming") {
    Eigen::VectorXd grid(2);
    grid << 0.0, 1.0;
    TruthCurve truth;
    truth.theta.resize(2);
    truth.theta << 1.0, 2.0;
    truth.theta_second = Eigen::VectorXd::Zero(2);

    auto curve_with = [&](double at0, double at1) {
        EstimatorCurve c;
        c.theta.resize(2);
        c.theta << at0, at1;
        c.se = Eigen::VectorXd::Constant(2, 0.2);
        c.lo = c.theta.array() - 1.96 * 0.2;
        c.hi = c.theta.array() + 1.96 * 0.2;
        return c;
    };

    // Every replicate exactly right: zero bias/rmse, full coverage.
    std::vector<EstimatorCurve> exact{curve_with(1.0, 2.0), curve_with(1.0, 2.0),
                                      curve_with(1.0, 2.0)};
    EstimatorMetrics m = integrated_metrics(exact, truth, grid, 0.0, false);
    CHECK(m.integrated_abs_bias == 0.0);
    CHECK(m.integrated_rmse == 0.0);
    CHECK(m.coverage_truth == 100.0);
    CHECK(m.coverage_repmean == 100.0);

    // Two replicates, errors +0.1 / -0.1 at both grid points.
    std::vector<EstimatorCurve> pm{curve_with(1.1, 2.1), curve_with(0.9, 1.9)};
    EstimatorMetrics m2 = integrated_metrics(pm, truth, grid, 0.0, false);
    CHECK(m2.integrated_abs_bias == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(m2.integrated_rmse == doctest::Approx(0.1).epsilon(1e-12));

    // Trimming removes symmetric extremes before metrics.
    std::vector<EstimatorCurve> wild;
    for (int r = 0; r < 98; ++r) wild.push_back(curve_with(1.0, 2.0));
    wild.push_back(curve_with(100.0, 2.0));
    wild.push_back(curve_with(-100.0, 2.0));
    EstimatorMetrics untrimmed = integrated_metrics(wild, truth, grid, 0.05, false);
    EstimatorMetrics trimmed = integrated_metrics(wild, truth, grid, 0.05, true);
    CHECK(untrimmed.integrated_rmse > 1.0);
    CHECK(trimmed.integrated_rmse == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(trimmed.trimmed);
    CHECK(!untrimmed.trimmed);

    // Grid/truth mismatch is an input error.
    TruthCurve short_truth;
    short_truth.theta = Eigen::VectorXd::Ones(1);
    short_truth.theta_second = Eigen::VectorXd::Zero(1);
    CHECK_THROWS_AS(integrated_metrics(exact, short_truth, grid, 0.0, false), DataError);
    CHECK_THROWS_AS(integrated_metrics({exact[0]}, truth, grid, 0.0, false), DataError);
}

TEST_CASE("simulation_grid covers the central mass symmetrically") {
    Eigen::VectorXd grid = simulation_grid(41, 0.90);
    CHECK(grid.size() == 41);
    CHECK(grid[0] == doctest::Approx(-1.6448536269514722).epsilon(1e-9));
    CHECK(grid[40] == doctest::Approx(1.6448536269514722).epsilon(1e-9));
    CHECK(grid[20] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("run_simulation: small end-to-end plan with sane outputs") {
    SimulationPlan plan;
    Scenario sc;
    sc.dgp.outcome_kind = OutcomeKind::Continuous;
    sc.dgp.n = 300;
    sc.dgp.n_s1_target = 120;
    sc.replicates = 3;
    plan.scenarios = {sc};
    plan.estimators = {true, true, false, false};
    plan.pipeline = glm_pipeline();
    plan.grid_points = 11;
    plan.truth_mc_size = 1000;
    plan.seed = 42;

    SimulationReport report = run_simulation(plan, Exec::OpenMP);
    REQUIRE(report.scenarios.size() == 1);
    REQUIRE(report.scenarios[0].metrics.size() == 2);
    for (const auto& m : report.scenarios[0].metrics) {
        CHECK(m.replicates == 3);
        CHECK(m.coverage_truth >= 0.0);
        CHECK(m.coverage_truth <= 100.0);
        CHECK(std::isfinite(m.integrated_abs_bias));
        CHECK(std::isfinite(m.integrated_rmse));
    }
}
