// Serial-vs-OpenMP comparison for the data-parallel kernels. Both paths run
// the same slot-based algorithms, so outputs are bitwise identical; this
// target measures the speedup.

#include <benchmark/benchmark.h>

#include "catgen/simulation.hpp"
#include "catgen/smoother.hpp"

using namespace catgen;

namespace {

PseudoOutcomes synthetic_pseudo(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    PseudoOutcomes pseudo;
    pseudo.v.resize(n);
    pseudo.xi.resize(n);
    for (int i = 0; i < n; ++i) {
        pseudo.v[i] = normal(rng);
        pseudo.xi[i] = 1.0 + pseudo.v[i] - 0.5 * pseudo.v[i] * pseudo.v[i] + 0.8 * normal(rng);
    }
    return pseudo;
}

Eigen::VectorXd linspace(double lo, double hi, int m) {
    Eigen::VectorXd grid(m);
    for (int g = 0; g < m; ++g) grid[g] = lo + (hi - lo) * g / (m - 1);
    return grid;
}

void bench_curve(benchmark::State& state, Exec exec) {
    PseudoOutcomes pseudo = synthetic_pseudo(20000, 9);
    Eigen::VectorXd grid = linspace(-1.6, 1.6, 201);
    BandwidthSpec bw;
    bw.mode = BandwidthSpec::Mode::Fixed;
    bw.fixed_h = 0.3;
    for (auto _ : state) {
        CateCurve curve = estimate_cate_curve(pseudo, grid, bw, 1, exec);
        benchmark::DoNotOptimize(curve.theta_hat.data());
    }
}

void bench_bandwidth_cv(benchmark::State& state, Exec exec) {
    PseudoOutcomes pseudo = synthetic_pseudo(4000, 11);
    std::vector<double> grid = default_bandwidth_grid(pseudo.v);
    for (auto _ : state) {
        auto sel = select_bandwidth_cv(pseudo.v, pseudo.xi, grid, 5, 1, exec);
        benchmark::DoNotOptimize(sel.h_star);
    }
}

void bench_pseudo_outcomes(benchmark::State& state, Exec exec) {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Continuous;
    spec.n = 200000;
    spec.n_s1_target = 80000;
    ResolvedDgp dgp = resolve_dgp(spec, 5);
    Cohort cohort = generate_cohort(dgp, 5);
    NuisanceFits fits = evaluate_nuisance_functions(cohort, oracle_nuisances(dgp), 0.01);
    for (auto _ : state) {
        PseudoOutcomes pseudo = build_pseudo_outcomes(cohort, fits, PseudoArm::Cate, exec);
        benchmark::DoNotOptimize(pseudo.xi.data());
    }
}

void bench_truth_mc(benchmark::State& state, Exec exec) {
    DgpSpec spec;
    spec.outcome_kind = OutcomeKind::Binary;
    Eigen::VectorXd grid = linspace(-1.6, 1.6, 41);
    for (auto _ : state) {
        TruthCurve truth = true_cate_curve(spec, grid, 1000000, 3, exec);
        benchmark::DoNotOptimize(truth.theta.data());
    }
}

void bench_forest_fit(benchmark::State& state, Exec exec) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 5000, p = 3;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) X(i, j) = normal(rng);
        y[i] = std::sin(X(i, 0)) + X(i, 1) * X(i, 2) + 0.3 * normal(rng);
    }
    LearnerSpec spec;
    spec.kind = LearnerKind::RandomForest;
    spec.forest_trees = 100;
    for (auto _ : state) {
        FittedModel model = fit_learner(X, y, spec, Link::Identity, 13, exec);
        benchmark::DoNotOptimize(&model);
    }
}

} // namespace

BENCHMARK_CAPTURE(bench_curve, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_curve, openmp, Exec::OpenMP)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_bandwidth_cv, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_bandwidth_cv, openmp, Exec::OpenMP)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_pseudo_outcomes, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_pseudo_outcomes, openmp, Exec::OpenMP)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_truth_mc, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_truth_mc, openmp, Exec::OpenMP)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_forest_fit, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bench_forest_fit, openmp, Exec::OpenMP)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
