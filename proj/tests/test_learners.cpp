#include <doctest.h>

#include <cmath>
#include <random>

#include "catgen/learners.hpp"
#include "catgen/mathutil.hpp"

using namespace catgen;

namespace {

LearnerSpec spec_of(LearnerKind kind) {
    LearnerSpec spec;
    spec.kind = kind;
    return spec;
}

// Independent stump-boosting oracle: exhaustive threshold search per round
// over a fixed 50-point grid of training quantiles.
struct StumpOracle {
    struct Stump {
        double threshold, left, right;
    };
    double baseline = 0.0;
    std::vector<Stump> stumps;
    double rate;

    StumpOracle(const std::vector<double>& x, const std::vector<double>& y, int rounds,
                double learning_rate)
        : rate(learning_rate) {
        const int n = static_cast<int>(x.size());
        std::vector<double> sorted = x;
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> grid(50);
        for (int g = 0; g < 50; ++g) grid[g] = sorted[(n - 1) * (g + 1) / 51];

        baseline = 0.0;
        for (double v : y) baseline += v;
        baseline /= n;
        std::vector<double> resid(y);
        for (double& r : resid) r -= baseline;

        for (int round = 0; round < rounds; ++round) {
            double best_sse = std::numeric_limits<double>::infinity();
            Stump best{0, 0, 0};
            for (double t : grid) {
                double suml = 0, sumr = 0;
                int nl = 0, nr = 0;
                for (int i = 0; i < n; ++i)
                    if (x[i] <= t) {
                        suml += resid[i];
                        nl++;
                    } else {
                        sumr += resid[i];
                        nr++;
                    }
                if (nl == 0 || nr == 0) continue;
                double ml = suml / nl, mr = sumr / nr;
                double sse = 0;
                for (int i = 0; i < n; ++i) {
                    double e = resid[i] - (x[i] <= t ? ml : mr);
                    sse += e * e;
                }
                if (sse < best_sse) {
                    best_sse = sse;
                    best = {t, ml, mr};
                }
            }
            for (int i = 0; i < n; ++i)
                resid[i] -= rate * (x[i] <= best.threshold ? best.left : best.right);
            stumps.push_back(best);
        }
    }

    double predict(double x) const {
        double p = baseline;
        for (const auto& s : stumps) p += rate * (x <= s.threshold ? s.left : s.right);
        return p;
    }
};

// Exhaustive simplex grid search for up to three members.
double simplex_grid_min(const Eigen::MatrixXd& P, const Eigen::VectorXd& t, double resolution) {
    const int K = static_cast<int>(P.cols());
    REQUIRE(K <= 3);
    double best = std::numeric_limits<double>::infinity();
    const int steps = static_cast<int>(std::lround(1.0 / resolution));
    auto eval = [&](double w0, double w1, double w2) {
        Eigen::VectorXd w(K);
        w[0] = w0;
        if (K > 1) w[1] = w1;
        if (K > 2) w[2] = w2;
        best = std::min(best, (P * w - t).squaredNorm());
    };
    if (K == 1) return (P * Eigen::VectorXd::Ones(1) - t).squaredNorm();
    for (int i = 0; i <= steps; ++i) {
        double w0 = static_cast<double>(i) / steps;
        if (K == 2) {
            eval(w0, 1.0 - w0, 0.0);
        } else {
            for (int j = 0; i + j <= steps; ++j) {
                double w1 = static_cast<double>(j) / steps;
                eval(w0, w1, 1.0 - w0 - w1);
            }
        }
    }
    return best;
}

} // namespace

TEST_CASE("fit_learner: intercept-only data reproduces the constant") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(20, 1);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 3.0);
    FittedModel model = fit_learner(X, y, spec_of(LearnerKind::GlmMainEffects), Link::Identity, 1);
    Eigen::MatrixXd Xnew(3, 1);
    Xnew << -5.0, 0.0, 7.5;
    Eigen::VectorXd pred = model.predict(Xnew);
    for (int i = 0; i < 3; ++i) CHECK(pred[i] == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("fit_learner: separable logistic data stays in (0,1) and beats the null model") {
    const int n = 40;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = i < n / 2 ? -1.0 - 0.1 * i : 1.0 + 0.1 * (i - n / 2);
        y[i] = i < n / 2 ? 0.0 : 1.0;
    }
    FittedModel model = fit_learner(X, y, spec_of(LearnerKind::GlmMainEffects), Link::Logit, 1);
    Eigen::VectorXd p = model.predict(X);
    double log_loss = 0.0, null_loss = 0.0;
    for (int i = 0; i < n; ++i) {
        CHECK(p[i] > 0.0);
        CHECK(p[i] < 1.0);
        log_loss -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
        null_loss -= y[i] * std::log(0.5) + (1 - y[i]) * std::log(0.5);
    }
    CHECK(log_loss < null_loss);
}

TEST_CASE("fit_learner: boosted trees track an independent stump-boosting oracle") {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::uniform_real_distribution<double> ux(-2.0, 2.0);
    const int n = 2000, n_test = 600;
    Eigen::MatrixXd X(n, 1), Xt(n_test, 1);
    Eigen::VectorXd y(n), yt(n_test);
    std::vector<double> xv(n), yv(n);
    for (int i = 0; i < n; ++i) {
        double x = ux(rng);
        X(i, 0) = xv[i] = x;
        y[i] = yv[i] = std::sin(3.0 * x) + noise(rng);
    }
    for (int i = 0; i < n_test; ++i) {
        double x = ux(rng);
        Xt(i, 0) = x;
        yt[i] = std::sin(3.0 * x) + noise(rng);
    }

    LearnerSpec spec = spec_of(LearnerKind::BoostedStumps);
    spec.boost_rounds = 500;
    spec.boost_learning_rate = 0.1;
    spec.boost_max_depth = 2;
    FittedModel model = fit_learner(X, y, spec, Link::Identity, 5);
    double impl_mse = (model.predict(Xt) - yt).squaredNorm() / n_test;

    StumpOracle oracle(xv, yv, 500, 0.1);
    double oracle_mse = 0.0;
    for (int i = 0; i < n_test; ++i) {
        double e = oracle.predict(Xt(i, 0)) - yt[i];
        oracle_mse += e * e;
    }
    oracle_mse /= n_test;

    CHECK(impl_mse <= 2.0 * oracle_mse);
    CHECK(impl_mse < 0.05); // noise floor is 0.01
}

TEST_CASE("random forest fits a smooth surface and is seed-deterministic") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 1200;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) X(i, j) = normal(rng);
        y[i] = X(i, 0) + 0.5 * X(i, 1) * X(i, 1) + 0.1 * normal(rng);
    }
    LearnerSpec spec = spec_of(LearnerKind::RandomForest);
    spec.forest_trees = 60;
    FittedModel a = fit_learner(X, y, spec, Link::Identity, 11);
    FittedModel b = fit_learner(X, y, spec, Link::Identity, 11);
    Eigen::VectorXd pa = a.predict(X), pb = b.predict(X);
    CHECK(pa == pb); // bitwise determinism
    double mse = (pa - y).squaredNorm() / n;
    double var = (y.array() - y.mean()).square().sum() / n;
    CHECK(mse < 0.5 * var);

    FittedModel c = fit_learner(X, y, spec, Link::Identity, 11, Exec::OpenMP);
    CHECK(c.predict(X) == pa); // parallel tree fitting, same bits
}

TEST_CASE("predict: dimension and input checks") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(10, 2);
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 1);
    FittedModel model = fit_learner(X, y, spec_of(LearnerKind::GlmMainEffects), Link::Identity, 1);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(4, 3);
    CHECK_THROWS_AS(model.predict(bad), DataError);

    Eigen::MatrixXd nan_x = X;
    nan_x(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit_learner(nan_x, y, spec_of(LearnerKind::GlmMainEffects), Link::Identity, 1),
                    DataError);
}

TEST_CASE("learner spec validation rejects out-of-range hyperparameters") {
    LearnerSpec spec = spec_of(LearnerKind::BoostedStumps);
    spec.boost_learning_rate = 1.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = spec_of(LearnerKind::RidgePoly2);
    spec.ridge_lambda = -1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = spec_of(LearnerKind::RandomForest);
    spec.forest_min_leaf = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("ensemble predictions are convex combinations") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(12, 1);
    FittedModel m1 = fit_learner(X, Eigen::VectorXd::Constant(12, 1.0),
                                 spec_of(LearnerKind::GlmMainEffects), Link::Identity, 1);
    FittedModel m3 = fit_learner(X, Eigen::VectorXd::Constant(12, 3.0),
                                 spec_of(LearnerKind::GlmMainEffects), Link::Identity, 1);

    EnsembleModel ens;
    ens.library = {spec_of(LearnerKind::GlmMainEffects), spec_of(LearnerKind::GlmMainEffects)};
    ens.members.emplace_back(m1);
    ens.members.emplace_back(m3);
    ens.link = Link::Identity;
    ens.weights = Eigen::Vector2d(1.0, 0.0);
    Eigen::MatrixXd Xnew = Eigen::MatrixXd::Ones(5, 1);
    Eigen::VectorXd degenerate = ens.predict(Xnew);
    Eigen::VectorXd alone = m1.predict(Xnew);
    for (int i = 0; i < 5; ++i) CHECK(degenerate[i] == doctest::Approx(alone[i]).epsilon(1e-12));

    ens.weights = Eigen::Vector2d(0.5, 0.5);
    Eigen::VectorXd mixed = ens.predict(Xnew);
    for (int i = 0; i < 5; ++i) CHECK(mixed[i] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("solve_simplex_weights: vertices, exact columns, grid-search oracle") {
    CHECK(solve_simplex_weights(Eigen::MatrixXd::Ones(5, 1), Eigen::VectorXd::Ones(5))[0] == 1.0);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    {
        const int n = 100;
        Eigen::MatrixXd P(n, 2);
        Eigen::VectorXd t(n);
        for (int i = 0; i < n; ++i) {
            t[i] = normal(rng);
            P(i, 0) = t[i];
            P(i, 1) = normal(rng);
        }
        Eigen::VectorXd w = solve_simplex_weights(P, t);
        CHECK(w[0] >= 0.999);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
    {
        const int n = 200;
        Eigen::MatrixXd P(n, 3);
        Eigen::VectorXd t(n);
        for (int i = 0; i < n; ++i) {
            t[i] = normal(rng);
            for (int k = 0; k < 3; ++k) P(i, k) = 0.5 * t[i] + normal(rng);
        }
        Eigen::VectorXd w = solve_simplex_weights(P, t);
        CHECK(w.minCoeff() >= 0.0);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
        double obj = (P * w - t).squaredNorm();
        double grid_obj = simplex_grid_min(P, t, 0.005);
        CHECK(obj <= grid_obj + 1e-6);
    }
}

TEST_CASE("fit_super_learner: dominant member, single member, tie-breaking") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 300;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = normal(rng);
        X(i, 1) = normal(rng);
        y[i] = 2.0 + X(i, 0) - 0.5 * X(i, 1); // exactly linear, noiseless
    }

    // A heavily-penalized ridge member is effectively the constant predictor;
    // the plain GLM reaches zero CV risk and takes all the weight.
    LearnerSpec constant_ish = spec_of(LearnerKind::RidgePoly2);
    constant_ish.ridge_lambda = 1e12;
    EnsembleModel ens = fit_super_learner(X, y, {constant_ish, spec_of(LearnerKind::GlmMainEffects)},
                                          5, Link::Identity, 9);
    CHECK(ens.weights[1] >= 0.99);

    EnsembleModel solo =
        fit_super_learner(X, y, {spec_of(LearnerKind::GlmMainEffects)}, 5, Link::Identity, 9);
    CHECK(solo.weights.size() == 1);
    CHECK(solo.weights[0] == 1.0);

    // Identical members: equal weights by the tie rule, and the objective is
    // no worse than a fine grid search over the simplex.
    EnsembleModel tie = fit_super_learner(
        X, y, {spec_of(LearnerKind::GlmMainEffects), spec_of(LearnerKind::GlmMainEffects)}, 5,
        Link::Identity, 9);
    CHECK(tie.weights[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(tie.weights[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("fit_super_learner: determinism, parallel equality, library permutation") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 240;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = normal(rng);
        X(i, 1) = normal(rng);
        y[i] = std::sin(X(i, 0)) + 0.3 * X(i, 1) + 0.2 * normal(rng);
    }
    LearnerSpec forest = spec_of(LearnerKind::RandomForest);
    forest.forest_trees = 30;
    LearnerSpec boost = spec_of(LearnerKind::BoostedStumps);
    boost.boost_rounds = 80;
    std::vector<LearnerSpec> library{spec_of(LearnerKind::GlmMainEffects), boost, forest};

    EnsembleModel a = fit_super_learner(X, y, library, 5, Link::Identity, 21);
    EnsembleModel b = fit_super_learner(X, y, library, 5, Link::Identity, 21);
    CHECK(a.weights == b.weights);
    CHECK(a.predict(X) == b.predict(X));

    EnsembleModel c = fit_super_learner(X, y, library, 5, Link::Identity, 21, WeightLoss::Squared,
                                        Exec::OpenMP);
    CHECK(c.weights == a.weights);
    CHECK(c.predict(X) == a.predict(X));

    std::vector<LearnerSpec> permuted{boost, forest, spec_of(LearnerKind::GlmMainEffects)};
    EnsembleModel d = fit_super_learner(X, y, permuted, 5, Link::Identity, 21);
    CHECK(d.weights[2] == doctest::Approx(a.weights[0]).epsilon(1e-9));
    CHECK(d.weights[0] == doctest::Approx(a.weights[1]).epsilon(1e-9));
    CHECK(d.weights[1] == doctest::Approx(a.weights[2]).epsilon(1e-9));
}

TEST_CASE("fit_super_learner: simplex solution beats every single member") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 500;
    Eigen::MatrixXd P(n, 3);
    Eigen::VectorXd t(n);
    for (int i = 0; i < n; ++i) {
        t[i] = normal(rng);
        for (int k = 0; k < 3; ++k) P(i, k) = 0.7 * t[i] + 0.5 * normal(rng);
    }
    Eigen::VectorXd w = solve_simplex_weights(P, t);
    double ens_risk = (P * w - t).squaredNorm();
    for (int k = 0; k < 3; ++k) {
        double member_risk = (P.col(k) - t).squaredNorm();
        CHECK(ens_risk <= member_risk + 1e-8 * n);
    }
}

TEST_CASE("logit-link ensembles clamp predictions away from 0 and 1") {
    const int n = 60;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = i < n / 2 ? -3.0 : 3.0;
        y[i] = i < n / 2 ? 0.0 : 1.0;
    }
    EnsembleModel ens = fit_super_learner(
        X, y, {spec_of(LearnerKind::GlmMainEffects), spec_of(LearnerKind::BoostedStumps)}, 5,
        Link::Logit, 2);
    Eigen::MatrixXd Xe(2, 1);
    Xe << -50.0, 50.0;
    Eigen::VectorXd p = ens.predict(Xe);
    CHECK(p[0] >= kLinkEps);
    CHECK(p[1] <= 1.0 - kLinkEps);
    CHECK(p[0] < 0.5);
    CHECK(p[1] > 0.5);
}

TEST_CASE("fit_super_learner: a failing member gets weight zero with a warning") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 80;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = normal(rng);
        X(i, 1) = normal(rng);
        y[i] = X(i, 0) + 0.1 * normal(rng);
    }
    // An infinite ridge penalty passes range validation but breaks the solve;
    // the ensemble must recover with the surviving member.
    LearnerSpec broken = spec_of(LearnerKind::RidgePoly2);
    broken.ridge_lambda = std::numeric_limits<double>::infinity();
    EnsembleModel ens = fit_super_learner(
        X, y, {spec_of(LearnerKind::GlmMainEffects), broken}, 5, Link::Identity, 4);
    CHECK(ens.weights[0] == 1.0);
    CHECK(ens.weights[1] == 0.0);
    CHECK(!ens.members[1].has_value());
    REQUIRE(!ens.warnings.empty());
    CHECK(ens.warnings[0].find("ridge_poly2") != std::string::npos);

    // Every member failing is an estimation error.
    CHECK_THROWS_AS(fit_super_learner(X, y, {broken}, 5, Link::Identity, 4), EstimationError);
}
