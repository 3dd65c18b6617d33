#include <cmath>

#include "catgen/learners.hpp"
#include "catgen/mathutil.hpp"

namespace catgen::detail {

namespace {

// Solves (A + jitter*R) beta = rhs with R = diag(0,1,...,1); falls back to a
// 1e-8 ridge jitter when the unpenalized system is singular.
Eigen::VectorXd solve_normal_equations(Eigen::MatrixXd A, const Eigen::VectorXd& rhs,
                                       bool force_jitter, bool& jitter_used) {
    const int k = static_cast<int>(A.rows());
    auto attempt = [&](double jitter) -> std::optional<Eigen::VectorXd> {
        Eigen::MatrixXd M = A;
        for (int j = 1; j < k; ++j) M(j, j) += jitter;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
        if (ldlt.info() != Eigen::Success) return std::nullopt;
        Eigen::VectorXd beta = ldlt.solve(rhs);
        if (!beta.allFinite()) return std::nullopt;
        double resid = (M * beta - rhs).norm();
        if (resid > 1e-6 * (rhs.norm() + 1.0)) return std::nullopt;
        return beta;
    };

    if (!force_jitter) {
        if (auto beta = attempt(0.0)) return *beta;
    }
    jitter_used = true;
    if (auto beta = attempt(1e-8)) return *beta;
    // Escalate until the system is solvable; keeps pathological inputs from
    // aborting a whole ensemble fit.
    for (double jitter = 1e-6; jitter <= 1e2; jitter *= 100.0) {
        if (auto beta = attempt(jitter)) return *beta;
    }
    throw EstimationError("glm: normal equations unsolvable even with ridge jitter");
}

} // namespace

Eigen::MatrixXd expand_features(const Eigen::MatrixXd& X, Expansion expansion) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    if (expansion == Expansion::MainEffects) return X;

    int extra = p * (p - 1) / 2 + (expansion == Expansion::Poly2 ? p : 0);
    Eigen::MatrixXd out(n, p + extra);
    out.leftCols(p) = X;
    int col = p;
    if (expansion == Expansion::Poly2)
        for (int j = 0; j < p; ++j) out.col(col++) = X.col(j).cwiseProduct(X.col(j));
    for (int j = 0; j < p; ++j)
        for (int k = j + 1; k < p; ++k) out.col(col++) = X.col(j).cwiseProduct(X.col(k));
    return out;
}

GlmFitResult fit_glm(const Eigen::MatrixXd& design_no_intercept, const Eigen::VectorXd& targets,
                     Link link, double ridge_lambda) {
    const int n = static_cast<int>(design_no_intercept.rows());
    const int p = static_cast<int>(design_no_intercept.cols());

    Eigen::MatrixXd X(n, p + 1);
    X.col(0).setOnes();
    X.rightCols(p) = design_no_intercept;

    GlmFitResult result;
    // Underdetermined systems take the ridge path immediately.
    bool force_jitter = ridge_lambda == 0.0 && n < p + 2;

    if (link == Link::Identity) {
        Eigen::MatrixXd A = X.transpose() * X;
        if (ridge_lambda > 0.0)
            for (int j = 1; j <= p; ++j) A(j, j) += ridge_lambda;
        result.beta =
            solve_normal_equations(std::move(A), X.transpose() * targets, force_jitter,
                                   result.ridge_jitter);
        result.iterations = 1;
        return result;
    }

    // Logistic IRLS; deviance-change stopping rule.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    double prev_deviance = std::numeric_limits<double>::infinity();
    const int max_iter = 100;
    for (int iter = 1; iter <= max_iter; ++iter) {
        Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd mu(n), w(n), z(n);
        double deviance = 0.0;
        for (int i = 0; i < n; ++i) {
            double m = std::clamp(expit(eta[i]), 1e-10, 1.0 - 1e-10);
            mu[i] = m;
            w[i] = m * (1.0 - m);
            z[i] = eta[i] + (targets[i] - m) / w[i];
            deviance -= 2.0 * (targets[i] * std::log(m) + (1.0 - targets[i]) * std::log(1.0 - m));
        }
        Eigen::MatrixXd Xw = w.asDiagonal() * X;
        Eigen::MatrixXd A = X.transpose() * Xw;
        if (ridge_lambda > 0.0)
            for (int j = 1; j <= p; ++j) A(j, j) += ridge_lambda;
        beta = solve_normal_equations(std::move(A), X.transpose() * (w.asDiagonal() * z),
                                      force_jitter, result.ridge_jitter);
        result.iterations = iter;
        if (std::abs(deviance - prev_deviance) < 1e-10 * (std::abs(deviance) + 1.0)) break;
        prev_deviance = deviance;
    }
    result.beta = beta;
    return result;
}

Eigen::VectorXd project_to_simplex(Eigen::VectorXd w) {
    const int k = static_cast<int>(w.size());
    std::vector<double> u(w.data(), w.data() + k);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cumsum = 0.0, tau = 0.0;
    int rho = 0;
    for (int i = 0; i < k; ++i) {
        cumsum += u[i];
        double t = (cumsum - 1.0) / (i + 1);
        if (u[i] - t > 0) {
            rho = i + 1;
            tau = t;
        }
    }
    (void)rho;
    for (int i = 0; i < k; ++i) w[i] = std::max(0.0, w[i] - tau);
    return w;
}

} // namespace catgen::detail
