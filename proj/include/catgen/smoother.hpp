#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "catgen/crossfit.hpp"
#include "catgen/errors.hpp"
#include "catgen/exec.hpp"

namespace catgen {

// Epanechnikov kernel: 0.75 (1 - u^2) on [-1, 1].
double kernel_eval(double u);

// Closed-form kernel moments used by the bias reference and the variance.
inline constexpr double kKernelSecondMoment = 0.2; // int u^2 K(u) du
inline constexpr double kKernelRoughness = 0.6;    // int K(u)^2 du

struct LocalFit {
    double theta = 0.0;
    double slope = 0.0;
    bool ridge_jitter = false;
    int n_effective = 0; // points with strictly positive kernel weight
};

// Weighted least squares on (1, v_i - v) with weights K((v_i - v)/h)/h.
// Throws DegenerateWindowError when fewer than two distinct in-window points
// exist.
LocalFit local_linear_fit(const Eigen::VectorXd& v, const Eigen::VectorXd& xi, double v0,
                          double h);

// (1,1) element of the plug-in sandwich Pn[phi phi^T]; the reported standard
// error downstream is sqrt(sigma_sq / n).
double sandwich_variance(const Eigen::VectorXd& v, const Eigen::VectorXd& xi, double v0, double h,
                         const LocalFit& fit);

struct BandwidthSpec {
    enum class Mode { Fixed, Cv };
    Mode mode = Mode::Cv;
    double fixed_h = 0.0;
    std::vector<double> cv_grid; // empty = default grid from the data
    int cv_folds = 5;

    void validate() const;
};

// 30 log-spaced values on [0.1 sd(V) n^{-1/5}, 3 sd(V)].
std::vector<double> default_bandwidth_grid(const Eigen::VectorXd& v);

struct BandwidthSelection {
    double h_star = 0.0;
    std::vector<double> grid;
    std::vector<double> cv_score;
};

BandwidthSelection select_bandwidth_cv(const Eigen::VectorXd& v, const Eigen::VectorXd& xi,
                                       const std::vector<double>& grid, int folds,
                                       std::uint64_t seed, Exec exec = Exec::Serial);

// Per-point status flags in CateCurve.
enum PointFlag : std::uint8_t {
    kFlagExtrapolation = 1, // grid point outside [min V, max V]
    kFlagWidened = 2,       // bandwidth widened to rescue a thin window
    kFlagRidge = 4,         // 2x2 system needed a ridge jitter
    kFlagDegenerate = 8,    // no usable window; outputs are NaN
};

std::string point_flags_string(std::uint8_t flags);

struct CateCurve {
    Eigen::VectorXd grid;
    Eigen::VectorXd theta_hat;
    Eigen::VectorXd slope_hat;
    Eigen::VectorXd se;
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
    Eigen::VectorXi n_effective;
    std::vector<std::uint8_t> flags;
    double bandwidth = 0.0;
    int n = 0;
};

CateCurve estimate_cate_curve(const PseudoOutcomes& pseudo, const Eigen::VectorXd& grid,
                              const BandwidthSpec& bw, std::uint64_t seed,
                              Exec exec = Exec::Serial);

// Theorem-style smoothing bias theta''(v) (h^2/2) int u^2 K(u) du for the
// Epanechnikov kernel.
double smoothing_bias_reference(double theta_second_derivative, double h);

} // namespace catgen
