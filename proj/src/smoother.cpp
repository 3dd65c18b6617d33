#include "catgen/smoother.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "catgen/rng.hpp"

namespace catgen {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kWaldZ = 1.96;

struct SortedPairs {
    std::vector<double> v;
    std::vector<double> xi;
};

SortedPairs sort_pairs(const Eigen::VectorXd& v, const Eigen::VectorXd& xi) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return v[i] < v[j]; });
    SortedPairs out;
    out.v.resize(n);
    out.xi.resize(n);
    for (int i = 0; i < n; ++i) {
        out.v[i] = v[order[i]];
        out.xi[i] = xi[order[i]];
    }
    return out;
}

// Window of strictly positive kernel weight: v0 - h < v < v0 + h.
std::pair<int, int> window_bounds(const std::vector<double>& v, double v0, double h) {
    auto lo = std::upper_bound(v.begin(), v.end(), v0 - h);
    auto hi = std::lower_bound(v.begin(), v.end(), v0 + h);
    return {static_cast<int>(lo - v.begin()), static_cast<int>(hi - v.begin())};
}

struct WindowSums {
    double s0 = 0, s1 = 0, s2 = 0; // kernel-weighted moments of (v_i - v0)
    double t0 = 0, t1 = 0;         // kernel-weighted moments of xi
    int count = 0;
    int distinct = 0;
};

WindowSums accumulate_window(const SortedPairs& pairs, int lo, int hi, double v0, double h) {
    WindowSums sums;
    double prev = kNaN;
    for (int i = lo; i < hi; ++i) {
        double d = pairs.v[i] - v0;
        double w = kernel_eval(d / h) / h;
        if (w <= 0.0) continue;
        sums.s0 += w;
        sums.s1 += w * d;
        sums.s2 += w * d * d;
        sums.t0 += w * pairs.xi[i];
        sums.t1 += w * d * pairs.xi[i];
        sums.count++;
        if (sums.distinct == 0 || pairs.v[i] != prev) {
            sums.distinct++;
            prev = pairs.v[i];
        }
    }
    return sums;
}

LocalFit solve_local(const WindowSums& sums) {
    if (sums.count < 2 || sums.distinct < 2) throw DegenerateWindowError(sums.count);
    LocalFit fit;
    fit.n_effective = sums.count;
    double s0 = sums.s0, s1 = sums.s1, s2 = sums.s2;
    double det = s0 * s2 - s1 * s1;
    if (!(det > 0.0) || !std::isfinite(det)) {
        s0 += 1e-10;
        s2 += 1e-10;
        det = s0 * s2 - s1 * s1;
        fit.ridge_jitter = true;
        if (!(det > 0.0) || !std::isfinite(det)) throw DegenerateWindowError(sums.count);
    }
    fit.theta = (s2 * sums.t0 - s1 * sums.t1) / det;
    fit.slope = (s0 * sums.t1 - s1 * sums.t0) / det;
    return fit;
}

LocalFit fit_window(const SortedPairs& pairs, double v0, double h) {
    auto [lo, hi] = window_bounds(pairs.v, v0, h);
    return solve_local(accumulate_window(pairs, lo, hi, v0, h));
}

double sandwich_window(const SortedPairs& pairs, double v0, double h, const LocalFit& fit,
                       int n_total) {
    auto [lo, hi] = window_bounds(pairs.v, v0, h);
    WindowSums sums = accumulate_window(pairs, lo, hi, v0, h);
    double s0 = sums.s0, s2 = sums.s2;
    if (fit.ridge_jitter) {
        s0 += 1e-10;
        s2 += 1e-10;
    }
    double det = s0 * s2 - sums.s1 * sums.s1;
    // phi_i(1) = n * (s2 - s1 d_i) w_i r_i / det; sigma^2 = Pn[phi(1)^2].
    double acc = 0.0;
    for (int i = lo; i < hi; ++i) {
        double d = pairs.v[i] - v0;
        double w = kernel_eval(d / h) / h;
        if (w <= 0.0) continue;
        double resid = pairs.xi[i] - fit.theta - fit.slope * d;
        double phi1 = (s2 - sums.s1 * d) * w * resid / det;
        acc += phi1 * phi1;
    }
    return acc * n_total;
}

} // namespace

double kernel_eval(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

LocalFit local_linear_fit(const Eigen::VectorXd& v, const Eigen::VectorXd& xi, double v0,
                          double h) {
    if (!(h > 0.0)) throw ConfigError("local_linear_fit: bandwidth must be positive");
    if (v.size() != xi.size()) throw DataError("local_linear_fit: length mismatch");
    SortedPairs pairs = sort_pairs(v, xi);
    return fit_window(pairs, v0, h);
}

double sandwich_variance(const Eigen::VectorXd& v, const Eigen::VectorXd& xi, double v0, double h,
                         const LocalFit& fit) {
    SortedPairs pairs = sort_pairs(v, xi);
    return sandwich_window(pairs, v0, h, fit, static_cast<int>(v.size()));
}

void BandwidthSpec::validate() const {
    if (mode == Mode::Fixed) {
        if (!(fixed_h > 0.0)) throw ConfigError("bandwidth: fixed h must be positive");
        return;
    }
    if (cv_folds < 2) throw ConfigError("bandwidth: cv folds must be >= 2");
    for (std::size_t i = 0; i < cv_grid.size(); ++i) {
        if (!(cv_grid[i] > 0.0)) throw ConfigError("bandwidth: grid values must be positive");
        if (i > 0 && cv_grid[i] <= cv_grid[i - 1])
            throw ConfigError("bandwidth: grid must be sorted ascending");
    }
}

std::vector<double> default_bandwidth_grid(const Eigen::VectorXd& v) {
    const int n = static_cast<int>(v.size());
    double mean = v.mean();
    double var = (v.array() - mean).square().sum() / std::max(1, n - 1);
    double sd = std::sqrt(var);
    if (!(sd > 0.0))
        throw EstimationError("bandwidth grid: effect modifier is constant, nothing to smooth");
    double lo = 0.1 * sd * std::pow(static_cast<double>(n), -0.2);
    double hi = 3.0 * sd;
    const int points = 30;
    std::vector<double> grid(points);
    double log_lo = std::log(lo), log_hi = std::log(hi);
    for (int i = 0; i < points; ++i)
        grid[i] = std::exp(log_lo + (log_hi - log_lo) * i / (points - 1));
    return grid;
}

BandwidthSelection select_bandwidth_cv(const Eigen::VectorXd& v, const Eigen::VectorXd& xi,
                                       const std::vector<double>& grid, int folds,
                                       std::uint64_t seed, Exec exec) {
    const int n = static_cast<int>(v.size());
    if (grid.empty()) throw ConfigError("select_bandwidth_cv: empty grid");
    if (folds < 2) throw ConfigError("select_bandwidth_cv: folds must be >= 2");
    if (n < 2 * folds) throw EstimationError("select_bandwidth_cv: too few points");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0)) throw ConfigError("select_bandwidth_cv: nonpositive h");
        if (i > 0 && grid[i] <= grid[i - 1])
            throw ConfigError("select_bandwidth_cv: grid must be sorted ascending");
    }

    // Seeded fold split, independent of the nuisance folds.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng = make_rng(seed, stream::kBandwidthCv);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(n);
    for (int i = 0; i < n; ++i) fold_of[order[i]] = i % folds;

    // Per-fold training sets, sorted once.
    std::vector<SortedPairs> train(folds);
    std::vector<double> train_mean(folds, 0.0);
    for (int f = 0; f < folds; ++f) {
        Eigen::VectorXd tv(n), txi(n);
        int m = 0;
        for (int i = 0; i < n; ++i) {
            if (fold_of[i] == f) continue;
            tv[m] = v[i];
            txi[m] = xi[i];
            ++m;
        }
        train[f] = sort_pairs(tv.head(m), txi.head(m));
        train_mean[f] = txi.head(m).mean();
    }

    const int G = static_cast<int>(grid.size());
    std::vector<double> score(G, 0.0);
    std::vector<char> fully_degenerate(G, 1);

    for_each_index(G, exec, [&](std::int64_t g) {
        double h = grid[g];
        double sse = 0.0;
        bool any_fit = false;
        for (int i = 0; i < n; ++i) {
            const SortedPairs& tr = train[fold_of[i]];
            double pred;
            try {
                pred = fit_window(tr, v[i], h).theta;
                any_fit = true;
            } catch (const DegenerateWindowError&) {
                pred = train_mean[fold_of[i]]; // fold-mean fallback
            }
            double err = xi[i] - pred;
            sse += err * err;
        }
        score[g] = sse / n;
        fully_degenerate[g] = any_fit ? 0 : 1;
    });

    if (std::all_of(fully_degenerate.begin(), fully_degenerate.end(),
                    [](char c) { return c != 0; }))
        throw EstimationError("select_bandwidth_cv: every candidate bandwidth degenerate");

    // Ties break toward the smaller bandwidth.
    int best = 0;
    for (int g = 1; g < G; ++g)
        if (score[g] < score[best]) best = g;

    BandwidthSelection out;
    out.h_star = grid[best];
    out.grid = grid;
    out.cv_score = score;
    return out;
}

std::string point_flags_string(std::uint8_t flags) {
    std::string out;
    auto append = [&out](const char* token) {
        if (!out.empty()) out += "|";
        out += token;
    };
    if (flags & kFlagExtrapolation) append("extrapolation");
    if (flags & kFlagWidened) append("widened");
    if (flags & kFlagRidge) append("ridge");
    if (flags & kFlagDegenerate) append("degenerate");
    return out;
}

CateCurve estimate_cate_curve(const PseudoOutcomes& pseudo, const Eigen::VectorXd& grid,
                              const BandwidthSpec& bw, std::uint64_t seed, Exec exec) {
    bw.validate();
    const int n = static_cast<int>(pseudo.v.size());
    const int m = static_cast<int>(grid.size());
    if (n < 2) throw EstimationError("estimate_cate_curve: need at least 2 observations");

    double h;
    if (bw.mode == BandwidthSpec::Mode::Fixed) {
        h = bw.fixed_h;
    } else {
        std::vector<double> cv_grid =
            bw.cv_grid.empty() ? default_bandwidth_grid(pseudo.v) : bw.cv_grid;
        h = select_bandwidth_cv(pseudo.v, pseudo.xi, cv_grid, bw.cv_folds, seed, exec).h_star;
    }

    SortedPairs pairs = sort_pairs(pseudo.v, pseudo.xi);
    const double vmin = pairs.v.front();
    const double vmax = pairs.v.back();

    CateCurve curve;
    curve.grid = grid;
    curve.bandwidth = h;
    curve.n = n;
    curve.theta_hat.resize(m);
    curve.slope_hat.resize(m);
    curve.se.resize(m);
    curve.ci_lower.resize(m);
    curve.ci_upper.resize(m);
    curve.n_effective.resize(m);
    curve.flags.assign(m, 0);

    for_each_index(m, exec, [&](std::int64_t g) {
        double v0 = grid[g];
        std::uint8_t flags = 0;
        if (v0 < vmin || v0 > vmax) flags |= kFlagExtrapolation;

        // Widen a thin window by 1.5x, at most three times, before giving up.
        double h_used = h;
        LocalFit fit;
        bool ok = false;
        for (int attempt = 0; attempt <= 3; ++attempt) {
            try {
                fit = fit_window(pairs, v0, h_used);
                ok = true;
                break;
            } catch (const DegenerateWindowError&) {
                if (attempt == 3) break;
                h_used *= 1.5;
                flags |= kFlagWidened;
            }
        }

        if (!ok) {
            auto [lo, hi] = window_bounds(pairs.v, v0, h);
            flags |= kFlagDegenerate;
            flags &= static_cast<std::uint8_t>(~kFlagWidened);
            curve.theta_hat[g] = kNaN;
            curve.slope_hat[g] = kNaN;
            curve.se[g] = kNaN;
            curve.ci_lower[g] = kNaN;
            curve.ci_upper[g] = kNaN;
            curve.n_effective[g] = accumulate_window(pairs, lo, hi, v0, h).count;
            curve.flags[g] = flags;
            return;
        }

        if (fit.ridge_jitter) flags |= kFlagRidge;
        double sigma_sq = sandwich_window(pairs, v0, h_used, fit, n);
        double se = std::sqrt(std::max(0.0, sigma_sq) / n);
        curve.theta_hat[g] = fit.theta;
        curve.slope_hat[g] = fit.slope;
        curve.se[g] = se;
        curve.ci_lower[g] = fit.theta - kWaldZ * se;
        curve.ci_upper[g] = fit.theta + kWaldZ * se;
        curve.n_effective[g] = fit.n_effective;
        curve.flags[g] = flags;
    });

    return curve;
}

double smoothing_bias_reference(double theta_second_derivative, double h) {
    return theta_second_derivative * (h * h / 2.0) * kKernelSecondMoment;
}

} // namespace catgen
