#include "catgen/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "catgen/hash.hpp"
#include "catgen/mathutil.hpp"
#include "catgen/rng.hpp"

namespace catgen {

std::vector<int> FoldAssignment::fold_sizes() const {
    std::vector<int> sizes(L, 0);
    for (int f : fold_of) sizes[f]++;
    return sizes;
}

void FoldAssignment::validate_basic() const {
    if (static_cast<int>(fold_of.size()) != n) throw EstimationError("folds: length mismatch");
    auto sizes = fold_sizes();
    int lo = *std::min_element(sizes.begin(), sizes.end());
    int hi = *std::max_element(sizes.begin(), sizes.end());
    if (lo == 0) throw EstimationError("folds: empty fold");
    if (hi - lo > 1) throw EstimationError("folds: sizes differ by more than 1");
}

FoldAssignment partition_folds(int n, int L, std::uint64_t seed) {
    if (L < 2 || L > n)
        throw ConfigError("partition_folds: need 2 <= L <= n, got L=" + std::to_string(L) +
                          ", n=" + std::to_string(n));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng = make_rng(seed, stream::kFolds);
    std::shuffle(order.begin(), order.end(), rng);
    // Random offset so the oversized folds are not always the low labels.
    std::uniform_int_distribution<int> offset_dist(0, L - 1);
    int offset = offset_dist(rng);

    FoldAssignment folds{n, L, std::vector<int>(n)};
    for (int i = 0; i < n; ++i) folds.fold_of[order[i]] = (i + offset) % L;
    folds.validate_basic();
    return folds;
}

namespace {

FoldAssignment partition_folds_stratified(const Cohort& cohort, int L, std::uint64_t seed) {
    const int n = cohort.n();
    std::vector<int> s1, s0;
    for (int i = 0; i < n; ++i) (cohort.s[i] == 1 ? s1 : s0).push_back(i);
    std::mt19937_64 rng = make_rng(seed, stream::kFolds);
    std::shuffle(s1.begin(), s1.end(), rng);
    std::shuffle(s0.begin(), s0.end(), rng);
    std::uniform_int_distribution<int> offset_dist(0, L - 1);
    int offset = offset_dist(rng);

    // Deal s=1 first, then continue the same round-robin through s=0 so both
    // the strata and the totals stay balanced.
    FoldAssignment folds{n, L, std::vector<int>(n)};
    int pos = offset;
    for (int i : s1) folds.fold_of[i] = pos++ % L;
    for (int i : s0) folds.fold_of[i] = pos++ % L;
    folds.validate_basic();
    return folds;
}

} // namespace

bool folds_usable(const Cohort& cohort, const FoldAssignment& folds, std::string* why) {
    std::vector<int> s1_count(folds.L, 0), treated(folds.L, 0), control(folds.L, 0);
    int treated_total = 0, control_total = 0;
    for (int i = 0; i < cohort.n(); ++i) {
        if (cohort.s[i] != 1) continue;
        int f = folds.fold_of[i];
        s1_count[f]++;
        if (cohort.a[i] == 1) {
            treated[f]++;
            treated_total++;
        } else {
            control[f]++;
            control_total++;
        }
    }
    for (int f = 0; f < folds.L; ++f) {
        if (s1_count[f] == 0) {
            if (why) *why = "fold " + std::to_string(f + 1) + " has no trial units";
            return false;
        }
        if (treated_total - treated[f] == 0 || control_total - control[f] == 0) {
            if (why)
                *why = "complement of fold " + std::to_string(f + 1) +
                       " is missing a treatment arm";
            return false;
        }
    }
    return true;
}

FoldAssignment partition_folds_for_cohort(const Cohort& cohort, int L, std::uint64_t seed,
                                          bool stratify_by_s) {
    std::string why;
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::uint64_t attempt_seed = derive_seed(seed, 7000 + attempt);
        FoldAssignment folds = stratify_by_s
                                   ? partition_folds_stratified(cohort, L, attempt_seed)
                                   : partition_folds(cohort.n(), L, attempt_seed);
        if (folds_usable(cohort, folds, &why)) return folds;
    }
    throw EstimationError("could not find a usable fold partition in 100 attempts: " + why);
}

void CrossfitConfig::validate() const {
    if (library.empty()) throw ConfigError("nuisance: learner library is empty");
    for (const auto& spec : library) spec.validate();
    if (n_folds < 2) throw ConfigError("nuisance: folds must be >= 2");
    if (!(clip_epsilon >= 0.0 && clip_epsilon < 0.5))
        throw ConfigError("nuisance: clip_epsilon must be in [0, 0.5)");
    if (known_treatment_probability &&
        !(*known_treatment_probability > 0.0 && *known_treatment_probability < 1.0))
        throw ConfigError("nuisance: treatment_probability must be in (0,1)");
    if (super_learner_folds < 2) throw ConfigError("nuisance: super_learner_folds must be >= 2");
}

namespace {

std::uint64_t rows_digest(const Cohort& cohort, const std::vector<int>& rows) {
    Fnv1a64 h;
    for (int i : rows) {
        for (int j = 0; j < cohort.p(); ++j) h.update(cohort.covariates(i, j));
        h.update(static_cast<std::int64_t>(cohort.s[i]));
        h.update(static_cast<std::int64_t>(cohort.a[i]));
        h.update(cohort.s[i] == 1 ? cohort.y[i] : 0.0);
    }
    return h.digest();
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
    Eigen::MatrixXd out(rows.size(), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = X.row(rows[i]);
    return out;
}

} // namespace

NuisanceFits fit_nuisances(const Cohort& cohort, const FoldAssignment& folds,
                           const CrossfitConfig& config, std::uint64_t seed, Exec exec) {
    config.validate();
    if (folds.n != cohort.n()) throw EstimationError("fit_nuisances: fold/cohort size mismatch");
    std::string why;
    if (!folds_usable(cohort, folds, &why)) throw EstimationError("fit_nuisances: " + why);

    const int n = cohort.n();
    const int L = folds.L;

    NuisanceFits fits;
    fits.clip_epsilon = config.clip_epsilon;
    fits.folds = folds;
    fits.selection_raw.resize(n);
    fits.treatment_raw.resize(n);
    fits.outcome1.resize(n);
    fits.outcome0.resize(n);
    fits.fold_models.resize(L);
    std::vector<std::vector<std::string>> fold_warnings(L);

    const Link outcome_link =
        cohort.outcome_kind == OutcomeKind::Binary ? Link::Logit : Link::Identity;

    for_each_index(L, exec, [&](std::int64_t l) {
        std::vector<int> train_all, train_s1, train_a1, train_a0, held;
        for (int i = 0; i < n; ++i) {
            if (folds.fold_of[i] == l) {
                held.push_back(i);
                continue;
            }
            train_all.push_back(i);
            if (cohort.s[i] == 1) {
                train_s1.push_back(i);
                (cohort.a[i] == 1 ? train_a1 : train_a0).push_back(i);
            }
        }
        if (train_a1.empty() || train_a0.empty())
            throw EstimationError("fit_nuisances: complement of fold " + std::to_string(l + 1) +
                                  " is missing a treatment arm");

        auto& models = fits.fold_models[l];
        models.train_rows_digest = rows_digest(cohort, train_all);
        std::uint64_t fold_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(l));

        // Selection model p(S=1|X): all complement units.
        if (!config.selection_identically_one) {
            Eigen::MatrixXd X = gather_rows(cohort.covariates, train_all);
            Eigen::VectorXd t(train_all.size());
            for (std::size_t i = 0; i < train_all.size(); ++i) t[i] = cohort.s[train_all[i]];
            models.selection =
                fit_super_learner(X, t, config.library, config.super_learner_folds, Link::Logit,
                                  derive_seed(fold_seed, 1), config.super_learner_loss);
            for (const auto& w : models.selection->warnings)
                fold_warnings[l].push_back("fold " + std::to_string(l + 1) + " selection: " + w);
        }

        // Treatment model p(A=1|X,S=1): trial complement units, unless known.
        if (config.known_treatment_probability) {
            models.treatment_known = true;
            models.treatment_constant = *config.known_treatment_probability;
        } else {
            Eigen::MatrixXd X = gather_rows(cohort.covariates, train_s1);
            Eigen::VectorXd t(train_s1.size());
            for (std::size_t i = 0; i < train_s1.size(); ++i) t[i] = cohort.a[train_s1[i]];
            auto fit = detail::fit_glm(X, t, Link::Logit, 0.0);
            models.treatment_beta = fit.beta;
        }

        // Arm-specific outcome models on the trial complement.
        auto fit_outcome = [&](const std::vector<int>& rows, int arm) {
            Eigen::MatrixXd X = gather_rows(cohort.covariates, rows);
            Eigen::VectorXd t(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) t[i] = cohort.y[rows[i]];
            if (t.size() > 0 && t.minCoeff() == t.maxCoeff())
                fold_warnings[l].push_back("fold " + std::to_string(l + 1) + " arm " +
                                           std::to_string(arm) +
                                           ": constant outcome, fitted constant model");
            return fit_super_learner(X, t, config.library, config.super_learner_folds,
                                     outcome_link, derive_seed(fold_seed, 2 + arm),
                                     config.super_learner_loss);
        };
        models.outcome1 = fit_outcome(train_a1, 1);
        models.outcome0 = fit_outcome(train_a0, 0);
        for (const auto& w : models.outcome1->warnings)
            fold_warnings[l].push_back("fold " + std::to_string(l + 1) + " outcome a=1: " + w);
        for (const auto& w : models.outcome0->warnings)
            fold_warnings[l].push_back("fold " + std::to_string(l + 1) + " outcome a=0: " + w);

        // Held-out predictions for this fold's units.
        Eigen::MatrixXd Xh = gather_rows(cohort.covariates, held);
        Eigen::VectorXd sel = config.selection_identically_one
                                  ? Eigen::VectorXd::Ones(held.size())
                                  : models.selection->predict(Xh);
        Eigen::VectorXd g1 = models.outcome1->predict(Xh);
        Eigen::VectorXd g0 = models.outcome0->predict(Xh);
        Eigen::VectorXd trt(held.size());
        if (models.treatment_known) {
            trt.setConstant(models.treatment_constant);
        } else {
            const Eigen::VectorXd& beta = *models.treatment_beta;
            for (std::size_t i = 0; i < held.size(); ++i) {
                double eta = beta[0] + Xh.row(i).dot(beta.tail(beta.size() - 1));
                trt[i] = expit(eta);
            }
        }
        for (std::size_t i = 0; i < held.size(); ++i) {
            fits.selection_raw[held[i]] = sel[i];
            fits.treatment_raw[held[i]] = trt[i];
            fits.outcome1[held[i]] = g1[i];
            fits.outcome0[held[i]] = g0[i];
        }
    });

    for (auto& wlist : fold_warnings)
        fits.warnings.insert(fits.warnings.end(), wlist.begin(), wlist.end());

    const double eps = config.clip_epsilon;
    auto clip = [eps](double p) { return eps > 0.0 ? std::clamp(p, eps, 1.0 - eps) : p; };
    fits.selection = config.selection_identically_one ? fits.selection_raw
                                                      : fits.selection_raw.unaryExpr(clip);
    fits.treatment = fits.treatment_raw.unaryExpr(clip);
    return fits;
}

NuisanceFits evaluate_nuisance_functions(const Cohort& cohort, const NuisanceFunctions& fns,
                                         double clip_epsilon) {
    const int n = cohort.n();
    NuisanceFits fits;
    fits.clip_epsilon = clip_epsilon;
    fits.selection_raw.resize(n);
    fits.treatment_raw.resize(n);
    fits.outcome1.resize(n);
    fits.outcome0.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::RowVectorXd x = cohort.covariates.row(i);
        fits.selection_raw[i] = fns.selection(x);
        fits.treatment_raw[i] = fns.treatment(x);
        fits.outcome1[i] = fns.outcome1(x);
        fits.outcome0[i] = fns.outcome0(x);
    }
    auto clip = [clip_epsilon](double p) {
        return clip_epsilon > 0.0 ? std::clamp(p, clip_epsilon, 1.0 - clip_epsilon) : p;
    };
    fits.selection = fits.selection_raw.unaryExpr(clip);
    fits.treatment = fits.treatment_raw.unaryExpr(clip);
    return fits;
}

nlohmann::json NuisanceFits::to_json(bool include_models) const {
    nlohmann::json j{
        {"clip_epsilon", clip_epsilon},
        {"n_folds", folds.L},
        {"fold_of", folds.fold_of},
        {"warnings", warnings},
    };
    if (include_models) {
        nlohmann::json models = nlohmann::json::array();
        for (const auto& fm : fold_models) {
            nlohmann::json m;
            m["train_rows_digest"] = to_hex(fm.train_rows_digest);
            if (fm.selection) m["selection"] = fm.selection->to_json();
            if (fm.treatment_known) {
                m["treatment"] = {{"known_constant", fm.treatment_constant}};
            } else if (fm.treatment_beta) {
                m["treatment"] = {
                    {"glm_coefficients",
                     std::vector<double>(fm.treatment_beta->data(),
                                         fm.treatment_beta->data() + fm.treatment_beta->size())}};
            }
            if (fm.outcome1) m["outcome_a1"] = fm.outcome1->to_json();
            if (fm.outcome0) m["outcome_a0"] = fm.outcome0->to_json();
            models.push_back(std::move(m));
        }
        j["fold_models"] = std::move(models);
    }
    return j;
}

double riesz_representer(int s, int a, double p_s, double p_a1) {
    if (s == 0) return 0.0;
    // p_s may be exactly 1 (trial-only analyses set p(S=1|X) to one).
    if (!(p_s > 0.0 && p_s <= 1.0) || !(p_a1 > 0.0 && p_a1 < 1.0))
        throw EstimationError("riesz_representer: probabilities outside (0,1]");
    double p_received = a == 1 ? p_a1 : 1.0 - p_a1;
    return (2.0 * a - 1.0) / (p_s * p_received);
}

double pseudo_outcome_cate(int s, int a, double y, const UnitNuisance& nu) {
    double m = nu.gamma1 - nu.gamma0;
    if (s == 0) return m;
    double gamma_obs = a == 1 ? nu.gamma1 : nu.gamma0;
    return riesz_representer(s, a, nu.p_s, nu.p_a1) * (y - gamma_obs) + m;
}

double pseudo_outcome_arm(int s, int a, double y, const UnitNuisance& nu, int target_arm) {
    double gamma_a = target_arm == 1 ? nu.gamma1 : nu.gamma0;
    if (s == 0 || a != target_arm) return gamma_a;
    double p_target = target_arm == 1 ? nu.p_a1 : 1.0 - nu.p_a1;
    if (!(nu.p_s > 0.0 && nu.p_s <= 1.0) || !(p_target > 0.0 && p_target < 1.0))
        throw EstimationError("pseudo_outcome_arm: probabilities outside (0,1]");
    return (y - gamma_a) / (nu.p_s * p_target) + gamma_a;
}

PseudoOutcomes build_pseudo_outcomes(const Cohort& cohort, const NuisanceFits& nuisance,
                                     PseudoArm arm, Exec exec) {
    const int n = cohort.n();
    if (nuisance.selection.size() != n)
        throw EstimationError("build_pseudo_outcomes: nuisance/cohort size mismatch");

    PseudoOutcomes out;
    out.arm = arm;
    out.xi.resize(n);
    out.v = cohort.effect_modifier_values();

    for_each_index(n, exec, [&](std::int64_t i) {
        UnitNuisance nu{nuisance.selection[i], nuisance.treatment[i], nuisance.outcome1[i],
                        nuisance.outcome0[i]};
        int s = cohort.s[i];
        int a = cohort.a[i];
        double y = s == 1 ? cohort.y[i] : 0.0;
        if (s == 1 && !std::isfinite(cohort.y[i]))
            throw DataError("build_pseudo_outcomes: absent outcome for trial unit " +
                            std::to_string(i + 1));
        double xi;
        switch (arm) {
        case PseudoArm::Cate: xi = pseudo_outcome_cate(s, a, y, nu); break;
        case PseudoArm::Arm1: xi = pseudo_outcome_arm(s, a, y, nu, 1); break;
        default: xi = pseudo_outcome_arm(s, a, y, nu, 0); break;
        }
        if (!std::isfinite(xi))
            throw EstimationError("build_pseudo_outcomes: non-finite pseudo-outcome at unit " +
                                  std::to_string(i + 1));
        out.xi[i] = xi;
    });
    return out;
}

Cohort trial_subcohort(const Cohort& cohort) {
    std::vector<int> rows;
    for (int i = 0; i < cohort.n(); ++i)
        if (cohort.s[i] == 1) rows.push_back(i);
    Cohort out;
    out.covariates.resize(rows.size(), cohort.p());
    out.covariate_names = cohort.covariate_names;
    out.effect_modifier_index = cohort.effect_modifier_index;
    out.outcome_kind = cohort.outcome_kind;
    out.s.resize(rows.size());
    out.a.resize(rows.size());
    out.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.covariates.row(i) = cohort.covariates.row(rows[i]);
        out.s[i] = cohort.s[rows[i]];
        out.a[i] = cohort.a[rows[i]];
        out.y[i] = cohort.y[rows[i]];
    }
    return out;
}

} // namespace catgen
