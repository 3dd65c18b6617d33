#include <algorithm>
#include <cmath>
#include <numeric>

#include "catgen/hash.hpp"
#include "catgen/learners.hpp"
#include "catgen/mathutil.hpp"
#include "catgen/rng.hpp"

namespace catgen {

using detail::Expansion;

std::string to_string(LearnerKind kind) {
    switch (kind) {
    case LearnerKind::GlmMainEffects: return "glm_main_effects";
    case LearnerKind::GlmPairwiseInteractions: return "glm_pairwise_interactions";
    case LearnerKind::RidgePoly2: return "ridge_poly2";
    case LearnerKind::BoostedStumps: return "boosted_stumps";
    case LearnerKind::RandomForest: return "random_forest";
    }
    return "?";
}

LearnerKind learner_kind_from_string(const std::string& s) {
    if (s == "glm_main_effects") return LearnerKind::GlmMainEffects;
    if (s == "glm_pairwise_interactions") return LearnerKind::GlmPairwiseInteractions;
    if (s == "ridge_poly2") return LearnerKind::RidgePoly2;
    if (s == "boosted_stumps") return LearnerKind::BoostedStumps;
    if (s == "random_forest") return LearnerKind::RandomForest;
    throw ConfigError("unknown learner kind '" + s + "'");
}

void LearnerSpec::validate() const {
    if (ridge_lambda < 0) throw ConfigError("learner: ridge lambda must be >= 0");
    if (boost_rounds < 1) throw ConfigError("learner: boosting rounds must be >= 1");
    if (!(boost_learning_rate > 0.0 && boost_learning_rate <= 1.0))
        throw ConfigError("learner: boosting learning_rate must be in (0,1]");
    if (boost_max_depth < 1) throw ConfigError("learner: boosting max_depth must be >= 1");
    if (forest_trees < 1) throw ConfigError("learner: forest trees must be >= 1");
    if (forest_min_leaf < 1) throw ConfigError("learner: forest min_leaf must be >= 1");
}

nlohmann::json LearnerSpec::to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}};
    switch (kind) {
    case LearnerKind::RidgePoly2: j["lambda"] = ridge_lambda; break;
    case LearnerKind::BoostedStumps:
        j["rounds"] = boost_rounds;
        j["learning_rate"] = boost_learning_rate;
        j["max_depth"] = boost_max_depth;
        break;
    case LearnerKind::RandomForest:
        j["trees"] = forest_trees;
        j["min_leaf"] = forest_min_leaf;
        break;
    default: break;
    }
    return j;
}

LearnerSpec LearnerSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw ConfigError("learner spec must be an object with a 'kind' field");
    LearnerSpec spec;
    spec.kind = learner_kind_from_string(j.at("kind").get<std::string>());
    std::vector<std::string> allowed{"kind"};
    switch (spec.kind) {
    case LearnerKind::RidgePoly2: allowed.push_back("lambda"); break;
    case LearnerKind::BoostedStumps:
        allowed.insert(allowed.end(), {"rounds", "learning_rate", "max_depth"});
        break;
    case LearnerKind::RandomForest: allowed.insert(allowed.end(), {"trees", "min_leaf"}); break;
    default: break;
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("learner spec: unknown key '" + it.key() + "' for kind " +
                              to_string(spec.kind));
    if (j.contains("lambda")) spec.ridge_lambda = j.at("lambda").get<double>();
    if (j.contains("rounds")) spec.boost_rounds = j.at("rounds").get<int>();
    if (j.contains("learning_rate")) spec.boost_learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("max_depth")) spec.boost_max_depth = j.at("max_depth").get<int>();
    if (j.contains("trees")) spec.forest_trees = j.at("trees").get<int>();
    if (j.contains("min_leaf")) spec.forest_min_leaf = j.at("min_leaf").get<int>();
    spec.validate();
    return spec;
}

namespace {

constexpr int kForestDepthCap = 30;

Expansion expansion_for(LearnerKind kind) {
    switch (kind) {
    case LearnerKind::GlmMainEffects: return Expansion::MainEffects;
    case LearnerKind::GlmPairwiseInteractions: return Expansion::PairwiseInteractions;
    case LearnerKind::RidgePoly2: return Expansion::Poly2;
    default: throw EstimationError("expansion_for: not a glm kind");
    }
}

double clamp_logit(double p) { return std::clamp(p, kLinkEps, 1.0 - kLinkEps); }

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link) {
    if (X.rows() != y.size()) throw DataError("fit_learner: feature/target length mismatch");
    if (X.rows() == 0) throw DataError("fit_learner: empty training set");
    if (!X.allFinite()) throw DataError("fit_learner: non-finite feature value");
    if (!y.allFinite()) throw DataError("fit_learner: non-finite target value");
    if (link == Link::Logit)
        for (int i = 0; i < y.size(); ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw DataError("fit_learner: logit link requires binary targets");
}

} // namespace

FittedModel fit_learner(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                        const LearnerSpec& spec, Link link, std::uint64_t seed, Exec exec) {
    spec.validate();
    check_inputs(features, targets, link);
    const int n = static_cast<int>(features.rows());
    const int p = static_cast<int>(features.cols());

    switch (spec.kind) {
    case LearnerKind::GlmMainEffects:
    case LearnerKind::GlmPairwiseInteractions:
    case LearnerKind::RidgePoly2: {
        Eigen::MatrixXd design = detail::expand_features(features, expansion_for(spec.kind));
        double lambda = spec.kind == LearnerKind::RidgePoly2 ? spec.ridge_lambda : 0.0;
        auto fit = detail::fit_glm(design, targets, link, lambda);
        GlmState state{fit.beta, fit.ridge_jitter, fit.iterations};
        return FittedModel(spec, link, p, std::move(state));
    }
    case LearnerKind::BoostedStumps: {
        BoostState state;
        state.baseline = targets.mean();
        Eigen::VectorXd residual = targets.array() - state.baseline;
        state.trees.reserve(spec.boost_rounds);
        std::vector<int> all_rows(n);
        std::iota(all_rows.begin(), all_rows.end(), 0);
        std::mt19937_64 rng = make_rng(seed, stream::kForest); // unused by full-feature trees
        Eigen::RowVectorXd row(p);
        for (int round = 0; round < spec.boost_rounds; ++round) {
            TreeModel tree = detail::fit_regression_tree(features, residual, all_rows,
                                                         spec.boost_max_depth, 1, p, rng);
            for (int i = 0; i < n; ++i) {
                row = features.row(i);
                residual[i] -= spec.boost_learning_rate * tree.predict_row(row.data());
            }
            state.trees.push_back(std::move(tree));
        }
        return FittedModel(spec, link, p, std::move(state));
    }
    case LearnerKind::RandomForest: {
        ForestState state;
        state.trees.resize(spec.forest_trees);
        const int mtry = std::max(1, static_cast<int>(std::lround(p / 3.0)));
        for_each_index(spec.forest_trees, exec, [&](std::int64_t t) {
            std::mt19937_64 rng = make_rng(derive_seed(seed, stream::kForest), t);
            std::vector<int> rows(n);
            std::uniform_int_distribution<int> pick(0, n - 1);
            for (int i = 0; i < n; ++i) rows[i] = pick(rng);
            std::sort(rows.begin(), rows.end());
            state.trees[t] = detail::fit_regression_tree(features, targets, rows, kForestDepthCap,
                                                         spec.forest_min_leaf, mtry, rng);
        });
        return FittedModel(spec, link, p, std::move(state));
    }
    }
    throw EstimationError("fit_learner: unreachable");
}

double FittedModel::predict_one(const Eigen::RowVectorXd& row) const {
    if (row.size() != feature_dim_) throw DataError("predict: feature dimension mismatch");
    Eigen::MatrixXd one(1, feature_dim_);
    one.row(0) = row;
    return predict(one)[0];
}

Eigen::VectorXd FittedModel::predict(const Eigen::MatrixXd& features) const {
    if (features.cols() != feature_dim_) throw DataError("predict: feature dimension mismatch");
    if (!features.allFinite()) throw DataError("predict: non-finite feature value");
    const int m = static_cast<int>(features.rows());
    Eigen::VectorXd out(m);

    if (const auto* glm = std::get_if<GlmState>(&state_)) {
        Eigen::MatrixXd design = detail::expand_features(features, expansion_for(spec_.kind));
        Eigen::VectorXd eta =
            (design * glm->beta.tail(glm->beta.size() - 1)).array() + glm->beta[0];
        if (link_ == Link::Logit)
            for (int i = 0; i < m; ++i) out[i] = clamp_logit(expit(eta[i]));
        else
            out = eta;
        return out;
    }

    Eigen::RowVectorXd row(feature_dim_);
    if (const auto* boost = std::get_if<BoostState>(&state_)) {
        for (int i = 0; i < m; ++i) {
            row = features.row(i);
            double pred = boost->baseline;
            for (const auto& tree : boost->trees)
                pred += spec_.boost_learning_rate * tree.predict_row(row.data());
            out[i] = link_ == Link::Logit ? clamp_logit(pred) : pred;
        }
        return out;
    }

    const auto& forest = std::get<ForestState>(state_);
    for (int i = 0; i < m; ++i) {
        row = features.row(i);
        double sum = 0.0;
        for (const auto& tree : forest.trees) sum += tree.predict_row(row.data());
        double pred = sum / static_cast<double>(forest.trees.size());
        out[i] = link_ == Link::Logit ? clamp_logit(pred) : pred;
    }
    return out;
}

nlohmann::json FittedModel::summary_json() const {
    nlohmann::json j = spec_.to_json();
    j["link"] = link_ == Link::Logit ? "logit" : "identity";
    if (const auto* glm = std::get_if<GlmState>(&state_)) {
        j["coefficients"] = std::vector<double>(glm->beta.data(),
                                                glm->beta.data() + glm->beta.size());
        if (glm->ridge_jitter) j["ridge_jitter"] = true;
    } else {
        const std::vector<TreeModel>* trees =
            std::holds_alternative<BoostState>(state_) ? &std::get<BoostState>(state_).trees
                                                       : &std::get<ForestState>(state_).trees;
        Fnv1a64 h;
        for (const auto& tree : *trees)
            for (const auto& node : tree.nodes) {
                h.update(static_cast<std::int64_t>(node.feature));
                h.update(node.threshold);
                h.update(node.value);
            }
        j["tree_count"] = trees->size();
        j["state_digest"] = to_hex(h.digest());
    }
    return j;
}

Eigen::VectorXd EnsembleModel::predict(const Eigen::MatrixXd& features) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(features.rows());
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (weights[static_cast<int>(k)] == 0.0 || !members[k]) continue;
        out += weights[static_cast<int>(k)] * members[k]->predict(features);
    }
    if (link == Link::Logit)
        for (int i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], kLinkEps, 1.0 - kLinkEps);
    return out;
}

nlohmann::json EnsembleModel::to_json() const {
    nlohmann::json members_json = nlohmann::json::array();
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (members[k])
            members_json.push_back(members[k]->summary_json());
        else
            members_json.push_back({{"kind", to_string(library[k].kind)}, {"failed", true}});
    }
    return nlohmann::json{
        {"link", link == Link::Logit ? "logit" : "identity"},
        {"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
        {"members", members_json},
        {"warnings", warnings},
    };
}

namespace {

double simplex_objective(const Eigen::MatrixXd& P, const Eigen::VectorXd& t,
                         const Eigen::VectorXd& w, WeightLoss loss) {
    Eigen::VectorXd pred = P * w;
    if (loss == WeightLoss::Squared) return (pred - t).squaredNorm();
    double nll = 0.0;
    for (int i = 0; i < t.size(); ++i) {
        double p = std::clamp(pred[i], kLinkEps, 1.0 - kLinkEps);
        nll -= t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p);
    }
    return nll;
}

} // namespace

Eigen::VectorXd solve_simplex_weights(const Eigen::MatrixXd& P, const Eigen::VectorXd& t,
                                      WeightLoss loss) {
    const int K = static_cast<int>(P.cols());
    if (K < 1) throw DataError("solve_simplex_weights: empty prediction matrix");
    if (P.rows() != t.size()) throw DataError("solve_simplex_weights: size mismatch");
    if (!P.allFinite() || !t.allFinite())
        throw DataError("solve_simplex_weights: non-finite input");
    if (K == 1) return Eigen::VectorXd::Ones(1);

    Eigen::VectorXd w = Eigen::VectorXd::Constant(K, 1.0 / K);
    const int max_iter = 10000;
    const double tol = 1e-10;

    if (loss == WeightLoss::Squared) {
        // FISTA on f(w) = ||Pw - t||^2 with simplex projection.
        Eigen::MatrixXd G = P.transpose() * P;
        Eigen::VectorXd c = P.transpose() * t;
        double L = 2.0 * G.cwiseAbs().rowwise().sum().maxCoeff();
        if (L <= 0) return w;
        Eigen::VectorXd y = w, w_prev = w;
        double theta_prev = 1.0;
        for (int iter = 0; iter < max_iter; ++iter) {
            Eigen::VectorXd grad = 2.0 * (G * y - c);
            Eigen::VectorXd w_next = detail::project_to_simplex(y - grad / L);
            double theta = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta_prev * theta_prev));
            y = w_next + ((theta_prev - 1.0) / theta) * (w_next - w_prev);
            double delta = (w_next - w_prev).cwiseAbs().maxCoeff();
            w_prev = w_next;
            theta_prev = theta;
            if (delta < tol) break;
        }
        return w_prev;
    }

    // Log loss: projected gradient with backtracking.
    double f = simplex_objective(P, t, w, loss);
    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::VectorXd pred = P * w;
        Eigen::VectorXd d(t.size());
        for (int i = 0; i < t.size(); ++i) {
            double p = std::clamp(pred[i], kLinkEps, 1.0 - kLinkEps);
            d[i] = (p - t[i]) / (p * (1.0 - p));
        }
        Eigen::VectorXd grad = P.transpose() * d;
        double step = 1.0;
        Eigen::VectorXd w_next;
        double f_next = f;
        while (step > 1e-16) {
            w_next = detail::project_to_simplex(w - step * grad);
            f_next = simplex_objective(P, t, w_next, loss);
            if (f_next <= f) break;
            step *= 0.5;
        }
        if (step <= 1e-16) break;
        double delta = (w_next - w).cwiseAbs().maxCoeff();
        w = w_next;
        f = f_next;
        if (delta < tol) break;
    }
    return w;
}

EnsembleModel fit_super_learner(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const std::vector<LearnerSpec>& library, int k_folds, Link link,
                                std::uint64_t seed, WeightLoss loss, Exec exec) {
    const int n = static_cast<int>(X.rows());
    const int K = static_cast<int>(library.size());
    if (K < 1) throw ConfigError("super learner: empty library");
    if (k_folds < 2) throw ConfigError("super learner: k_folds must be >= 2");
    if (n < 2 * k_folds) throw ConfigError("super learner: need n >= 2*k_folds");
    for (const auto& spec : library) spec.validate();
    check_inputs(X, y, link);

    // Seeded fold assignment: shuffle, then deal round-robin.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng = make_rng(seed, stream::kSuperLearner);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(n);
    for (int i = 0; i < n; ++i) fold_of[order[i]] = i % k_folds;

    Eigen::MatrixXd cv_pred = Eigen::MatrixXd::Zero(n, K);
    std::vector<std::string> task_failure(static_cast<std::size_t>(K) * k_folds);

    // Member seeds are keyed by the spec content, not the library position,
    // so permuting the library permutes the weights.
    std::vector<std::uint64_t> member_seed(K);
    for (int k = 0; k < K; ++k)
        member_seed[k] = derive_seed(seed, fnv1a64(library[k].to_json().dump()));

    for_each_index(static_cast<std::int64_t>(K) * k_folds, exec, [&](std::int64_t idx) {
        const int k = static_cast<int>(idx / k_folds);
        const int f = static_cast<int>(idx % k_folds);
        std::vector<int> train, test;
        for (int i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
        try {
            Eigen::MatrixXd Xtr(train.size(), X.cols());
            Eigen::VectorXd ytr(train.size());
            for (std::size_t i = 0; i < train.size(); ++i) {
                Xtr.row(i) = X.row(train[i]);
                ytr[i] = y[train[i]];
            }
            FittedModel model =
                fit_learner(Xtr, ytr, library[k], link,
                            derive_seed(member_seed[k], static_cast<std::uint64_t>(f)));
            Eigen::MatrixXd Xte(test.size(), X.cols());
            for (std::size_t i = 0; i < test.size(); ++i) Xte.row(i) = X.row(test[i]);
            Eigen::VectorXd pred = model.predict(Xte);
            for (std::size_t i = 0; i < test.size(); ++i) cv_pred(test[i], k) = pred[i];
        } catch (const std::exception& e) {
            task_failure[idx] = e.what();
        }
    });

    EnsembleModel ensemble;
    ensemble.library = library;
    ensemble.link = link;
    ensemble.members.resize(K);
    ensemble.weights = Eigen::VectorXd::Zero(K);

    std::vector<int> ok;
    for (int k = 0; k < K; ++k) {
        bool failed = false;
        for (int f = 0; f < k_folds; ++f) {
            const auto& msg = task_failure[static_cast<std::size_t>(k) * k_folds + f];
            if (!msg.empty()) {
                ensemble.warnings.push_back("member " + to_string(library[k].kind) +
                                            " failed in cross-validation: " + msg);
                failed = true;
                break;
            }
        }
        if (!failed) ok.push_back(k);
    }
    if (ok.empty()) throw EstimationError("super learner: every library member failed");

    Eigen::MatrixXd P(n, ok.size());
    for (std::size_t j = 0; j < ok.size(); ++j) P.col(j) = cv_pred.col(ok[j]);
    Eigen::VectorXd w_ok = solve_simplex_weights(P, y, loss);

    // Identical cross-validated prediction columns are interchangeable; split
    // their combined weight equally for a deterministic result.
    std::vector<int> group(ok.size());
    std::iota(group.begin(), group.end(), 0);
    for (std::size_t j = 0; j < ok.size(); ++j)
        for (std::size_t l = 0; l < j; ++l)
            if (group[l] == static_cast<int>(l) &&
                (P.col(j) - P.col(l)).cwiseAbs().maxCoeff() <= 1e-12) {
                group[j] = static_cast<int>(l);
                break;
            }
    for (std::size_t l = 0; l < ok.size(); ++l) {
        if (group[l] != static_cast<int>(l)) continue;
        std::vector<std::size_t> tied;
        for (std::size_t j = 0; j < ok.size(); ++j)
            if (group[j] == static_cast<int>(l)) tied.push_back(j);
        if (tied.size() > 1) {
            double total = 0.0;
            for (auto j : tied) total += w_ok[static_cast<int>(j)];
            for (auto j : tied) w_ok[static_cast<int>(j)] = total / tied.size();
        }
    }

    // Refit the surviving members on the full data.
    std::vector<std::string> refit_failure(ok.size());
    for_each_index(static_cast<std::int64_t>(ok.size()), exec, [&](std::int64_t j) {
        int k = ok[j];
        try {
            ensemble.members[k] =
                fit_learner(X, y, library[k], link, derive_seed(member_seed[k], 0xfffful));
        } catch (const std::exception& e) {
            refit_failure[j] = e.what();
        }
    });

    double kept = 0.0;
    for (std::size_t j = 0; j < ok.size(); ++j) {
        if (!refit_failure[j].empty()) {
            ensemble.warnings.push_back("member " + to_string(library[ok[j]].kind) +
                                        " failed on full-data refit: " + refit_failure[j]);
            continue;
        }
        ensemble.weights[ok[j]] = w_ok[static_cast<int>(j)];
        kept += w_ok[static_cast<int>(j)];
    }
    if (kept <= 0.0) throw EstimationError("super learner: every library member failed");
    ensemble.weights /= kept;
    return ensemble;
}

} // namespace catgen
