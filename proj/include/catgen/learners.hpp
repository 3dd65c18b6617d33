#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catgen/errors.hpp"
#include "catgen/exec.hpp"

namespace catgen {

enum class LearnerKind {
    GlmMainEffects,
    GlmPairwiseInteractions,
    RidgePoly2,
    BoostedStumps,
    RandomForest,
};

enum class Link { Identity, Logit };

// Logit-link predictions are clamped into [kLinkEps, 1 - kLinkEps].
inline constexpr double kLinkEps = 1e-12;

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& s);

struct LearnerSpec {
    LearnerKind kind = LearnerKind::GlmMainEffects;
    double ridge_lambda = 1.0;       // ridge_poly2
    int boost_rounds = 300;          // boosted_stumps
    double boost_learning_rate = 0.1;
    int boost_max_depth = 2;
    int forest_trees = 100;          // random_forest
    int forest_min_leaf = 10;

    void validate() const;
    nlohmann::json to_json() const;
    static LearnerSpec from_json(const nlohmann::json& j);
};

// Flat binary regression tree; feature < 0 marks a leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
};

struct TreeModel {
    std::vector<TreeNode> nodes;
    double predict_row(const double* x) const;
};

struct GlmState {
    Eigen::VectorXd beta; // intercept first, then expanded features
    bool ridge_jitter = false;
    int irls_iterations = 0;
};

struct BoostState {
    double baseline = 0.0;
    std::vector<TreeModel> trees;
};

struct ForestState {
    std::vector<TreeModel> trees;
};

class FittedModel {
  public:
    FittedModel(LearnerSpec spec, Link link, int feature_dim,
                std::variant<GlmState, BoostState, ForestState> state)
        : spec_(std::move(spec)), link_(link), feature_dim_(feature_dim),
          state_(std::move(state)) {}

    const LearnerSpec& spec() const { return spec_; }
    Link link() const { return link_; }
    int feature_dim() const { return feature_dim_; }

    Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
    double predict_one(const Eigen::RowVectorXd& features) const;

    nlohmann::json summary_json() const;

  private:
    LearnerSpec spec_;
    Link link_;
    int feature_dim_;
    std::variant<GlmState, BoostState, ForestState> state_;
};

FittedModel fit_learner(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                        const LearnerSpec& spec, Link link, std::uint64_t seed,
                        Exec exec = Exec::Serial);

enum class WeightLoss { Squared, LogLoss };

struct EnsembleModel {
    std::vector<LearnerSpec> library;
    std::vector<std::optional<FittedModel>> members; // nullopt for failed members
    Eigen::VectorXd weights;                         // simplex; 0 for failed members
    Link link = Link::Identity;
    std::vector<std::string> warnings;

    Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
    nlohmann::json to_json() const;
};

// Minimizes ||P w - t||^2 (or the log loss when requested) over the
// probability simplex by projected gradient descent.
Eigen::VectorXd solve_simplex_weights(const Eigen::MatrixXd& cv_predictions,
                                      const Eigen::VectorXd& targets,
                                      WeightLoss loss = WeightLoss::Squared);

EnsembleModel fit_super_learner(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                const std::vector<LearnerSpec>& library, int k_folds, Link link,
                                std::uint64_t seed, WeightLoss loss = WeightLoss::Squared,
                                Exec exec = Exec::Serial);

// Internal pieces shared with tests.
namespace detail {

enum class Expansion { MainEffects, PairwiseInteractions, Poly2 };

Eigen::MatrixXd expand_features(const Eigen::MatrixXd& X, Expansion expansion);

// Weighted penalized least squares with an automatic 1e-8 ridge jitter when
// the normal equations are singular or underdetermined.
struct GlmFitResult {
    Eigen::VectorXd beta;
    bool ridge_jitter = false;
    int iterations = 0;
};

GlmFitResult fit_glm(const Eigen::MatrixXd& design_no_intercept, const Eigen::VectorXd& targets,
                     Link link, double ridge_lambda);

TreeModel fit_regression_tree(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                              const std::vector<int>& rows, int max_depth, int min_leaf,
                              int mtry, std::mt19937_64& rng);

Eigen::VectorXd project_to_simplex(Eigen::VectorXd w);

} // namespace detail

} // namespace catgen
