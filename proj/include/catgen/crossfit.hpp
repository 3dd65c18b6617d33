#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catgen/data_model.hpp"
#include "catgen/exec.hpp"
#include "catgen/learners.hpp"

namespace catgen {

struct FoldAssignment {
    int n = 0;
    int L = 0;
    std::vector<int> fold_of; // labels in [0, L)

    std::vector<int> fold_sizes() const;
    void validate_basic() const;
};

FoldAssignment partition_folds(int n, int L, std::uint64_t seed);

// Checks the arm-coverage constraints a cross-fit needs: every fold holds a
// trial unit and every fold complement holds both arms.
bool folds_usable(const Cohort& cohort, const FoldAssignment& folds, std::string* why = nullptr);

// Resamples the partition up to 100 times before giving up.
FoldAssignment partition_folds_for_cohort(const Cohort& cohort, int L, std::uint64_t seed,
                                          bool stratify_by_s = false);

struct CrossfitConfig {
    std::vector<LearnerSpec> library;
    int n_folds = 5;
    double clip_epsilon = 0.01;
    // Set when the trial's assignment probability is known by design;
    // otherwise the treatment model is a logistic GLM.
    std::optional<double> known_treatment_probability = 0.5;
    int super_learner_folds = 5;
    WeightLoss super_learner_loss = WeightLoss::Squared;
    bool stratify_folds_by_s = false;
    // Trial-only analyses: skip the selection model and set p(S=1|X) to one.
    bool selection_identically_one = false;

    void validate() const;
};

struct NuisanceFits {
    // Per-unit cross-fitted values; "raw" is pre-clipping.
    Eigen::VectorXd selection_raw, selection;
    Eigen::VectorXd treatment_raw, treatment; // p(A=1|X,S=1)
    Eigen::VectorXd outcome1, outcome0;       // gamma(1,X), gamma(0,X)
    double clip_epsilon = 0.01;
    FoldAssignment folds;
    std::vector<std::string> warnings;

    struct FoldModels {
        std::optional<EnsembleModel> selection;
        std::optional<EnsembleModel> outcome1, outcome0;
        std::optional<Eigen::VectorXd> treatment_beta; // logistic GLM coefficients
        bool treatment_known = false;
        double treatment_constant = 0.5;
        std::uint64_t train_rows_digest = 0; // content hash of the training rows
    };
    std::vector<FoldModels> fold_models;

    nlohmann::json to_json(bool include_models = true) const;
};

NuisanceFits fit_nuisances(const Cohort& cohort, const FoldAssignment& folds,
                           const CrossfitConfig& config, std::uint64_t seed,
                           Exec exec = Exec::Serial);

// Known or synthetic nuisance functions evaluated per unit; clip_epsilon = 0
// disables clipping. Used by diagnostics and the simulation oracles.
struct NuisanceFunctions {
    std::function<double(const Eigen::RowVectorXd&)> selection;
    std::function<double(const Eigen::RowVectorXd&)> treatment;
    std::function<double(const Eigen::RowVectorXd&)> outcome1;
    std::function<double(const Eigen::RowVectorXd&)> outcome0;
};

NuisanceFits evaluate_nuisance_functions(const Cohort& cohort, const NuisanceFunctions& fns,
                                         double clip_epsilon);

// Riesz representer S(2A-1) / {p(S=1|X) p(A|X,S=1)}; the treatment factor is
// the probability of the arm actually received.
double riesz_representer(int s, int a, double p_s, double p_a1);

struct UnitNuisance {
    double p_s = 1.0;
    double p_a1 = 0.5;
    double gamma1 = 0.0;
    double gamma0 = 0.0;
};

double pseudo_outcome_cate(int s, int a, double y, const UnitNuisance& nu);
double pseudo_outcome_arm(int s, int a, double y, const UnitNuisance& nu, int target_arm);

enum class PseudoArm { Cate, Arm1, Arm0 };

struct PseudoOutcomes {
    Eigen::VectorXd xi;
    Eigen::VectorXd v;
    PseudoArm arm = PseudoArm::Cate;
};

PseudoOutcomes build_pseudo_outcomes(const Cohort& cohort, const NuisanceFits& nuisance,
                                     PseudoArm arm, Exec exec = Exec::Serial);

// Trial participants only, original order preserved.
Cohort trial_subcohort(const Cohort& cohort);

} // namespace catgen
