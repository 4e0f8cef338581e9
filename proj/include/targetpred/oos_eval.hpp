#pragma once

// Out-of-sample evaluation of parametrized actions from a single model fit:
// K-fold plans, importance weights that turn the full-data posterior into
// training-data posteriors, sampling-importance resampling (SIR) of
// out-of-sample predictive draws, empirical and predictive losses, and the
// acceptable predictor sets.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "targetpred/action_solver.hpp"
#include "targetpred/common.hpp"
#include "targetpred/model_core.hpp"

namespace targetpred {

struct FoldPlan {
  Index K = 0;
  std::vector<Index> assignment;  // length n, fold ids 0..K-1
  std::uint64_t seed = 0;

  Index n() const { return static_cast<Index>(assignment.size()); }
  std::vector<Index> validation(Index k) const;
  std::vector<Index> training(Index k) const;
};

/// Random balanced partition of {0..n-1} into K folds (sizes differ by at most one).
FoldPlan make_folds(Index n, Index K, std::uint64_t seed);

struct ImportanceOptions {
  bool truncate = true;  // clip weights above the (1 - 1/sqrt(S)) quantile
  LikelihoodKind likelihood = LikelihoodKind::conditional;
};

struct FoldWeights {
  std::vector<Vector> weights;        // per fold, length S, sums to one
  std::vector<double> ess;            // 1 / sum(w^2)
  std::vector<Index> truncated;       // number of clipped weights per fold

  Index K() const { return static_cast<Index>(weights.size()); }
  Index S() const { return weights.empty() ? 0 : weights.front().size(); }
};

/// w_k^s proportional to 1 / p(y^{I_k} | theta^s), from an S x n log-likelihood matrix.
FoldWeights importance_weights(const Matrix& log_lik, const FoldPlan& plan, const ImportanceOptions& opts = {});

FoldWeights importance_weights(const PosteriorDrawSet& post, const Dataset& data, const FoldPlan& plan,
                               const ImportanceOptions& opts = {});

/// Importance-weighted functional means. Row k holds sum_s w_k^s h(y~_j^s) for every j.
Matrix hbar_train(const Matrix& func_draws, const FoldWeights& weights);

struct PenaltyConfig {
  Vector weights;               // adaptive l1 weights, shared by all folds
  std::vector<double> lambdas;  // shared grid
  LossKind loss = LossKind::squared;
  SolverOptions solver;
};

/// One path per fold, fitted on the training rows only with targets hbar_train.
std::vector<LambdaPath> fit_per_fold(const FoldPlan& plan, const Matrix& hbar_by_fold, const Matrix& design,
                                     const PenaltyConfig& config);

/// Convenience overload computing hbar_train internally.
std::vector<LambdaPath> fit_per_fold(const FoldPlan& plan, const FoldWeights& weights, const Matrix& func_draws,
                                     const Matrix& design, const PenaltyConfig& config);

struct SirOptions {
  double max_fraction = 0.1;  // require R <= max_fraction * S; <= 0 disables the guard
};

/// Draw indices selected per fold. The same indices are used for every
/// validation point of a fold, so joint structure across points is kept and
/// all actions are scored on common draws.
struct SirSelection {
  Index R = 0;
  std::vector<std::vector<Index>> indices;  // per fold, length R
  std::vector<bool> with_replacement;       // fallback used because ESS < R
  std::vector<std::string> warnings;
};

/// Weighted sampling without replacement (exponential-key method); falls back
/// to multinomial sampling with replacement when a fold's ESS is below R.
SirSelection sir_select(const FoldWeights& weights, Index R, std::uint64_t seed, const SirOptions& opts = {});

/// Uniform subsample without replacement, identical across folds' structure;
/// used for in-sample evaluation.
SirSelection uniform_select(Index K, Index S, Index R, std::uint64_t seed);

/// Out-of-sample predictive draws for each fold's validation points: a
/// PredictiveDrawSet with R layers over the fold's validation design rows.
std::vector<PredictiveDrawSet> sir_resample(const PredictiveDrawSet& preds_full, const FoldWeights& weights,
                                            const FoldPlan& plan, Index R, std::uint64_t seed,
                                            const SirOptions& opts = {});

struct ActionLoss {
  double lambda = 0.0;
  Index active_set_size = 0;
  double empirical = 0.0;  // L^out
  Vector predictive;       // R draws of L~^out
};

struct LossReport {
  std::vector<ActionLoss> actions;
  Index min_index = 0;  // argmin of empirical loss (first on ties)
  LossKind loss = LossKind::squared;
  std::vector<std::string> warnings;

  Index R() const { return actions.empty() ? 0 : actions.front().predictive.size(); }
  /// Draws of 100 (L~_a - L~_min) / L~_min, paired by draw index.
  Vector percent_increase(Index a) const;
};

/// Pointwise loss L(z, zhat); cross-entropy clips zhat to [1e-12, 1 - 1e-12].
double pointwise_loss(double z, double zhat, LossKind loss);

/// Losses for every action on the shared grid. fold_fits[k] is fold k's path;
/// empirical holds h(y_i) for all n points; func_draws is S x n.
LossReport losses(const FoldPlan& plan, const std::vector<LambdaPath>& fold_fits, const Matrix& design,
                  const Vector& empirical, const Matrix& func_draws, const SirSelection& sir, LossKind loss);

struct AcceptanceConfig {
  double eta = 0.0;      // percent margin
  double epsilon = 0.1;  // probability level
  void validate() const;
};

struct AcceptableSet {
  std::vector<Index> members;  // action indices, ascending
  Vector probability;          // P(D~ < eta) per action
};

/// P(D~_{a, min} < eta) estimated by the fraction of paired draws; exactly 1 for the minimizer.
double prob_within(const LossReport& report, Index a, double eta);

/// Members of Lambda_{eta, eps} by the probability threshold.
AcceptableSet acceptable_set(const LossReport& report, const AcceptanceConfig& config);

/// Members of Lambda_{eta, eps} by the lower (1 - eps) prediction interval of
/// D~ (order-statistic route). Agrees with acceptable_set.
std::vector<Index> acceptable_by_interval(const LossReport& report, const AcceptanceConfig& config);

/// Index of the action with the largest lambda in the set.
Index simplest_acceptable(const AcceptableSet& set, const LossReport& report);

/// Empirical quantile (linear interpolation between order statistics).
double quantile(Vector values, double prob);

nlohmann::json to_json(const LossReport& report, const AcceptanceConfig& config);

/// Size vs. percent increase table with 80% predictive intervals.
std::string figure_table_csv(const LossReport& report);

}  // namespace targetpred
