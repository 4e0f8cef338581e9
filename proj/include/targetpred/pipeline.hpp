#pragma once

// End-to-end wiring: from a fitted model and its data to targeted actions on a
// lambda path, and from there to the out-of-sample loss report and the
// simplest acceptable action.

#include <cstdint>

#include <json.hpp>

#include "targetpred/action_solver.hpp"
#include "targetpred/functionals.hpp"
#include "targetpred/model_core.hpp"
#include "targetpred/oos_eval.hpp"

namespace targetpred {

/// Design of the linear actions: intercept column followed by the covariates.
/// Conjugate posteriors are fitted on this design directly.
Matrix action_design(const Dataset& data);

/// Rows handed to the model's predictive simulator (covariates for FOSR, the
/// action design for the conjugate model).
Matrix predictive_design(const PosteriorDrawSet& post, const Dataset& data);

struct TargetOptions {
  LossKind loss = LossKind::squared;
  Index n_lambda = 100;
  double ratio = 1e-3;
  double weight_cap = kDefaultWeightCap;
  SolverOptions solver;
  std::uint64_t seed = 0;
  /// Predictive draws at the observed design. Fitted-subject replicates for
  /// FOSR; ignored by the conjugate model.
  PredictiveKind kind = PredictiveKind::fitted_subject;
};

struct TargetResult {
  Matrix design;      // n x (p + 1)
  Matrix func_draws;  // S x n draws of h(y~_i)
  Vector hbar;
  Vector weights;     // adaptive l1 weights, length p
  LambdaPath path;
};

/// hbar, adaptive weights and the warm-started lambda path for a scalar functional.
TargetResult target(const PosteriorDrawSet& post, const Dataset& data, const FunctionalSpec& spec,
                    const TargetOptions& opts);

struct EvaluateOptions {
  Index K = 10;
  Index R = 1000;
  AcceptanceConfig acceptance;
  ImportanceOptions importance;
  SirOptions sir;
  std::uint64_t seed = 0;
  /// Predictive draws scored at held-out points.
  PredictiveKind holdout_kind = PredictiveKind::fitted_subject;
};

struct EvaluationResult {
  FoldPlan plan;
  FoldWeights weights;
  Matrix holdout_draws;  // S x n
  Vector empirical;      // h(y_i)
  LossReport report;
  AcceptableSet acceptable;
  Index selected = 0;    // simplest acceptable action (index on the path)
};

/// Out-of-sample evaluation of every action on target.path.
EvaluationResult evaluate(const PosteriorDrawSet& post, const Dataset& data, const FunctionalSpec& spec,
                          const TargetResult& target, const TargetOptions& topts, const EvaluateOptions& opts);

/// In-sample analogue: full-data fits and full-data predictive draws (uniform
/// subsample) scored on the same fold plan.
LossReport in_sample_report(const EvaluationResult& eval, const TargetResult& target, const TargetOptions& topts,
                            Index R, std::uint64_t seed);

nlohmann::json to_json(const TargetResult& target, const FunctionalSpec& spec, const TargetOptions& opts);

}  // namespace targetpred
