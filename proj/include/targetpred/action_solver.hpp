#pragma once

// Optimal parametrized actions. Under squared loss the posterior predictive
// expected loss of a linear action reduces to penalized least squares on the
// predictive means hbar:
//
//   delta = argmin (1/n) sum_i (hbar_i - x_i' delta)^2 + lambda sum_j w_j |delta_j|
//
// with the intercept (design column 0) unpenalized. The solvers here use that
// normalization exactly; soft-threshold levels and lambda_max follow from it.

#include <vector>

#include "targetpred/common.hpp"

namespace targetpred {

enum class ActionForm { linear, unrestricted };
enum class PenaltyKind { none, adaptive_l1 };
enum class LossKind { squared, cross_entropy };

inline constexpr double kDefaultWeightCap = 1e6;

struct ActionSpec {
  ActionForm form = ActionForm::linear;
  PenaltyKind penalty = PenaltyKind::adaptive_l1;
  double lambda = 0.0;
  /// One weight per penalized design column (columns 1..p). A zero weight
  /// leaves that column unpenalized.
  Vector weights;
  LossKind loss = LossKind::squared;

  void validate(Index p) const;
};

struct SolverOptions {
  double tol = 1e-8;          // max absolute coefficient change between sweeps
  Index max_iters = 100000;   // coordinate-descent sweeps (outer Newton steps for cross-entropy)
  bool record_objective = false;
};

struct FitResult {
  Vector delta;                   // p + 1 coefficients, intercept first
  std::vector<Index> active_set;  // design columns j >= 1 with delta_j != 0
  double lambda = 0.0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  Index iterations = 0;
  std::vector<double> objective_trace;  // per sweep, when requested
};

struct LambdaPath {
  std::vector<double> lambdas;
  std::vector<FitResult> fits;
};

double soft_threshold(double z, double threshold);

/// Adaptive l1 weights: for every draw s, project the functional draws
/// {h(y~_i^s)}_i onto the linear predictor by least squares, then average
/// min(1 / |coef_j^s|, cap) over draws. func_draws is S x n, design n x (p + 1).
/// The projection is ridge-stabilized (1e-6) when the design is rank deficient.
Vector adaptive_weights(const Matrix& func_draws, const Matrix& design, double weight_cap = kDefaultWeightCap);

double penalized_objective(const Vector& hbar, const Matrix& design, const Vector& delta, double lambda,
                           const Vector& weights, LossKind loss);

/// Largest violation of the subgradient optimality conditions at delta.
double kkt_residual(const Vector& hbar, const Matrix& design, const Vector& delta, double lambda,
                    const Vector& weights, LossKind loss);

/// Smallest lambda at which every penalized coefficient is exactly zero
/// (inflated by 1e-12 relative so the zero is exact in floating point).
double lambda_max(const Vector& hbar, const Matrix& design, const Vector& weights, LossKind loss,
                  const SolverOptions& opts = {});

/// Penalized fit. Squared loss uses cyclic coordinate descent with weighted
/// soft-thresholding; cross-entropy uses proximal Newton (penalized IRLS with a
/// backtracking line search) on the Bernoulli deviance with soft labels
/// hbar in [0, 1]. Throws NumericalError if the KKT residual cannot be brought
/// below 10 * tol within max_iters.
FitResult solve_penalized(const Vector& hbar, const Matrix& design, const ActionSpec& spec,
                          const SolverOptions& opts = {}, const Vector* warm_start = nullptr);

/// The unrestricted, unpenalized action: the Bayes estimator hbar itself.
Vector solve_unrestricted(const Matrix& func_draws);

/// lambda_max * ratio^(k / (n - 1)), k = 0..n-1, optionally followed by 0.
std::vector<double> lambda_grid(double lambda_max, Index n_lambda, double ratio, bool append_zero = true);

struct PathOptions {
  Index n_lambda = 100;
  double ratio = 1e-3;
  LossKind loss = LossKind::squared;
};

/// Warm-started path from lambda_max down to ratio * lambda_max, then lambda = 0.
LambdaPath lambda_path(const Vector& hbar, const Matrix& design, const Vector& weights, const PathOptions& path,
                       const SolverOptions& opts = {});

/// Warm-started fits on a caller-supplied grid (assumed decreasing).
LambdaPath fit_lambda_grid(const Vector& hbar, const Matrix& design, const Vector& weights,
                           const std::vector<double>& lambdas, LossKind loss, const SolverOptions& opts = {});

/// Point predictions: x' delta for squared loss, the logistic mean for cross-entropy.
Vector predict(const Vector& delta, const Matrix& design, LossKind loss);

}  // namespace targetpred
