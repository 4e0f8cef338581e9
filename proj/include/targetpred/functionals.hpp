#pragma once

// Predictive functionals h(y~) of response curves.

#include <string>

#include <json.hpp>

#include "targetpred/common.hpp"
#include "targetpred/model_core.hpp"

namespace targetpred {

enum class FunctionalKind { avg, tlac, sd, sedentary, max, argmax, zeros_window, contrast };

std::string to_string(FunctionalKind kind);
FunctionalKind functional_kind_from_string(const std::string& name);

struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::avg;
  double threshold = 100.0;         // sedentary
  double window_lo = 1.0 / 24.0;    // zeros_window, default 1am on a [0, 1] day
  double window_hi = 5.0 / 24.0;    // zeros_window, default 5am
  Matrix contrast;                  // q x m, contrast only

  /// Output dimension: rows of the contrast matrix, 1 otherwise.
  Index output_dim() const;
  bool is_binary() const { return kind == FunctionalKind::zeros_window; }

  /// Throws InputError if parameters are inconsistent with a grid of m points.
  void validate(Index m) const;
};

/// Quadrature weights of the trapezoid rule on tau, normalized to sum to one
/// (integrals are taken relative to the length of [tau_1, tau_m]).
///
/// Integral functionals integrate the piecewise-linear interpolant of the
/// curve exactly. For avg this is the trapezoid rule; for sd, tlac and
/// sedentary it makes the result unchanged by inserting interpolated grid
/// points.
Vector trapezoid_weights(const Vector& tau);

/// h(curve) on the grid tau. Scalar kinds return a length-1 vector.
Vector apply(const FunctionalSpec& spec, const Eigen::Ref<const Vector>& curve, const Vector& tau);

/// Scalar shortcut; throws for contrasts with more than one row.
double apply_scalar(const FunctionalSpec& spec, const Eigen::Ref<const Vector>& curve, const Vector& tau);

/// S x (n_design * q) matrix of functional draws; column i * q + c holds
/// component c at design row i.
Matrix apply_to_draws(const FunctionalSpec& spec, const PredictiveDrawSet& preds);

/// Functional applied to every row of Y (the empirical functionals h(y_i)). n x q.
Matrix apply_to_rows(const FunctionalSpec& spec, const Matrix& Y, const Vector& tau);

/// Column means of a draw matrix.
Vector column_means(const Matrix& draws);

/// Posterior predictive expectation of h at each design row (length n_design * q).
Vector hbar(const FunctionalSpec& spec, const PredictiveDrawSet& preds);

/// Predictive functional draws without materializing the curves: equals
/// apply_to_draws(spec, predictive_draws(post, design, tau, seed)).
Matrix predictive_functional_draws(const FunctionalSpec& spec, const PosteriorDrawSet& post, const Matrix& design,
                                   const Vector& tau, std::uint64_t seed,
                                   PredictiveKind kind = PredictiveKind::new_subject);

nlohmann::json to_json(const FunctionalSpec& spec);
FunctionalSpec functional_from_json(const nlohmann::json& j);

}  // namespace targetpred
