#pragma once

// Bayesian reference models: a closed-form conjugate linear regression and a
// function-on-scalars spline regression with heavy-tailed innovations, their
// samplers, posterior predictive simulation, and the STAR round/transform
// operators.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "targetpred/common.hpp"

namespace targetpred {

/// Paired data {x_i, y_i}. Rows of X and Y are subjects; columns of Y are
/// evaluation points tau_1 < ... < tau_m on [0, 1].
struct Dataset {
  Matrix X;    // n x p covariates (no intercept column)
  Matrix Y;    // n x m responses
  Vector tau;  // m

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index m() const { return Y.cols(); }

  /// Throws InputError when an invariant is violated.
  void validate() const;
};

/// Prepend a column of ones.
Matrix with_intercept(const Matrix& X);

/// Center and scale every non-binary column to sample sd 0.5. Columns whose
/// values are all in {0, 1} are left as is, as are constant columns.
Matrix standardize_covariates(const Matrix& X);

/// Equally spaced grid of m points on [0, 1] (the single point 0.5 when m = 1).
Vector uniform_grid(Index m);

// ---------------------------------------------------------------------------
// Conjugate Gaussian linear model with known noise variance.

struct ConjugateLinearModel {
  Matrix prior_precision;  // p x p, SPD; prior mean is zero
  double noise_variance = 1.0;
};

struct GaussianPosterior {
  Vector mean;
  Matrix covariance;
};

/// Exact posterior of the coefficients of y = X beta + e, e ~ N(0, s2 I),
/// beta ~ N(0, prior_precision^-1). X is used verbatim as the design.
GaussianPosterior fit_conjugate(const Matrix& X, const Vector& y, const ConjugateLinearModel& model);

/// Convenience overload for m = 1 datasets.
GaussianPosterior fit_conjugate(const Dataset& data, const ConjugateLinearModel& model);

// ---------------------------------------------------------------------------
// Function-on-scalars regression.

/// Cubic B-spline basis (order min(4, L)) with equally spaced knots on
/// [tau_1, tau_m], evaluated at tau. Returns m x L.
Matrix bspline_basis(const Vector& tau, Index num_basis);

/// Thin-QR orthonormalization so that basis' basis = I. Throws InputError if
/// the raw basis is numerically rank deficient.
Matrix orthonormalize_basis(const Matrix& raw);

/// min(15, ceil(m / 4)), at least 1.
Index default_num_basis(Index m);

struct FosrModel {
  Matrix basis;  // m x L, orthonormal columns
  double t_dof = 3.0;
  double hyper_a = 0.01;
  double hyper_b = 0.01;

  Index num_basis() const { return basis.cols(); }
  void validate() const;
};

/// Build the default model: orthonormalized cubic B-splines on tau.
/// num_basis = 0 selects default_num_basis(m).
FosrModel make_fosr_model(const Vector& tau, Index num_basis = 0, double t_dof = 3.0);

struct GibbsConfig {
  Index iters = 10000;
  Index burnin = 5000;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Posterior draws.

struct ConjugateDraws {
  Matrix beta;                 // S x p
  double noise_variance = 1.0;
};

/// Draws from the FOSR Gibbs sampler. Coefficient blocks are stored flat, one
/// row per draw: alpha(s, l * q + j) with q = p + 1 (intercept first) and
/// theta(s, i * L + l).
struct FosrDraws {
  Matrix basis;          // m x L
  double t_dof = 3.0;
  Index n = 0;           // subjects in the fitted data
  Index q = 0;           // p + 1
  Matrix alpha;          // S x (L * q)
  Matrix theta;          // S x (n * L)
  Vector sigma_eps;      // S, observation-level scale
  Matrix sigma_gamma;    // S x n, subject-level scales
  Matrix sigma_alpha;    // S x q, coefficient prior scales
  Matrix xi;             // S x n, latent t-mixture precisions

  Index num_basis() const { return basis.cols(); }
  /// L x q coefficient block of draw s.
  Matrix alpha_draw(Index s) const;
};

/// FOSR likelihood of one subject under a posterior draw.
///   integrated:  theta_i integrated out given the draw's remaining parameters.
///   conditional: y_i | theta_i, sigma_eps, xi_i (every parameter of the draw).
/// The conjugate model has no subject-level parameters; both kinds coincide.
enum class LikelihoodKind { integrated, conditional };

class PosteriorDrawSet {
 public:
  using Storage = std::variant<ConjugateDraws, FosrDraws>;

  PosteriorDrawSet() = default;
  explicit PosteriorDrawSet(Storage draws) : draws_(std::move(draws)) {}

  Index size() const;
  bool is_conjugate() const { return std::holds_alternative<ConjugateDraws>(draws_); }
  bool is_fosr() const { return std::holds_alternative<FosrDraws>(draws_); }
  const ConjugateDraws& conjugate() const { return std::get<ConjugateDraws>(draws_); }
  const FosrDraws& fosr() const { return std::get<FosrDraws>(draws_); }
  const Storage& storage() const { return draws_; }

  /// Number of covariates (excluding intercept for FOSR; design width for conjugate).
  Index num_covariates() const;

  /// log p(y_i | theta^s).
  double log_lik_point(const Dataset& data, Index i, Index s,
                       LikelihoodKind kind = LikelihoodKind::integrated) const;

  /// S x n matrix of log_lik_point values.
  Matrix log_lik_matrix(const Dataset& data, LikelihoodKind kind = LikelihoodKind::integrated) const;

  /// Throws NumericalError if any draw is non-finite or any scale is not positive.
  void check_finite() const;

 private:
  Storage draws_;
};

/// Conjugate posterior sampled exactly (S independent draws).
PosteriorDrawSet sample_conjugate(const GaussianPosterior& post, double noise_variance, Index S,
                                  std::uint64_t seed);

/// Gibbs sampler for the FOSR model. Keeps iters - burnin draws, thinning 1.
PosteriorDrawSet gibbs_fosr(const Dataset& data, const FosrModel& model, const GibbsConfig& cfg);

/// Split-chain potential scale reduction of a single scalar chain (the two
/// halves are treated as separate chains). NaN for chains shorter than 4.
double split_rhat(const Vector& chain);

// ---------------------------------------------------------------------------
// Posterior predictive simulation.

/// S x n_design x m predictive curves, stored row-wise: row s * n_design + i.
struct PredictiveDrawSet {
  Matrix values;
  Matrix design;  // n_design x p
  Vector tau;     // m
  Index S = 0;

  Index n_design() const { return design.rows(); }
  Index m() const { return values.cols(); }
  auto curve(Index s, Index i) const { return values.row(s * n_design() + i); }
};

/// How FOSR predictive draws treat a design row.
///   new_subject:    theta~ = alpha' x~ + sigma_gamma~ gamma~, with sigma_gamma~
///                   resampled from the draw's subject-level scales.
///   fitted_subject: design row i is fitted subject i; theta~ = theta_i^s and
///                   the noise uses that subject's scale (a replicate of y_i).
/// The conjugate model has no subject-level parameters; both kinds coincide.
enum class PredictiveKind { new_subject, fitted_subject };

/// One predictive draw per posterior draw per design row. Each (s, i) uses its
/// own RNG stream, so results do not depend on evaluation order.
PredictiveDrawSet predictive_draws(const PosteriorDrawSet& post, const Matrix& design, const Vector& tau,
                                   std::uint64_t seed, PredictiveKind kind = PredictiveKind::new_subject);

/// Predictive draw for a single (s, i) cell; the building block of predictive_draws.
Vector predictive_curve(const PosteriorDrawSet& post, const Eigen::Ref<const Vector>& x, Index s, Index i,
                        std::uint64_t seed, PredictiveKind kind = PredictiveKind::new_subject);

/// Model mean curve at x under draw s (no subject effect, no noise).
Vector mean_curve(const PosteriorDrawSet& post, const Eigen::Ref<const Vector>& x, Index s);

// ---------------------------------------------------------------------------
// STAR operators.

/// floor(t) for t > 0, 0 otherwise.
std::int64_t star_round(double t);

/// 2 (sqrt(t) - 1), t >= 0.
double star_transform(double t);

/// ((u / 2) + 1)^2, u >= -2.
double star_transform_inverse(double u);

}  // namespace targetpred
