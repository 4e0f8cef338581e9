#include "targetpred/action_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace targetpred {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-column penalty factors over the full design (0 for the intercept).
Vector column_penalties(const Vector& weights, Index q) {
  Vector pen = Vector::Zero(q);
  if (weights.size() > 0) pen.tail(q - 1) = weights;
  return pen;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double penalty_value(const Vector& delta, double lambda, const Vector& pen) {
  double acc = 0.0;
  for (Index j = 0; j < delta.size(); ++j)
    if (delta(j) != 0.0 && pen(j) > 0.0) acc += pen(j) * std::abs(delta(j));
  return acc == 0.0 ? 0.0 : lambda * acc;
}

double smooth_loss(const Vector& hbar, const Vector& eta, LossKind loss) {
  const double n = static_cast<double>(hbar.size());
  if (loss == LossKind::squared) return (hbar - eta).squaredNorm() / n;
  double acc = 0.0;
  for (Index i = 0; i < hbar.size(); ++i) acc += softplus(eta(i)) - hbar(i) * eta(i);
  return acc / n;
}

// Gradient of the smooth part with respect to delta.
Vector smooth_gradient(const Vector& hbar, const Matrix& X, const Vector& delta, LossKind loss) {
  const double n = static_cast<double>(hbar.size());
  const Vector eta = X * delta;
  if (loss == LossKind::squared) return -(2.0 / n) * (X.transpose() * (hbar - eta));
  Vector p(eta.size());
  for (Index i = 0; i < eta.size(); ++i) p(i) = sigmoid(eta(i));
  return (1.0 / n) * (X.transpose() * (p - hbar));
}

double kkt_from_gradient(const Vector& grad, const Vector& delta, double lambda, const Vector& pen) {
  double worst = 0.0;
  for (Index j = 0; j < delta.size(); ++j) {
    double v;
    if (pen(j) <= 0.0) {
      v = std::abs(grad(j));
    } else {
      const double t = lambda * pen(j);
      if (delta(j) != 0.0)
        v = std::abs(grad(j) + t * (delta(j) > 0.0 ? 1.0 : -1.0));
      else
        v = std::max(0.0, std::abs(grad(j)) - t);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

// Coordinate descent for  (kappa / n) sum_i v_i (z_i - x_i' delta)^2 + lambda sum_j pen_j |delta_j|.
class WeightedCd {
 public:
  WeightedCd(const Matrix& X, const Vector& v, const Vector& z, double kappa, double lambda, const Vector& pen,
             Vector start)
      : X_(X), v_(v), z_(z), kappa_(kappa), lambda_(lambda), pen_(pen), delta_(std::move(start)) {
    const double n = static_cast<double>(X.rows());
    curv_.resize(X.cols());
    for (Index j = 0; j < X.cols(); ++j) curv_(j) = kappa_ / n * (v_.array() * X.col(j).array().square()).sum();
    refresh_residual();
  }

  const Vector& delta() const { return delta_; }

  double objective() const {
    const double n = static_cast<double>(X_.rows());
    return kappa_ / n * (v_.array() * resid_.array().square()).sum() + penalty_value(delta_, lambda_, pen_);
  }

  // Sweeps until the largest coefficient change drops below tol. Returns sweeps used.
  Index run(double tol, Index max_sweeps, std::vector<double>* trace) {
    Index sweeps = 0;
    std::vector<Index> all(static_cast<size_t>(X_.cols()));
    for (Index j = 0; j < X_.cols(); ++j) all[static_cast<size_t>(j)] = j;
    while (sweeps < max_sweeps) {
      const double full_change = sweep(all);
      ++sweeps;
      refresh_residual();
      if (trace) trace->push_back(objective());
      if (full_change < tol) return sweeps;
      std::vector<Index> active;
      for (Index j = 0; j < X_.cols(); ++j)
        if (delta_(j) != 0.0 || pen_(j) <= 0.0) active.push_back(j);
      while (sweeps < max_sweeps) {
        const double change = sweep(active);
        ++sweeps;
        if (trace) trace->push_back(objective());
        if (change < tol) break;
      }
    }
    return sweeps;
  }

 private:
  void refresh_residual() { resid_ = z_ - X_ * delta_; }

  double sweep(const std::vector<Index>& cols) {
    const double n = static_cast<double>(X_.rows());
    double max_change = 0.0;
    for (Index j : cols) {
      const double a = curv_(j);
      const double old = delta_(j);
      if (a <= 0.0) {
        if (old != 0.0) {
          resid_ += old * X_.col(j);
          delta_(j) = 0.0;
          max_change = std::max(max_change, std::abs(old));
        }
        continue;
      }
      const double b = kappa_ / n * (v_.array() * X_.col(j).array() * resid_.array()).sum() + a * old;
      const double thr = pen_(j) > 0.0 ? 0.5 * lambda_ * pen_(j) : 0.0;
      const double updated = soft_threshold(b, thr) / a;
      const double diff = updated - old;
      if (diff != 0.0) {
        resid_ -= diff * X_.col(j);
        delta_(j) = updated;
        max_change = std::max(max_change, std::abs(diff));
      }
    }
    return max_change;
  }

  const Matrix& X_;
  const Vector& v_;
  const Vector& z_;
  double kappa_;
  double lambda_;
  const Vector& pen_;
  Vector delta_;
  Vector resid_;
  Vector curv_;
};

std::vector<Index> active_of(const Vector& delta) {
  std::vector<Index> out;
  for (Index j = 1; j < delta.size(); ++j)
    if (delta(j) != 0.0) out.push_back(j);
  return out;
}

[[noreturn]] void fail_convergence(const char* what, Index iters, double kkt, double lambda) {
  std::ostringstream os;
  os << what << " did not converge after " << iters << " iterations (lambda = " << lambda
     << ", KKT residual = " << kkt << ")";
  throw NumericalError(os.str());
}

FitResult solve_squared(const Vector& hbar, const Matrix& X, double lambda, const Vector& pen,
                        const SolverOptions& opts, Vector start) {
  const Index n = X.rows();
  const Index q = X.cols();
  const bool unpenalized = lambda == 0.0 || (pen.array() <= 0.0).all();
  if (unpenalized && n >= q) {
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (qr.rank() == q) start = qr.solve(hbar);
  }
  const Vector ones = Vector::Ones(n);
  FitResult fit;
  fit.lambda = lambda;
  std::vector<double>* trace = opts.record_objective ? &fit.objective_trace : nullptr;
  double tol = opts.tol;
  Index used = 0;
  Vector delta = std::move(start);
  double kkt = kInf;
  while (true) {
    WeightedCd cd(X, ones, hbar, 1.0, lambda, pen, delta);
    used += cd.run(tol, opts.max_iters - used, trace);
    delta = cd.delta();
    kkt = kkt_from_gradient(smooth_gradient(hbar, X, delta, LossKind::squared), delta, lambda, pen);
    if (kkt <= 10.0 * opts.tol) break;
    if (used >= opts.max_iters || tol < 1e-15) fail_convergence("coordinate descent", used, kkt, lambda);
    tol *= 0.1;
  }
  fit.delta = delta;
  fit.kkt_residual = kkt;
  fit.iterations = used;
  return fit;
}

FitResult solve_cross_entropy(const Vector& hbar, const Matrix& X, double lambda, const Vector& pen,
                              const SolverOptions& opts, Vector delta) {
  const Index n = X.rows();
  FitResult fit;
  fit.lambda = lambda;
  auto objective = [&](const Vector& d) {
    return smooth_loss(hbar, X * d, LossKind::cross_entropy) + penalty_value(d, lambda, pen);
  };
  double f = objective(delta);
  double kkt = kInf;
  Index outer = 0;
  double inner_tol = opts.tol;
  Vector w(n), z(n);
  while (outer < opts.max_iters) {
    ++outer;
    const Vector eta = X * delta;
    for (Index i = 0; i < n; ++i) {
      const double p = sigmoid(eta(i));
      w(i) = std::max(p * (1.0 - p), 1e-10);
      z(i) = eta(i) + (hbar(i) - p) / w(i);
    }
    WeightedCd cd(X, w, z, 0.5, lambda, pen, delta);
    cd.run(inner_tol, opts.max_iters, nullptr);
    const Vector step = cd.delta() - delta;
    double t = 1.0;
    Vector cand = delta + step;
    double fc = objective(cand);
    while (fc > f + 1e-14 * std::abs(f) && t > 1e-10) {
      t *= 0.5;
      cand = delta + t * step;
      fc = objective(cand);
    }
    const double change = (cand - delta).cwiseAbs().maxCoeff();
    if (fc <= f + 1e-14 * std::abs(f)) {
      delta = cand;
      f = fc;
    }
    if (opts.record_objective) fit.objective_trace.push_back(f);
    kkt = kkt_from_gradient(smooth_gradient(hbar, X, delta, LossKind::cross_entropy), delta, lambda, pen);
    if (kkt <= 10.0 * opts.tol) break;
    if (change < opts.tol) inner_tol = std::max(inner_tol * 0.1, 1e-15);
  }
  if (kkt > 10.0 * opts.tol) fail_convergence("proximal Newton", outer, kkt, lambda);
  fit.delta = delta;
  fit.kkt_residual = kkt;
  fit.iterations = outer;
  return fit;
}

Vector initial_point(const Vector& hbar, Index q, LossKind loss) {
  Vector d = Vector::Zero(q);
  const double mean = hbar.mean();
  if (loss == LossKind::squared) {
    d(0) = mean;
  } else {
    d(0) = std::log(mean / (1.0 - mean));
  }
  return d;
}

void check_inputs(const Vector& hbar, const Matrix& X, LossKind loss) {
  require(X.rows() == hbar.size(), "design has " + std::to_string(X.rows()) + " rows but hbar has length " +
                                       std::to_string(hbar.size()));
  require(X.rows() >= 1 && X.cols() >= 1, "empty design");
  require(hbar.allFinite() && X.allFinite(), "solver inputs must be finite");
  if (loss == LossKind::cross_entropy) {
    require((hbar.array() >= 0.0).all() && (hbar.array() <= 1.0).all(),
            "cross-entropy targets must be probabilities in [0, 1]");
    const double mean = hbar.mean();
    require(mean > 0.0 && mean < 1.0, "cross-entropy targets are degenerate (all 0 or all 1)");
  }
}

FitResult solve_impl(const Vector& hbar, const Matrix& X, double lambda, const Vector& pen, LossKind loss,
                     const SolverOptions& opts, const Vector* warm_start) {
  Vector start = warm_start ? *warm_start : initial_point(hbar, X.cols(), loss);
  require(start.size() == X.cols(), "warm start has wrong length");
  FitResult fit = loss == LossKind::squared ? solve_squared(hbar, X, lambda, pen, opts, std::move(start))
                                            : solve_cross_entropy(hbar, X, lambda, pen, opts, std::move(start));
  if (std::isfinite(lambda)) {
    fit.objective = smooth_loss(hbar, X * fit.delta, loss) + penalty_value(fit.delta, lambda, pen);
  } else {
    fit.objective = smooth_loss(hbar, X * fit.delta, loss);
  }
  fit.active_set = active_of(fit.delta);
  if (!fit.delta.allFinite()) throw NumericalError("solver produced non-finite coefficients");
  return fit;
}

}  // namespace

void ActionSpec::validate(Index p) const {
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be a finite nonnegative number");
  if (form == ActionForm::unrestricted)
    require(penalty == PenaltyKind::none, "unrestricted actions cannot be penalized");
  if (penalty == PenaltyKind::adaptive_l1) {
    require(weights.size() == p, "adaptive weights have length " + std::to_string(weights.size()) +
                                     ", expected " + std::to_string(p));
    require(weights.allFinite() && (weights.array() >= 0.0).all(), "adaptive weights must be finite and >= 0");
  }
}

double soft_threshold(double z, double threshold) {
  if (z > threshold) return z - threshold;
  if (z < -threshold) return z + threshold;
  return 0.0;
}

Vector adaptive_weights(const Matrix& func_draws, const Matrix& design, double weight_cap) {
  const Index S = func_draws.rows();
  const Index n = design.rows();
  const Index q = design.cols();
  require(S >= 2, "adaptive weights need at least 2 draws");
  require(func_draws.cols() == n, "functional draws have " + std::to_string(func_draws.cols()) +
                                      " columns, design has " + std::to_string(n) + " rows");
  require(q >= 2, "design needs an intercept and at least one covariate");
  require(weight_cap > 0.0, "weight cap must be positive");
  for (Index j = 0; j < q; ++j)
    require(design.col(j).cwiseAbs().maxCoeff() > 0.0, "design column " + std::to_string(j) + " is all zero");

  Matrix gram = design.transpose() * design;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (n < q || qr.rank() < q) gram.diagonal().array() += 1e-6;
  const Matrix coef = gram.ldlt().solve(design.transpose() * func_draws.transpose());  // q x S

  Vector w(q - 1);
  for (Index j = 1; j < q; ++j) {
    double acc = 0.0;
    for (Index s = 0; s < S; ++s) {
      const double a = std::abs(coef(j, s));
      acc += a > 0.0 ? std::min(1.0 / a, weight_cap) : weight_cap;
    }
    w(j - 1) = acc / static_cast<double>(S);
  }
  return w;
}

double penalized_objective(const Vector& hbar, const Matrix& design, const Vector& delta, double lambda,
                           const Vector& weights, LossKind loss) {
  const Vector pen = column_penalties(weights, design.cols());
  return smooth_loss(hbar, design * delta, loss) + penalty_value(delta, lambda, pen);
}

double kkt_residual(const Vector& hbar, const Matrix& design, const Vector& delta, double lambda,
                    const Vector& weights, LossKind loss) {
  const Vector pen = column_penalties(weights, design.cols());
  return kkt_from_gradient(smooth_gradient(hbar, design, delta, loss), delta, lambda, pen);
}

double lambda_max(const Vector& hbar, const Matrix& design, const Vector& weights, LossKind loss,
                  const SolverOptions& opts) {
  check_inputs(hbar, design, loss);
  const Index q = design.cols();
  require(weights.size() == q - 1, "weights must have one entry per penalized column");
  const Vector pen = column_penalties(weights, q);
  if ((pen.array() <= 0.0).all()) return 0.0;
  const FitResult base = solve_impl(hbar, design, kInf, pen, loss, opts, nullptr);
  const Vector grad = smooth_gradient(hbar, design, base.delta, loss);
  double best = 0.0;
  for (Index j = 1; j < q; ++j)
    if (pen(j) > 0.0) best = std::max(best, std::abs(grad(j)) / pen(j));
  return best * (1.0 + 1e-12);
}

FitResult solve_penalized(const Vector& hbar, const Matrix& design, const ActionSpec& spec,
                          const SolverOptions& opts, const Vector* warm_start) {
  check_inputs(hbar, design, spec.loss);
  const Index q = design.cols();
  require(spec.form == ActionForm::linear, "solve_penalized handles linear actions; use solve_unrestricted");
  spec.validate(q - 1);
  require(opts.tol > 0.0 && opts.max_iters >= 1, "invalid solver options");
  const Vector pen = spec.penalty == PenaltyKind::adaptive_l1 ? column_penalties(spec.weights, q) : Vector::Zero(q);
  const double lambda = spec.penalty == PenaltyKind::adaptive_l1 ? spec.lambda : 0.0;
  return solve_impl(hbar, design, lambda, pen, spec.loss, opts, warm_start);
}

Vector solve_unrestricted(const Matrix& func_draws) { return func_draws.colwise().mean().transpose(); }

std::vector<double> lambda_grid(double lmax, Index n_lambda, double ratio, bool append_zero) {
  require(n_lambda >= 2, "n_lambda must be at least 2");
  require(ratio > 0.0 && ratio < 1.0, "lambda ratio must lie in (0, 1)");
  std::vector<double> grid;
  if (lmax > 0.0) {
    for (Index k = 0; k < n_lambda; ++k)
      grid.push_back(lmax * std::pow(ratio, static_cast<double>(k) / static_cast<double>(n_lambda - 1)));
  }
  if (append_zero || grid.empty()) grid.push_back(0.0);
  return grid;
}

LambdaPath fit_lambda_grid(const Vector& hbar, const Matrix& design, const Vector& weights,
                           const std::vector<double>& lambdas, LossKind loss, const SolverOptions& opts) {
  check_inputs(hbar, design, loss);
  LambdaPath path;
  path.lambdas = lambdas;
  ActionSpec spec;
  spec.penalty = PenaltyKind::adaptive_l1;
  spec.weights = weights;
  spec.loss = loss;
  const Vector* warm = nullptr;
  for (double lam : lambdas) {
    spec.lambda = lam;
    path.fits.push_back(solve_penalized(hbar, design, spec, opts, warm));
    warm = &path.fits.back().delta;
  }
  return path;
}

LambdaPath lambda_path(const Vector& hbar, const Matrix& design, const Vector& weights, const PathOptions& path,
                       const SolverOptions& opts) {
  const double lmax = lambda_max(hbar, design, weights, path.loss, opts);
  return fit_lambda_grid(hbar, design, weights, lambda_grid(lmax, path.n_lambda, path.ratio, true), path.loss,
                         opts);
}

Vector predict(const Vector& delta, const Matrix& design, LossKind loss) {
  require(design.cols() == delta.size(), "coefficient length does not match design");
  Vector eta = design * delta;
  if (loss == LossKind::cross_entropy)
    for (Index i = 0; i < eta.size(); ++i) eta(i) = sigmoid(eta(i));
  return eta;
}

}  // namespace targetpred
