#include "targetpred/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "targetpred/rng.hpp"

namespace targetpred {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

void Dataset::validate() const {
  require(n() >= 2, "dataset needs n >= 2 rows, got " + std::to_string(n()));
  require(m() >= 1, "dataset needs m >= 1 response columns");
  require(Y.rows() == X.rows(),
          "X has " + std::to_string(X.rows()) + " rows but Y has " + std::to_string(Y.rows()));
  require(tau.size() == m(), "tau has length " + std::to_string(tau.size()) + ", expected m = " +
                                 std::to_string(m()));
  require(all_finite(X) && all_finite(Y) && tau.allFinite(), "dataset contains missing or non-finite entries");
  for (Index j = 0; j < tau.size(); ++j) {
    require(tau(j) >= 0.0 && tau(j) <= 1.0, "tau must lie in [0, 1]");
    if (j > 0) require(tau(j) > tau(j - 1), "tau must be strictly increasing");
  }
}

Matrix with_intercept(const Matrix& X) {
  Matrix out(X.rows(), X.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(X.cols()) = X;
  return out;
}

Matrix standardize_covariates(const Matrix& X) {
  Matrix out = X;
  const Index n = X.rows();
  if (n < 2) return out;
  for (Index j = 0; j < X.cols(); ++j) {
    const auto col = X.col(j);
    const bool binary = (col.array() == 0.0 || col.array() == 1.0).all();
    if (binary) continue;
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
    if (sd <= 0.0) continue;
    out.col(j) = (col.array() - mean) * (0.5 / sd);
  }
  return out;
}

Vector uniform_grid(Index m) {
  require(m >= 1, "grid needs at least one point");
  if (m == 1) return Vector::Constant(1, 0.5);
  return Vector::LinSpaced(m, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

GaussianPosterior fit_conjugate(const Matrix& X, const Vector& y, const ConjugateLinearModel& model) {
  const Index p = X.cols();
  require(X.rows() == y.size(), "design has " + std::to_string(X.rows()) + " rows but y has length " +
                                    std::to_string(y.size()));
  require(model.prior_precision.rows() == p && model.prior_precision.cols() == p,
          "prior precision is " + dims(model.prior_precision.rows(), model.prior_precision.cols()) +
              ", expected " + dims(p, p));
  require(model.noise_variance > 0.0 && std::isfinite(model.noise_variance), "noise variance must be positive");
  const Matrix& P0 = model.prior_precision;
  require((P0 - P0.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, P0.cwiseAbs().maxCoeff()),
          "prior precision is not symmetric");
  Eigen::LLT<Matrix> prior_chol(P0);
  require(prior_chol.info() == Eigen::Success, "prior precision is not positive definite");

  const double inv_s2 = 1.0 / model.noise_variance;
  Matrix precision = inv_s2 * (X.transpose() * X) + P0;
  Eigen::LLT<Matrix> chol(precision);
  if (chol.info() != Eigen::Success) throw NumericalError("posterior precision is not positive definite");
  GaussianPosterior post;
  post.mean = chol.solve(inv_s2 * (X.transpose() * y));
  post.covariance = chol.solve(Matrix::Identity(p, p));
  return post;
}

GaussianPosterior fit_conjugate(const Dataset& data, const ConjugateLinearModel& model) {
  require(data.m() == 1, "conjugate model expects a scalar response (m = 1), got m = " + std::to_string(data.m()));
  return fit_conjugate(data.X, data.Y.col(0), model);
}

// ---------------------------------------------------------------------------

Index default_num_basis(Index m) {
  const Index quarter = (m + 3) / 4;
  return std::max<Index>(1, std::min<Index>(15, quarter));
}

Matrix bspline_basis(const Vector& tau, Index num_basis) {
  const Index m = tau.size();
  const Index L = num_basis;
  require(m >= 1, "empty evaluation grid");
  require(L >= 1, "need at least one basis function");
  require(L <= m, "num_basis (" + std::to_string(L) + ") exceeds grid size (" + std::to_string(m) + ")");
  const Index order = std::min<Index>(4, L);
  const Index degree = order - 1;
  const double lo = tau(0);
  const double hi = tau(m - 1);
  if (L == 1) return Matrix::Ones(m, 1);
  require(hi > lo, "grid must span a positive interval");

  // Clamped knot vector, L + order entries.
  const Index n_interior = L - order;
  std::vector<double> t;
  t.reserve(static_cast<size_t>(L + order));
  for (Index k = 0; k < order; ++k) t.push_back(lo);
  for (Index k = 1; k <= n_interior; ++k)
    t.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n_interior + 1));
  for (Index k = 0; k < order; ++k) t.push_back(hi);

  Matrix B = Matrix::Zero(m, L);
  std::vector<double> N(static_cast<size_t>(order)), left(static_cast<size_t>(order)),
      right(static_cast<size_t>(order));
  for (Index r = 0; r < m; ++r) {
    const double x = tau(r);
    Index span = L - 1;
    if (x < hi) {
      span = degree;
      while (span < L - 1 && x >= t[static_cast<size_t>(span + 1)]) ++span;
    }
    N[0] = 1.0;
    for (Index j = 1; j <= degree; ++j) {
      left[j] = x - t[static_cast<size_t>(span + 1 - j)];
      right[j] = t[static_cast<size_t>(span + j)] - x;
      double saved = 0.0;
      for (Index k = 0; k < j; ++k) {
        const double temp = N[k] / (right[k + 1] + left[j - k]);
        N[k] = saved + right[k + 1] * temp;
        saved = left[j - k] * temp;
      }
      N[j] = saved;
    }
    for (Index k = 0; k <= degree; ++k) B(r, span - degree + k) = N[k];
  }
  return B;
}

Matrix orthonormalize_basis(const Matrix& raw) {
  const Index m = raw.rows();
  const Index L = raw.cols();
  require(L >= 1 && L <= m, "basis must have 1 <= L <= m columns");
  Eigen::HouseholderQR<Matrix> qr(raw);
  const Matrix R = qr.matrixQR().topRows(L).triangularView<Eigen::Upper>();
  const double scale = R.diagonal().cwiseAbs().maxCoeff();
  for (Index j = 0; j < L; ++j) {
    if (!(std::abs(R(j, j)) > 1e-10 * scale))
      throw InputError("basis is rank deficient (column " + std::to_string(j) + ")");
  }
  Matrix Q = qr.householderQ() * Matrix::Identity(m, L);
  for (Index j = 0; j < L; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

void FosrModel::validate() const {
  require(basis.rows() >= 1 && basis.cols() >= 1, "empty basis");
  require(basis.cols() <= basis.rows(), "basis has more columns than grid points");
  const Matrix gram = basis.transpose() * basis;
  const double err = (gram - Matrix::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
  require(err < 1e-8, "basis columns are not orthonormal");
  require(t_dof > 0.0, "t degrees of freedom must be positive");
  require(hyper_a > 0.0 && hyper_b > 0.0, "Gamma hyperparameters must be positive");
}

FosrModel make_fosr_model(const Vector& tau, Index num_basis, double t_dof) {
  const Index L = num_basis > 0 ? num_basis : default_num_basis(tau.size());
  FosrModel model;
  model.basis = orthonormalize_basis(bspline_basis(tau, L));
  model.t_dof = t_dof;
  return model;
}

// ---------------------------------------------------------------------------

Matrix FosrDraws::alpha_draw(Index s) const {
  const Index L = num_basis();
  Matrix a(L, q);
  for (Index l = 0; l < L; ++l)
    for (Index j = 0; j < q; ++j) a(l, j) = alpha(s, l * q + j);
  return a;
}

Index PosteriorDrawSet::size() const {
  return std::visit(
      [](const auto& d) -> Index {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, ConjugateDraws>)
          return d.beta.rows();
        else
          return d.alpha.rows();
      },
      draws_);
}

Index PosteriorDrawSet::num_covariates() const {
  if (is_conjugate()) return conjugate().beta.cols();
  return fosr().q - 1;
}

namespace {

struct Projection {
  Matrix coef;  // n x L
  Vector rss;   // n
};

Projection project_responses(const Matrix& Y, const Matrix& basis) {
  Projection out;
  out.coef = Y * basis;
  const Matrix resid = Y - out.coef * basis.transpose();
  out.rss = resid.rowwise().squaredNorm();
  return out;
}

double fosr_log_lik(const FosrDraws& d, const Eigen::Ref<const Vector>& xq, const Eigen::Ref<const Vector>& c,
                    double rss, Index m, Index i, Index s, LikelihoodKind kind) {
  const Index L = d.num_basis();
  const double sig2_eps = d.sigma_eps(s) * d.sigma_eps(s);
  const double xi = d.xi(s, i);
  const double noise_var = sig2_eps / xi;
  if (kind == LikelihoodKind::conditional) {
    double ss = rss;
    for (Index l = 0; l < L; ++l) {
      const double e = c(l) - d.theta(s, i * L + l);
      ss += e * e;
    }
    return -0.5 * static_cast<double>(m) * (kLog2Pi + std::log(noise_var)) - 0.5 * ss / noise_var;
  }
  const double sg = d.sigma_gamma(s, i);
  const double v = sg * sg + noise_var;
  double quad = 0.0;
  for (Index l = 0; l < L; ++l) {
    double mu = 0.0;
    for (Index j = 0; j < d.q; ++j) mu += d.alpha(s, l * d.q + j) * xq(j);
    const double e = c(l) - mu;
    quad += e * e;
  }
  double ll = -0.5 * static_cast<double>(L) * (kLog2Pi + std::log(v)) - 0.5 * quad / v;
  const Index resid_dim = m - L;
  if (resid_dim > 0) ll += -0.5 * static_cast<double>(resid_dim) * (kLog2Pi + std::log(noise_var)) - 0.5 * rss / noise_var;
  return ll;
}

}  // namespace

double PosteriorDrawSet::log_lik_point(const Dataset& data, Index i, Index s, LikelihoodKind kind) const {
  require(i >= 0 && i < data.n(), "subject index out of range");
  require(s >= 0 && s < size(), "draw index out of range");
  if (is_conjugate()) {
    const auto& d = conjugate();
    require(data.m() == 1 && data.p() == d.beta.cols(), "dataset does not match conjugate draws");
    const double mu = data.X.row(i).dot(d.beta.row(s));
    const double e = data.Y(i, 0) - mu;
    return -0.5 * (kLog2Pi + std::log(d.noise_variance)) - 0.5 * e * e / d.noise_variance;
  }
  const auto& d = fosr();
  require(data.m() == d.basis.rows() && data.p() + 1 == d.q, "dataset does not match FOSR draws");
  const Vector yi = data.Y.row(i).transpose();
  const Vector c = d.basis.transpose() * yi;
  const double rss = std::max(0.0, (yi - d.basis * c).squaredNorm());
  Vector xq(d.q);
  xq(0) = 1.0;
  xq.tail(d.q - 1) = data.X.row(i).transpose();
  require(kind == LikelihoodKind::integrated || data.n() == d.n,
          "conditional likelihood requires the dataset the draws were fitted to");
  return fosr_log_lik(d, xq, c, rss, data.m(), i, s, kind);
}

Matrix PosteriorDrawSet::log_lik_matrix(const Dataset& data, LikelihoodKind kind) const {
  const Index S = size();
  const Index n = data.n();
  Matrix out(S, n);
  if (is_conjugate()) {
    const auto& d = conjugate();
    require(data.m() == 1 && data.p() == d.beta.cols(), "dataset does not match conjugate draws");
    const Matrix mu = d.beta * data.X.transpose();  // S x n
    const double c0 = -0.5 * (kLog2Pi + std::log(d.noise_variance));
    for (Index i = 0; i < n; ++i)
      out.col(i) = (c0 - 0.5 * (data.Y(i, 0) - mu.col(i).array()).square() / d.noise_variance).matrix();
    return out;
  }
  const auto& d = fosr();
  require(data.m() == d.basis.rows() && data.p() + 1 == d.q, "dataset does not match FOSR draws");
  require(data.n() == d.n, "log-likelihood requires the dataset the draws were fitted to");
  const Projection proj = project_responses(data.Y, d.basis);
  const Matrix Xq = with_intercept(data.X);
  for (Index i = 0; i < n; ++i) {
    const Vector xq = Xq.row(i).transpose();
    const Vector c = proj.coef.row(i).transpose();
    for (Index s = 0; s < S; ++s) out(s, i) = fosr_log_lik(d, xq, c, proj.rss(i), data.m(), i, s, kind);
  }
  return out;
}

void PosteriorDrawSet::check_finite() const {
  if (is_conjugate()) {
    const auto& d = conjugate();
    if (!d.beta.allFinite()) throw NumericalError("non-finite coefficient draws");
    if (!(d.noise_variance > 0.0)) throw NumericalError("noise variance must be positive");
    return;
  }
  const auto& d = fosr();
  if (!d.alpha.allFinite() || !d.theta.allFinite()) throw NumericalError("non-finite coefficient draws");
  if (!((d.sigma_eps.array() > 0.0).all() && (d.sigma_gamma.array() > 0.0).all() &&
        (d.sigma_alpha.array() > 0.0).all() && (d.xi.array() > 0.0).all()) ||
      !d.sigma_eps.allFinite() || !d.sigma_gamma.allFinite() || !d.sigma_alpha.allFinite() || !d.xi.allFinite())
    throw NumericalError("variance draws must be finite and strictly positive");
}

PosteriorDrawSet sample_conjugate(const GaussianPosterior& post, double noise_variance, Index S,
                                  std::uint64_t seed) {
  require(S >= 1, "need at least one draw");
  const Index p = post.mean.size();
  Eigen::LLT<Matrix> chol(post.covariance);
  if (chol.info() != Eigen::Success) throw NumericalError("posterior covariance is not positive definite");
  const Matrix Lc = chol.matrixL();
  ConjugateDraws d;
  d.noise_variance = noise_variance;
  d.beta.resize(S, p);
  Vector z(p);
  for (Index s = 0; s < S; ++s) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s));
    for (Index j = 0; j < p; ++j) z(j) = rng.normal();
    d.beta.row(s) = (post.mean + Lc * z).transpose();
  }
  return PosteriorDrawSet(std::move(d));
}

// ---------------------------------------------------------------------------

PosteriorDrawSet gibbs_fosr(const Dataset& data, const FosrModel& model, const GibbsConfig& cfg) {
  require(data.n() >= 2, "FOSR regression layer needs at least 2 subjects, got n = " + std::to_string(data.n()));
  data.validate();
  model.validate();
  require(cfg.burnin >= 0 && cfg.iters > cfg.burnin, "need iters > burnin >= 0");
  require(model.basis.rows() == data.m(), "basis has " + std::to_string(model.basis.rows()) +
                                              " rows but data has m = " + std::to_string(data.m()));

  const Index n = data.n();
  const Index m = data.m();
  const Index L = model.num_basis();
  const Matrix Xq = with_intercept(data.X);
  const Index q = Xq.cols();
  const double a = model.hyper_a;
  const double b = model.hyper_b;
  const double nu = model.t_dof;

  const Projection proj = project_responses(data.Y, model.basis);
  const Matrix& C = proj.coef;

  Rng rng(cfg.seed);

  // Initial state.
  Matrix theta = C;
  Matrix alpha;  // q x L
  {
    Matrix G = Xq.transpose() * Xq;
    G.diagonal().array() += 1e-6;
    alpha = G.ldlt().solve(Xq.transpose() * C);
  }
  Vector sig2_gamma(n);
  for (Index i = 0; i < n; ++i) {
    const double v = (C.row(i) - Xq.row(i) * alpha).squaredNorm() / static_cast<double>(L);
    sig2_gamma(i) = v > 1e-8 ? v : 1.0;
  }
  double sig2_eps = 1.0;
  if (m > L) {
    const double v = proj.rss.sum() / static_cast<double>(n * (m - L));
    if (v > 1e-12) sig2_eps = v;
  }
  Vector xi = Vector::Ones(n);
  Vector sig2_alpha = Vector::Ones(q);

  const Index S = cfg.iters - cfg.burnin;
  FosrDraws out;
  out.basis = model.basis;
  out.t_dof = nu;
  out.n = n;
  out.q = q;
  out.alpha.resize(S, L * q);
  out.theta.resize(S, n * L);
  out.sigma_eps.resize(S);
  out.sigma_gamma.resize(S, n);
  out.sigma_alpha.resize(S, q);
  out.xi.resize(S, n);

  Matrix XtW(q, n);
  Matrix Z(q, L);
  Vector sse(n);
  for (Index it = 0; it < cfg.iters; ++it) {
    // Subject-level basis coefficients.
    const Matrix fitted = Xq * alpha;  // n x L
    for (Index i = 0; i < n; ++i) {
      const double w_obs = xi(i) / sig2_eps;
      const double w_pri = 1.0 / sig2_gamma(i);
      const double prec = w_obs + w_pri;
      const double sd = 1.0 / std::sqrt(prec);
      for (Index l = 0; l < L; ++l)
        theta(i, l) = (w_obs * C(i, l) + w_pri * fitted(i, l)) / prec + sd * rng.normal();
    }

    // Regression coefficients; the precision is shared by every basis index.
    for (Index i = 0; i < n; ++i) XtW.col(i) = Xq.row(i).transpose() / sig2_gamma(i);
    Matrix prec = XtW * Xq;
    prec.diagonal() += sig2_alpha.cwiseInverse();
    Eigen::LLT<Matrix> chol(prec);
    if (chol.info() != Eigen::Success) throw NumericalError("Gibbs: coefficient precision lost definiteness");
    for (Index j = 0; j < q; ++j)
      for (Index l = 0; l < L; ++l) Z(j, l) = rng.normal();
    alpha = chol.solve(XtW * theta) + chol.matrixU().solve(Z);

    for (Index j = 0; j < q; ++j) {
      const double ss = alpha.row(j).squaredNorm();
      sig2_alpha(j) = 1.0 / rng.gamma(a + 0.5 * static_cast<double>(L), b + 0.5 * ss);
    }

    const Matrix fitted_new = Xq * alpha;
    for (Index i = 0; i < n; ++i) {
      const double ss = (theta.row(i) - fitted_new.row(i)).squaredNorm();
      sig2_gamma(i) = 1.0 / rng.gamma(a + 0.5 * static_cast<double>(L), b + 0.5 * ss);
    }

    // Heavy-tailed innovations: per-subject scale mixture.
    for (Index i = 0; i < n; ++i) {
      sse(i) = proj.rss(i) + (C.row(i) - theta.row(i)).squaredNorm();
      xi(i) = rng.gamma(0.5 * nu + 0.5 * static_cast<double>(m), 0.5 * nu + 0.5 * sse(i) / sig2_eps);
    }
    const double scaled = xi.dot(sse);
    sig2_eps = 1.0 / rng.gamma(a + 0.5 * static_cast<double>(n * m), b + 0.5 * scaled);

    if (!std::isfinite(sig2_eps) || !(sig2_eps > 0.0))
      throw NumericalError("Gibbs: non-finite noise variance at iteration " + std::to_string(it));

    if (it >= cfg.burnin) {
      const Index s = it - cfg.burnin;
      for (Index l = 0; l < L; ++l)
        for (Index j = 0; j < q; ++j) out.alpha(s, l * q + j) = alpha(j, l);
      for (Index i = 0; i < n; ++i)
        for (Index l = 0; l < L; ++l) out.theta(s, i * L + l) = theta(i, l);
      out.sigma_eps(s) = std::sqrt(sig2_eps);
      out.sigma_gamma.row(s) = sig2_gamma.cwiseSqrt().transpose();
      out.sigma_alpha.row(s) = sig2_alpha.cwiseSqrt().transpose();
      out.xi.row(s) = xi.transpose();
    }
  }
  PosteriorDrawSet post(std::move(out));
  post.check_finite();
  return post;
}

double split_rhat(const Vector& chain) {
  const Index N = chain.size();
  if (N < 4) return std::numeric_limits<double>::quiet_NaN();
  const Index half = N / 2;
  const Vector c1 = chain.head(half);
  const Vector c2 = chain.tail(half);
  const double m1 = c1.mean();
  const double m2 = c2.mean();
  const double hn = static_cast<double>(half);
  const double v1 = (c1.array() - m1).square().sum() / (hn - 1.0);
  const double v2 = (c2.array() - m2).square().sum() / (hn - 1.0);
  const double W = 0.5 * (v1 + v2);
  const double grand = 0.5 * (m1 + m2);
  const double B = hn * ((m1 - grand) * (m1 - grand) + (m2 - grand) * (m2 - grand));
  if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (hn - 1.0) / hn * W + B / hn;
  return std::sqrt(var_plus / W);
}

// ---------------------------------------------------------------------------

Vector mean_curve(const PosteriorDrawSet& post, const Eigen::Ref<const Vector>& x, Index s) {
  if (post.is_conjugate()) {
    const auto& d = post.conjugate();
    require(x.size() == d.beta.cols(), "design row has wrong width");
    return Vector::Constant(1, x.dot(d.beta.row(s)));
  }
  const auto& d = post.fosr();
  require(x.size() + 1 == d.q, "design row has wrong width");
  const Index L = d.num_basis();
  Vector mu(L);
  for (Index l = 0; l < L; ++l) {
    double acc = d.alpha(s, l * d.q);
    for (Index j = 1; j < d.q; ++j) acc += d.alpha(s, l * d.q + j) * x(j - 1);
    mu(l) = acc;
  }
  return d.basis * mu;
}

Vector predictive_curve(const PosteriorDrawSet& post, const Eigen::Ref<const Vector>& x, Index s, Index i,
                        std::uint64_t seed, PredictiveKind kind) {
  Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i));
  if (post.is_conjugate()) {
    const auto& d = post.conjugate();
    require(x.size() == d.beta.cols(), "design row has wrong width");
    const double mu = x.dot(d.beta.row(s));
    const double e = rng.normal();
    return Vector::Constant(1, mu + std::sqrt(d.noise_variance) * e);
  }
  const auto& d = post.fosr();
  require(x.size() + 1 == d.q, "design row has wrong width");
  const Index L = d.num_basis();
  const Index m = d.basis.rows();
  Vector th(L);
  double scale_mix = 0.0;
  if (kind == PredictiveKind::fitted_subject) {
    require(i >= 0 && i < d.n, "fitted-subject predictive needs a fitted subject index, got " + std::to_string(i));
    th = d.theta.row(s).segment(i * L, L).transpose();
    scale_mix = d.xi(s, i);
  } else {
    const auto subject = static_cast<Index>(rng.below(static_cast<std::uint64_t>(d.n)));
    const double sg = d.sigma_gamma(s, subject);
    for (Index l = 0; l < L; ++l) {
      double acc = d.alpha(s, l * d.q);
      for (Index j = 1; j < d.q; ++j) acc += d.alpha(s, l * d.q + j) * x(j - 1);
      th(l) = acc + sg * rng.normal();
    }
    scale_mix = rng.gamma(0.5 * d.t_dof, 0.5 * d.t_dof);
  }
  Vector curve = d.basis * th;
  const double sd = d.sigma_eps(s) / std::sqrt(scale_mix);
  for (Index j = 0; j < m; ++j) curve(j) += sd * rng.normal();
  return curve;
}

PredictiveDrawSet predictive_draws(const PosteriorDrawSet& post, const Matrix& design, const Vector& tau,
                                   std::uint64_t seed, PredictiveKind kind) {
  const Index S = post.size();
  const Index nd = design.rows();
  require(design.cols() == post.num_covariates(), "design has " + std::to_string(design.cols()) +
                                                      " columns, model expects " +
                                                      std::to_string(post.num_covariates()));
  if (kind == PredictiveKind::fitted_subject && post.is_fosr())
    require(nd == post.fosr().n, "fitted-subject predictive needs the fitted design (" + std::to_string(post.fosr().n) +
                                     " rows), got " + std::to_string(nd));
  const Index m = post.is_conjugate() ? 1 : post.fosr().basis.rows();
  require(tau.size() == m, "tau length does not match the model's grid");
  PredictiveDrawSet out;
  out.S = S;
  out.design = design;
  out.tau = tau;
  out.values.resize(S * nd, m);
  for (Index s = 0; s < S; ++s)
    for (Index i = 0; i < nd; ++i)
      out.values.row(s * nd + i) = predictive_curve(post, design.row(i).transpose(), s, i, seed, kind).transpose();
  return out;
}

// ---------------------------------------------------------------------------

std::int64_t star_round(double t) {
  require(std::isfinite(t), "star_round: input must be finite");
  if (t <= 0.0) return 0;
  return static_cast<std::int64_t>(std::floor(t));
}

double star_transform(double t) {
  require(std::isfinite(t) && t >= 0.0, "star_transform: input must be a finite nonnegative number");
  return 2.0 * (std::sqrt(t) - 1.0);
}

double star_transform_inverse(double u) {
  require(std::isfinite(u) && u >= -2.0, "star_transform_inverse: input must be >= -2");
  const double r = 0.5 * u + 1.0;
  return r * r;
}

}  // namespace targetpred
