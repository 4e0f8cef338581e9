#include <doctest.h>

#include <cmath>

#include "targetpred/action_solver.hpp"
#include "targetpred/model_core.hpp"
#include "test_util.hpp"

using namespace targetpred;
using testutil::lstsq;
using testutil::max_abs;
using testutil::normal_matrix;
using testutil::normal_vector;

namespace {

Matrix random_design(Index n, Index p, std::uint64_t seed) { return with_intercept(normal_matrix(n, p, seed)); }

ActionSpec l1(double lambda, const Vector& w, LossKind loss = LossKind::squared) {
  ActionSpec s;
  s.lambda = lambda;
  s.weights = w;
  s.loss = loss;
  return s;
}

// 8 x 8 Sylvester-Hadamard matrix; column 0 is all ones and every column has
// (1/n) x_j' x_j = 1, so the objective is separable.
Matrix hadamard8() {
  Matrix H(1, 1);
  H(0, 0) = 1.0;
  while (H.rows() < 8) {
    const Index k = H.rows();
    Matrix next(2 * k, 2 * k);
    next << H, H, H, -H;
    H = next;
  }
  return H;
}

}  // namespace

TEST_SUITE("action_solver") {
  TEST_CASE("soft_threshold") {
    CHECK(soft_threshold(3.0, 1.0) == 2.0);
    CHECK(soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
  }

  TEST_CASE("lambda = 0 gives ordinary least squares") {
    const Matrix X = random_design(30, 4, 1);
    const Vector h = normal_vector(30, 2);
    const FitResult fit = solve_penalized(h, X, l1(0.0, Vector::Ones(4)));
    CHECK(max_abs(fit.delta - lstsq(X, h)) < 1e-7);
    CHECK(fit.kkt_residual <= 1e-7);
  }

  TEST_CASE("orthonormal design matches the soft-threshold closed form") {
    const Matrix H = hadamard8();
    const Matrix X = H.leftCols(4);
    const Vector h = normal_vector(8, 3) * 2.0;
    const Vector w = Vector::LinSpaced(3, 0.5, 2.0);
    for (double lambda : {0.0, 0.1, 0.5, 1.3}) {
      const FitResult fit = solve_penalized(h, X, l1(lambda, w));
      CHECK(std::abs(fit.delta(0) - h.mean()) < 1e-8);
      for (Index j = 1; j < 4; ++j) {
        const double z = X.col(j).dot(h) / 8.0;
        CHECK(std::abs(fit.delta(j) - soft_threshold(z, lambda * w(j - 1) / 2.0)) < 1e-8);
      }
    }
  }

  TEST_CASE("lambda_max: every penalized coefficient is exactly zero at and above it") {
    const Matrix X = random_design(25, 5, 4);
    const Vector h = normal_vector(25, 5);
    const Vector w = (normal_vector(5, 6).array().abs() + 0.2).matrix();
    const double lmax = lambda_max(h, X, w, LossKind::squared);
    const Vector r = h.array() - h.mean();
    double oracle = 0.0;
    for (Index j = 1; j <= 5; ++j) oracle = std::max(oracle, std::abs(X.col(j).dot(r)) * 2.0 / (25.0 * w(j - 1)));
    CHECK(lmax == doctest::Approx(oracle).epsilon(1e-10));
    for (double scale : {1.0, 3.0}) {
      const FitResult fit = solve_penalized(h, X, l1(scale * lmax, w));
      CHECK(fit.active_set.empty());
      CHECK(fit.delta.tail(5).cwiseAbs().maxCoeff() == 0.0);
      CHECK(fit.delta(0) == doctest::Approx(h.mean()).epsilon(1e-12));
    }
    const FitResult below = solve_penalized(h, X, l1(0.9 * lmax, w));
    CHECK(!below.active_set.empty());
  }

  TEST_CASE("p = 2 grid-search oracle") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Index n = 12;
      const Matrix X = random_design(n, 2, 10 + seed);
      const Vector h = X * Vector::LinSpaced(3, 0.3, -1.1) + 0.5 * normal_vector(n, 20 + seed);
      const Vector w(Vector::LinSpaced(2, 0.8, 1.4));
      const double lambda = 0.2;
      const FitResult fit = solve_penalized(h, X, l1(lambda, w));
      // Intercept profiled out in closed form at each grid point.
      const Vector c1 = X.col(1).array() - X.col(1).mean();
      const Vector c2 = X.col(2).array() - X.col(2).mean();
      const Vector hc = h.array() - h.mean();
      double best = std::numeric_limits<double>::infinity();
      for (int a = -3000; a <= 3000; ++a) {
        const double d1 = a * 1e-3;
        const Vector base = hc - d1 * c1;
        for (int b = -3000; b <= 3000; ++b) {
          const double d2 = b * 1e-3;
          const double obj = (base - d2 * c2).squaredNorm() / n + lambda * (w(0) * std::abs(d1) + w(1) * std::abs(d2));
          best = std::min(best, obj);
        }
      }
      CHECK(fit.objective <= best + 1e-5);
      CHECK(fit.objective == doctest::Approx(penalized_objective(h, X, fit.delta, lambda, w, LossKind::squared)));
    }
  }

  TEST_CASE("adaptive_weights") {
    const Matrix X = random_design(20, 3, 30);
    const Vector d(Vector::LinSpaced(4, 0.5, -1.3));
    // Identical draws: the weight is 1 / |projection coefficient|.
    const Matrix same = (X * d).transpose().replicate(10, 1);
    const Vector w = adaptive_weights(same, X);
    for (Index j = 0; j < 3; ++j) CHECK(w(j) == doctest::Approx(1.0 / std::abs(d(j + 1))).epsilon(1e-10));

    // Draws orthogonal to a column engage the cap.
    Matrix orth = normal_matrix(6, 20, 31);
    const Matrix Xsub = X.leftCols(3);
    for (Index s = 0; s < 6; ++s) {
      const Vector v = orth.row(s).transpose();
      const Vector fitted = Xsub * lstsq(Xsub, v);
      orth.row(s) = fitted.transpose();
    }
    CHECK(adaptive_weights(orth, X, 1e6)(2) == doctest::Approx(1e6).epsilon(1e-3));

    // Loop oracle.
    const Matrix draws = normal_matrix(200, 20, 32);
    const Matrix X4 = random_design(20, 4, 33);
    const Vector got = adaptive_weights(draws, X4);
    Vector oracle = Vector::Zero(4);
    for (Index s = 0; s < 200; ++s) {
      const Vector coef = lstsq(X4, draws.row(s).transpose());
      for (Index j = 0; j < 4; ++j) oracle(j) += std::min(1.0 / std::abs(coef(j + 1)), kDefaultWeightCap);
    }
    oracle /= 200.0;
    CHECK(max_abs(got - oracle) <= 1e-10 * std::max(1.0, max_abs(oracle)));

    Matrix zero_col = X4;
    zero_col.col(2).setZero();
    CHECK_THROWS_AS(adaptive_weights(draws, zero_col), InputError);
  }

  TEST_CASE("Corollary 1: the unrestricted action is hbar exactly") {
    const Matrix draws = normal_matrix(57, 9, 40);
    CHECK(solve_unrestricted(draws) == draws.colwise().mean().transpose());
    const Matrix one = normal_matrix(13, 1, 41);
    CHECK(solve_unrestricted(one).size() == 1);
  }

  TEST_CASE("lambda_path: empty head, OLS tail, KKT-certified") {
    const Matrix X = random_design(40, 6, 50);
    const Vector h = X * normal_vector(7, 51) + 0.3 * normal_vector(40, 52);
    const Vector w = adaptive_weights((h.transpose().replicate(30, 1) + 0.2 * normal_matrix(30, 40, 53)), X);
    PathOptions po;
    po.n_lambda = 50;
    po.ratio = 1e-3;
    const LambdaPath path = lambda_path(h, X, w, po);
    REQUIRE(path.fits.size() == 51);
    CHECK(path.lambdas.back() == 0.0);
    CHECK(path.fits.front().active_set.empty());
    for (size_t k = 1; k + 1 < path.lambdas.size(); ++k) CHECK(path.lambdas[k] < path.lambdas[k - 1]);
    CHECK(path.lambdas[49] == doctest::Approx(1e-3 * path.lambdas[0]));
    CHECK(max_abs(path.fits.back().delta - lstsq(X, h)) < 1e-7);
    for (const auto& f : path.fits) {
      CHECK(f.kkt_residual <= 1e-7);
      CHECK(kkt_residual(h, X, f.delta, f.lambda, w, LossKind::squared) <= 1e-7);
      for (Index j = 1; j < X.cols(); ++j) {
        const bool active = std::find(f.active_set.begin(), f.active_set.end(), j) != f.active_set.end();
        CHECK(active == (f.delta(j) != 0.0));
      }
    }
  }

  TEST_CASE("objective is nonincreasing across sweeps; warm start agrees with cold start") {
    const Matrix X = random_design(30, 8, 60);
    const Vector h = normal_vector(30, 61);
    SolverOptions opts;
    opts.record_objective = true;
    const FitResult fit = solve_penalized(h, X, l1(0.05, Vector::Ones(8)), opts);
    REQUIRE(fit.objective_trace.size() >= 2);
    for (size_t k = 1; k < fit.objective_trace.size(); ++k)
      CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] + 1e-12);
    const Vector start = Vector::Constant(9, 0.7);
    const FitResult warm = solve_penalized(h, X, l1(0.05, Vector::Ones(8)), {}, &start);
    CHECK(max_abs(warm.delta - fit.delta) < 1e-6);
  }

  TEST_CASE("scale equivariance") {
    const Matrix X = random_design(25, 4, 70);
    const Vector h = normal_vector(25, 71);
    const Vector w = Vector::Ones(4);
    const FitResult a = solve_penalized(h, X, l1(0.1, w));
    const FitResult b = solve_penalized(4.0 * h, X, l1(0.4, w));
    CHECK(max_abs(b.delta - 4.0 * a.delta) < 1e-6);
  }

  TEST_CASE("cross-entropy: soft labels, intercept-only limit and KKT certificate") {
    const Matrix X = random_design(50, 3, 80);
    const Vector eta = X * Vector::LinSpaced(4, -0.2, 1.0);
    const Vector p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Vector w = Vector::Ones(3);
    const double lmax = lambda_max(p, X, w, LossKind::cross_entropy);
    const FitResult top = solve_penalized(p, X, l1(lmax, w, LossKind::cross_entropy));
    CHECK(top.active_set.empty());
    const double pm = p.mean();
    CHECK(top.delta(0) == doctest::Approx(std::log(pm / (1.0 - pm))).epsilon(1e-7));
    const FitResult full = solve_penalized(p, X, l1(0.0, w, LossKind::cross_entropy));
    CHECK(max_abs(full.delta - Vector::LinSpaced(4, -0.2, 1.0)) < 1e-6);
    const FitResult mid = solve_penalized(p, X, l1(0.3 * lmax, w, LossKind::cross_entropy));
    CHECK(mid.kkt_residual <= 1e-7);
    CHECK(max_abs(predict(full.delta, X, LossKind::cross_entropy) - p) < 1e-6);
    Vector bad = p;
    bad(0) = 1.2;
    CHECK_THROWS_AS(solve_penalized(bad, X, l1(0.1, w, LossKind::cross_entropy)), InputError);
  }

  TEST_CASE("ActionSpec validation") {
    ActionSpec s = l1(-1.0, Vector::Ones(2));
    CHECK_THROWS_AS(s.validate(2), InputError);
    s = l1(1.0, Vector::Ones(3));
    CHECK_THROWS_AS(s.validate(2), InputError);
    s.form = ActionForm::unrestricted;
    s.weights = Vector::Ones(2);
    CHECK_THROWS_AS(s.validate(2), InputError);
  }
}
