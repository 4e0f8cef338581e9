#include <doctest.h>

#include <cmath>

#include "targetpred/functionals.hpp"
#include "targetpred/model_core.hpp"
#include "test_util.hpp"

using namespace targetpred;
using testutil::max_abs;
using testutil::normal_matrix;

namespace {

FunctionalSpec spec_of(FunctionalKind kind) {
  FunctionalSpec s;
  s.kind = kind;
  return s;
}

// Linear interpolant of (tau, y) at t.
double interp(const Vector& tau, const Vector& y, double t) {
  Index j = 0;
  while (j + 2 < tau.size() && tau(j + 1) < t) ++j;
  const double w = (t - tau(j)) / (tau(j + 1) - tau(j));
  return (1.0 - w) * y(j) + w * y(j + 1);
}

// Midpoint rule on a very fine grid, normalized by the domain length.
template <class F>
double fine_integral(const Vector& tau, const Vector& y, F f, Index pieces = 400000) {
  const double lo = tau(0), hi = tau(tau.size() - 1);
  const double h = (hi - lo) / static_cast<double>(pieces);
  double acc = 0.0;
  for (Index k = 0; k < pieces; ++k) acc += f(interp(tau, y, lo + (static_cast<double>(k) + 0.5) * h));
  return acc * h / (hi - lo);
}

// Insert the midpoint of every segment with its interpolated value.
std::pair<Vector, Vector> refine(const Vector& tau, const Vector& y) {
  const Index m = tau.size();
  Vector t2(2 * m - 1), y2(2 * m - 1);
  for (Index j = 0; j < m; ++j) {
    t2(2 * j) = tau(j);
    y2(2 * j) = y(j);
    if (j + 1 < m) {
      t2(2 * j + 1) = 0.5 * (tau(j) + tau(j + 1));
      y2(2 * j + 1) = 0.5 * (y(j) + y(j + 1));
    }
  }
  return {t2, y2};
}

Vector smooth_curve(const Vector& tau, double phase) {
  return (60.0 + 50.0 * (6.0 * tau.array() + phase).sin()).matrix();
}

}  // namespace

TEST_SUITE("functionals") {
  TEST_CASE("constant curve") {
    const Vector tau = uniform_grid(11);
    const Vector c = Vector::Constant(11, 3.5);
    CHECK(apply_scalar(spec_of(FunctionalKind::avg), c, tau) == doctest::Approx(3.5).epsilon(1e-14));
    CHECK(apply_scalar(spec_of(FunctionalKind::sd), c, tau) == doctest::Approx(0.0));
    CHECK(apply_scalar(spec_of(FunctionalKind::max), c, tau) == 3.5);
    CHECK(apply_scalar(spec_of(FunctionalKind::argmax), c, tau) == tau(0));
  }

  TEST_CASE("argmax of a symmetric tent is the nearest grid point to the peak") {
    const Vector tau = uniform_grid(101);
    for (double peak : {0.2, 0.333, 0.5071, 0.79}) {
      const double a0 = 1.0, a1 = 2.0;
      Vector y(101);
      for (Index j = 0; j < 101; ++j) y(j) = a0 + a1 * peak - a1 * std::abs(tau(j) - peak);
      Index nearest = 0;
      for (Index j = 1; j < 101; ++j)
        if (std::abs(tau(j) - peak) < std::abs(tau(nearest) - peak)) nearest = j;
      CHECK(apply_scalar(spec_of(FunctionalKind::argmax), y, tau) == tau(nearest));
    }
  }

  TEST_CASE("all-zero curve: sedentary = 1 and zeros_window = 1") {
    const Vector tau = uniform_grid(49);
    const Vector z = Vector::Zero(49);
    CHECK(apply_scalar(spec_of(FunctionalKind::sedentary), z, tau) == doctest::Approx(1.0));
    CHECK(apply_scalar(spec_of(FunctionalKind::zeros_window), z, tau) == 1.0);
    Vector y = z;
    y(5) = 1.0;  // tau = 5/48, inside [1/24, 5/24]
    CHECK(apply_scalar(spec_of(FunctionalKind::zeros_window), y, tau) == 0.0);
    y(5) = 0.0;
    y(30) = 7.0;  // outside the window
    CHECK(apply_scalar(spec_of(FunctionalKind::zeros_window), y, tau) == 1.0);
  }

  TEST_CASE("avg matches a brute-force trapezoid sum on an irregular grid") {
    Vector tau(7);
    tau << 0.0, 0.05, 0.2, 0.21, 0.5, 0.8, 1.0;
    const Vector y = normal_matrix(7, 1, 3).col(0);
    double acc = 0.0;
    for (Index j = 0; j < 6; ++j) acc += (tau(j + 1) - tau(j)) * (y(j) + y(j + 1)) / 2.0;
    CHECK(apply_scalar(spec_of(FunctionalKind::avg), y, tau) == doctest::Approx(acc).epsilon(1e-14));
    CHECK(trapezoid_weights(tau).sum() == doctest::Approx(1.0));
  }

  TEST_CASE("integral functionals match fine-grid quadrature of the interpolant") {
    const Vector tau = uniform_grid(13);
    const Vector y = smooth_curve(tau, 0.3);
    const double mu = fine_integral(tau, y, [](double v) { return v; });
    const double var = fine_integral(tau, y, [mu](double v) { return (v - mu) * (v - mu); });
    CHECK(apply_scalar(spec_of(FunctionalKind::sd), y, tau) == doctest::Approx(std::sqrt(var)).epsilon(1e-6));
    const double tlac = fine_integral(tau, y, [](double v) { return std::log(v + 1.0); });
    CHECK(apply_scalar(spec_of(FunctionalKind::tlac), y, tau) == doctest::Approx(tlac).epsilon(1e-6));
    const double sed = fine_integral(tau, y, [](double v) { return v <= 100.0 ? 1.0 : 0.0; });
    CHECK(apply_scalar(spec_of(FunctionalKind::sedentary), y, tau) == doctest::Approx(sed).epsilon(1e-5));
  }

  TEST_CASE("sd of a sinusoid does not depend on the grid size") {
    for (Index m : {201, 801}) {
      const Vector tau = uniform_grid(m);
      const Vector y = (2.0 * M_PI * tau.array()).sin().matrix();
      CHECK(apply_scalar(spec_of(FunctionalKind::sd), y, tau) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-3));
    }
  }

  TEST_CASE("tlac rejects curves at or below -1") {
    const Vector tau = uniform_grid(3);
    Vector y(3);
    y << 0.0, -1.0, 2.0;
    CHECK_THROWS_AS(apply(spec_of(FunctionalKind::tlac), y, tau), InputError);
  }

  TEST_CASE("quadrature refinement with interpolated points leaves every kind unchanged") {
    const Vector tau = uniform_grid(24);
    const Vector y = smooth_curve(tau, 1.1);
    const auto [t2, y2] = refine(tau, y);
    for (auto kind : {FunctionalKind::avg, FunctionalKind::tlac, FunctionalKind::sd, FunctionalKind::sedentary,
                      FunctionalKind::max, FunctionalKind::zeros_window}) {
      const auto spec = spec_of(kind);
      CHECK(std::abs(apply_scalar(spec, y, tau) - apply_scalar(spec, y2, t2)) < 1e-6);
    }
  }

  TEST_CASE("shape properties on random curves") {
    const Vector tau = uniform_grid(30);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const Vector y = (normal_matrix(30, 1, seed).col(0).array() * 60.0 + 90.0).matrix();
      CHECK(apply_scalar(spec_of(FunctionalKind::max), y, tau) >= apply_scalar(spec_of(FunctionalKind::avg), y, tau));
      CHECK(apply_scalar(spec_of(FunctionalKind::sd), y, tau) >= 0.0);
      const double am = apply_scalar(spec_of(FunctionalKind::argmax), y, tau);
      CHECK(apply_scalar(spec_of(FunctionalKind::argmax), (3.7 * y).eval(), tau) == am);
      bool on_grid = false;
      for (Index j = 0; j < 30; ++j) on_grid = on_grid || tau(j) == am;
      CHECK(on_grid);
      Vector up = y;
      up(static_cast<Index>(seed % 30)) += 40.0;
      CHECK(apply_scalar(spec_of(FunctionalKind::sedentary), up, tau) <=
            apply_scalar(spec_of(FunctionalKind::sedentary), y, tau));
    }
    Vector z = Vector::Zero(30);
    Vector bumped = z;
    bumped(3) = 2.0;
    CHECK(apply_scalar(spec_of(FunctionalKind::zeros_window), bumped, tau) <=
          apply_scalar(spec_of(FunctionalKind::zeros_window), z, tau));
  }

  TEST_CASE("apply_to_draws shapes, identity contrast and a loop oracle") {
    const Index m = 5;
    const Vector tau = uniform_grid(m);
    PredictiveDrawSet one;
    one.S = 1;
    one.design = Matrix::Zero(1, 1);
    one.tau = tau;
    one.values = normal_matrix(1, m, 4);
    const Matrix single = apply_to_draws(spec_of(FunctionalKind::avg), one);
    CHECK(single.rows() == 1);
    CHECK(single.cols() == 1);
    CHECK(single(0, 0) == apply_scalar(spec_of(FunctionalKind::avg), one.values.row(0).transpose(), tau));

    PredictiveDrawSet preds;
    preds.S = 100;
    preds.design = Matrix::Zero(3, 1);
    preds.tau = tau;
    preds.values = normal_matrix(300, m, 5);
    FunctionalSpec id = spec_of(FunctionalKind::contrast);
    id.contrast = Matrix::Identity(m, m);
    const Matrix raw = apply_to_draws(id, preds);
    for (Index s = 0; s < 100; ++s)
      for (Index i = 0; i < 3; ++i) CHECK(raw.block(s, i * m, 1, m) == preds.curve(s, i));

    const auto mx = spec_of(FunctionalKind::max);
    const Vector means = hbar(mx, preds);
    for (Index i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (Index s = 0; s < 100; ++s) {
        double best = preds.values(s * 3 + i, 0);
        for (Index j = 1; j < m; ++j) best = std::max(best, preds.values(s * 3 + i, j));
        acc += best;
      }
      CHECK(means(i) == doctest::Approx(acc / 100.0).epsilon(1e-14));
    }
  }

  TEST_CASE("hbar: degenerate predictive and binary functional") {
    const Vector tau = uniform_grid(24);
    PredictiveDrawSet preds;
    preds.S = 20;
    preds.design = Matrix::Zero(2, 1);
    preds.tau = tau;
    preds.values.resize(40, 24);
    const Vector curve = smooth_curve(tau, 0.0);
    for (Index r = 0; r < 40; ++r) preds.values.row(r) = curve.transpose();
    const Vector hb = hbar(spec_of(FunctionalKind::sd), preds);
    const double common = apply_scalar(spec_of(FunctionalKind::sd), curve, tau);
    CHECK(hb(0) == doctest::Approx(common).epsilon(1e-14));
    CHECK(hb(1) == doctest::Approx(common).epsilon(1e-14));

    preds.values.setZero();
    for (Index s = 0; s < 20; s += 3) preds.values(s * 2, 2) = 1.0;  // 7 of 20 draws break the window for row 0
    const Vector prob = hbar(spec_of(FunctionalKind::zeros_window), preds);
    CHECK(prob(0) == doctest::Approx(13.0 / 20.0));
    CHECK(prob(1) == 1.0);
  }

  TEST_CASE("linear contrast under the conjugate model tracks C times the predictive mean") {
    const Matrix X = normal_matrix(40, 2, 12);
    const Vector y = X * Vector::LinSpaced(2, 1.0, -2.0) + normal_matrix(40, 1, 13).col(0);
    const auto gp = fit_conjugate(X, y, {Matrix::Identity(2, 2), 1.0});
    const Index S = 20000;
    const auto post = sample_conjugate(gp, 1.0, S, 14);
    FunctionalSpec c = spec_of(FunctionalKind::contrast);
    c.contrast = Matrix::Constant(1, 1, 2.5);
    const Matrix xt = normal_matrix(4, 2, 15);
    const Matrix draws = predictive_functional_draws(c, post, xt, uniform_grid(1), 16);
    const Vector hb = column_means(draws);
    for (Index i = 0; i < 4; ++i) {
      const Vector x = xt.row(i).transpose();
      const double se = 2.5 * std::sqrt(x.dot(gp.covariance * x) + 1.0) / std::sqrt(static_cast<double>(S));
      CHECK(std::abs(hb(i) - 2.5 * x.dot(gp.mean)) < 3.0 * se);
    }
    // The streaming shortcut agrees with materialized curves.
    const auto preds = predictive_draws(post, xt, uniform_grid(1), 16);
    CHECK(max_abs(apply_to_draws(c, preds) - draws) == 0.0);
  }

  TEST_CASE("spec parsing and JSON round-trip") {
    CHECK(functional_kind_from_string("tlac") == FunctionalKind::tlac);
    CHECK_THROWS_AS(functional_kind_from_string("median"), InputError);
    FunctionalSpec s = spec_of(FunctionalKind::contrast);
    s.contrast = normal_matrix(2, 4, 1);
    const FunctionalSpec back = functional_from_json(to_json(s));
    CHECK(back.kind == FunctionalKind::contrast);
    CHECK(back.contrast == s.contrast);
    FunctionalSpec z = spec_of(FunctionalKind::zeros_window);
    z.window_lo = 0.1;
    z.window_hi = 0.3;
    const FunctionalSpec zb = functional_from_json(to_json(z));
    CHECK(zb.window_lo == 0.1);
    CHECK(zb.window_hi == 0.3);
    CHECK_THROWS_AS(s.validate(5), InputError);
  }
}
