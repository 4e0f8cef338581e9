#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "targetpred/model_core.hpp"
#include "targetpred/oos_eval.hpp"
#include "test_util.hpp"

using namespace targetpred;
using testutil::lstsq;
using testutil::max_abs;
using testutil::normal_matrix;
using testutil::normal_vector;

namespace {

FoldPlan plan_from(std::vector<Index> assignment, Index K) {
  FoldPlan p;
  p.K = K;
  p.assignment = std::move(assignment);
  return p;
}

FitResult fit_with(double a, double b, double lambda) {
  FitResult f;
  f.delta = Vector(2);
  f.delta << a, b;
  f.lambda = lambda;
  return f;
}

LossReport random_report(std::uint64_t seed, Index A, Index R) {
  Rng rng(seed);
  LossReport rep;
  for (Index a = 0; a < A; ++a) {
    ActionLoss act;
    act.lambda = static_cast<double>(A - a);
    act.empirical = 1.0 + rng.uniform();
    act.predictive.resize(R);
    for (Index r = 0; r < R; ++r) {
      // Coarse values so that ties with eta occur.
      act.predictive(r) = 1.0 + std::round(20.0 * rng.uniform()) / 100.0;
    }
    rep.actions.push_back(act);
  }
  rep.min_index = 0;
  for (Index a = 1; a < A; ++a)
    if (rep.actions[static_cast<size_t>(a)].empirical < rep.actions[static_cast<size_t>(rep.min_index)].empirical)
      rep.min_index = a;
  return rep;
}

}  // namespace

TEST_SUITE("oos_eval") {
  TEST_CASE("make_folds") {
    const FoldPlan singletons = make_folds(10, 10, 1);
    for (Index k = 0; k < 10; ++k) CHECK(singletons.validation(k).size() == 1);
    const FoldPlan three = make_folds(10, 3, 2);
    std::multiset<size_t> sizes;
    for (Index k = 0; k < 3; ++k) sizes.insert(three.validation(k).size());
    CHECK(sizes == std::multiset<size_t>{3, 3, 4});
    CHECK(make_folds(10, 3, 2).assignment == three.assignment);
    CHECK(make_folds(50, 5, 3).assignment != make_folds(50, 5, 4).assignment);
    const auto tr = three.training(0);
    const auto va = three.validation(0);
    CHECK(tr.size() + va.size() == 10);
    CHECK_THROWS_AS(make_folds(5, 6, 1), InputError);
    CHECK_THROWS_AS(make_folds(5, 1, 1), InputError);
  }

  TEST_CASE("importance_weights: empty fold, single draw, truncation") {
    const Matrix ll = normal_matrix(16, 4, 5);
    const FoldPlan plan = plan_from({0, 0, 1, 1}, 3);  // fold 2 is empty
    ImportanceOptions plain;
    plain.truncate = false;
    const FoldWeights fw = importance_weights(ll, plan, plain);
    CHECK(max_abs(fw.weights[2] - Vector::Constant(16, 1.0 / 16.0)) < 1e-15);
    CHECK(fw.ess[2] == doctest::Approx(16.0));
    // w proportional to exp(-sum of validation log-likelihoods).
    Vector oracle = (-(ll.col(0) + ll.col(1))).array().exp().matrix();
    oracle /= oracle.sum();
    CHECK(max_abs(fw.weights[0] - oracle) < 1e-14);
    CHECK(fw.ess[0] == doctest::Approx(1.0 / oracle.squaredNorm()));

    const FoldWeights one = importance_weights(normal_matrix(1, 4, 6), plan);
    CHECK(one.weights[0](0) == 1.0);

    const FoldWeights tr = importance_weights(ll * 5.0, plan);
    const Vector raw = (-(5.0 * (ll.col(0) + ll.col(1)))).array().exp().matrix();
    const double cap = quantile(raw / raw.maxCoeff(), 1.0 - 1.0 / 4.0);
    Vector clipped = (raw / raw.maxCoeff()).cwiseMin(cap);
    clipped /= clipped.sum();
    CHECK(max_abs(tr.weights[0] - clipped) < 1e-14);
    CHECK(tr.truncated[0] >= 1);

    Matrix bad = ll;
    bad(3, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(importance_weights(bad, plan), NumericalError);
  }

  TEST_CASE("hbar_train: uniform, one-hot and loop oracle") {
    const Matrix draws = normal_matrix(30, 7, 8);
    FoldWeights fw;
    fw.weights = {Vector::Constant(30, 1.0 / 30.0), Vector::Unit(30, 4), normal_vector(30, 9).cwiseAbs()};
    fw.weights[2] /= fw.weights[2].sum();
    const Matrix hb = hbar_train(draws, fw);
    CHECK(max_abs(hb.row(0).transpose() - draws.colwise().mean().transpose()) < 1e-14);
    CHECK(hb.row(1) == draws.row(4));
    for (Index j = 0; j < 7; ++j) {
      double acc = 0.0;
      for (Index s = 0; s < 30; ++s) acc += fw.weights[2](s) * draws(s, j);
      CHECK(std::abs(hb(2, j) - acc) <= 1e-12);
    }
  }

  TEST_CASE("fit_per_fold with exact training means reproduces the refitted conjugate posterior") {
    const Index n = 8, p = 2;
    const Matrix X = with_intercept(normal_matrix(n, p, 10));
    const Vector y = X * Vector::LinSpaced(3, 0.5, -0.5) + 0.4 * normal_vector(n, 11);
    const ConjugateLinearModel model{Matrix::Identity(3, 3), 0.25};
    const FoldPlan plan = make_folds(n, 4, 12);
    Matrix hb(4, n);
    std::vector<Vector> refit;
    for (Index k = 0; k < 4; ++k) {
      const auto tr = plan.training(k);
      Matrix Xt(static_cast<Index>(tr.size()), 3);
      Vector yt(static_cast<Index>(tr.size()));
      for (size_t t = 0; t < tr.size(); ++t) {
        Xt.row(static_cast<Index>(t)) = X.row(tr[t]);
        yt(static_cast<Index>(t)) = y(tr[t]);
      }
      const auto gp = fit_conjugate(Xt, yt, model);
      refit.push_back(gp.mean);
      hb.row(k) = (X * gp.mean).transpose();
    }
    PenaltyConfig cfg;
    cfg.weights = Vector::Ones(p);
    cfg.lambdas = {0.0};
    const auto paths = fit_per_fold(plan, hb, X, cfg);
    for (Index k = 0; k < 4; ++k)
      CHECK(max_abs(paths[static_cast<size_t>(k)].fits[0].delta - refit[static_cast<size_t>(k)]) < 1e-7);
  }

  TEST_CASE("fit_per_fold: uniform weights only subset rows") {
    const Matrix X = with_intercept(normal_matrix(12, 2, 13));
    const Matrix draws = normal_matrix(50, 12, 14);
    const FoldPlan plan = make_folds(12, 3, 15);
    FoldWeights fw;
    for (int k = 0; k < 3; ++k) fw.weights.push_back(Vector::Constant(50, 1.0 / 50.0));
    PenaltyConfig cfg;
    cfg.weights = Vector::Ones(2);
    cfg.lambdas = {0.0};
    const auto paths = fit_per_fold(plan, fw, draws, X, cfg);
    const Vector hb = draws.colwise().mean().transpose();
    for (Index k = 0; k < 3; ++k) {
      const auto tr = plan.training(k);
      Matrix Xt(static_cast<Index>(tr.size()), 3);
      Vector ht(static_cast<Index>(tr.size()));
      for (size_t t = 0; t < tr.size(); ++t) {
        Xt.row(static_cast<Index>(t)) = X.row(tr[t]);
        ht(static_cast<Index>(t)) = hb(tr[t]);
      }
      CHECK(max_abs(paths[static_cast<size_t>(k)].fits[0].delta - lstsq(Xt, ht)) < 1e-7);
    }
  }

  TEST_CASE("untruncated importance weights recover the training posterior mean within 3 Monte-Carlo SEs") {
    const Index n = 30, S = 10000;
    const Matrix X = with_intercept(normal_matrix(n, 2, 20));
    const Vector y = X * Vector::LinSpaced(3, 1.0, -1.0) + normal_vector(n, 21);
    const ConjugateLinearModel model{Matrix::Identity(3, 3), 1.0};
    const auto full = fit_conjugate(X, y, model);
    const auto post = sample_conjugate(full, 1.0, S, 22);
    Dataset d{X, y, uniform_grid(1)};
    const FoldPlan plan = make_folds(n, 3, 23);
    // Quantile truncation trades bias for variance, so the exactness oracle uses raw weights.
    ImportanceOptions raw;
    raw.truncate = false;
    const FoldWeights fw = importance_weights(post, d, plan, raw);
    const FoldWeights clipped = importance_weights(post, d, plan);
    for (Index k = 0; k < 3; ++k) {
      CHECK(clipped.ess[static_cast<size_t>(k)] >= fw.ess[static_cast<size_t>(k)]);
      CHECK(clipped.truncated[static_cast<size_t>(k)] > 0);
      CHECK(fw.truncated[static_cast<size_t>(k)] == 0);
    }
    const Matrix& beta = post.conjugate().beta;
    int within = 0, total = 0;
    for (Index k = 0; k < 3; ++k) {
      const auto tr = plan.training(k);
      Matrix Xt(static_cast<Index>(tr.size()), 3);
      Vector yt(static_cast<Index>(tr.size()));
      for (size_t t = 0; t < tr.size(); ++t) {
        Xt.row(static_cast<Index>(t)) = X.row(tr[t]);
        yt(static_cast<Index>(t)) = y(tr[t]);
      }
      const Vector truth = fit_conjugate(Xt, yt, model).mean;
      const Vector& w = fw.weights[static_cast<size_t>(k)];
      const Vector est = beta.transpose() * w;
      for (Index j = 0; j < 3; ++j) {
        const double se = std::sqrt((w.array().square() * (beta.col(j).array() - est(j)).square()).sum());
        within += std::abs(est(j) - truth(j)) <= 3.0 * se;
        ++total;
      }
    }
    CHECK(within >= total - 1);
  }

  TEST_CASE("weighted training-posterior moments approach the closed form as S grows") {
    const Index n = 30;
    const Matrix X = with_intercept(normal_matrix(n, 2, 50));
    const Vector y = X * Vector::LinSpaced(3, 1.0, -1.0) + normal_vector(n, 51);
    const ConjugateLinearModel model{Matrix::Identity(3, 3), 1.0};
    const auto full = fit_conjugate(X, y, model);
    const Dataset d{X, y, uniform_grid(1)};
    const FoldPlan plan = make_folds(n, 3, 52);
    ImportanceOptions raw;
    raw.truncate = false;
    std::vector<double> mean_err, cov_err;
    for (Index S : {1000, 10000}) {
      double em = 0.0, ec = 0.0;
      for (std::uint64_t rep = 0; rep < 8; ++rep) {
        const auto post = sample_conjugate(full, 1.0, S, 60 + rep);
        const FoldWeights fw = importance_weights(post, d, plan, raw);
        const Matrix& beta = post.conjugate().beta;
        for (Index k = 0; k < 3; ++k) {
          const auto tr = plan.training(k);
          Matrix Xt(static_cast<Index>(tr.size()), 3);
          Vector yt(Xt.rows());
          for (size_t t = 0; t < tr.size(); ++t) {
            Xt.row(static_cast<Index>(t)) = X.row(tr[t]);
            yt(static_cast<Index>(t)) = y(tr[t]);
          }
          const auto gp = fit_conjugate(Xt, yt, model);
          const Vector& w = fw.weights[static_cast<size_t>(k)];
          const Vector mu = beta.transpose() * w;
          const Matrix centered = beta.rowwise() - mu.transpose();
          const Matrix cov = centered.transpose() * w.asDiagonal() * centered;
          em += (mu - gp.mean).norm();
          ec += (cov - gp.covariance).norm();
        }
      }
      mean_err.push_back(em);
      cov_err.push_back(ec);
    }
    CHECK(mean_err[1] < mean_err[0]);
    CHECK(cov_err[1] < cov_err[0]);
  }

  TEST_CASE("sir_select: uniform weights, one-hot weights, ESS fallback, guard") {
    FoldWeights uni;
    uni.weights = {Vector::Constant(100, 0.01), Vector::Constant(100, 0.01)};
    uni.ess = {100.0, 100.0};
    const SirSelection sel = sir_select(uni, 10, 1);
    for (const auto& idx : sel.indices) {
      CHECK(idx.size() == 10);
      CHECK(std::set<Index>(idx.begin(), idx.end()).size() == 10);
    }
    CHECK(sel.warnings.empty());
    CHECK(sir_select(uni, 10, 1).indices == sel.indices);

    FoldWeights hot;
    hot.weights = {Vector::Unit(100, 37)};
    hot.ess = {1.0};
    const SirSelection h = sir_select(hot, 1, 2);
    CHECK(h.indices[0][0] == 37);

    FoldWeights skew;
    skew.weights = {Vector::Zero(100)};
    skew.weights[0].head(5).setConstant(0.2);
    skew.ess = {5.0};
    const SirSelection f = sir_select(skew, 8, 3);
    CHECK(f.with_replacement[0]);
    CHECK(!f.warnings.empty());
    for (Index s : f.indices[0]) CHECK(s < 5);

    CHECK_THROWS_AS(sir_select(uni, 11, 1), InputError);
    SirOptions off;
    off.max_fraction = 0.0;
    CHECK_NOTHROW(sir_select(uni, 50, 1, off));
  }

  TEST_CASE("sir_resample approximates the closed-form training predictive mean") {
    const Index n = 30, S = 10000, R = 1000;
    const Matrix X = with_intercept(normal_matrix(n, 2, 30));
    const Vector y = X * Vector::LinSpaced(3, -0.5, 1.5) + normal_vector(n, 31);
    const ConjugateLinearModel model{Matrix::Identity(3, 3), 1.0};
    const auto post = sample_conjugate(fit_conjugate(X, y, model), 1.0, S, 32);
    const Dataset d{X, y, uniform_grid(1)};
    const FoldPlan plan = make_folds(n, 3, 33);
    ImportanceOptions raw;
    raw.truncate = false;
    const FoldWeights fw = importance_weights(post, d, plan, raw);
    const auto preds = predictive_draws(post, X, uniform_grid(1), 34);
    const auto sir = sir_resample(preds, fw, plan, R, 35);
    REQUIRE(sir.size() == 3);
    int within = 0, total = 0;
    for (Index k = 0; k < 3; ++k) {
      const auto va = plan.validation(k);
      const auto tr = plan.training(k);
      Matrix Xt(static_cast<Index>(tr.size()), 3);
      Vector yt(static_cast<Index>(tr.size()));
      for (size_t t = 0; t < tr.size(); ++t) {
        Xt.row(static_cast<Index>(t)) = X.row(tr[t]);
        yt(static_cast<Index>(t)) = y(tr[t]);
      }
      const auto gp = fit_conjugate(Xt, yt, model);
      const auto& ps = sir[static_cast<size_t>(k)];
      CHECK(ps.S == R);
      CHECK(ps.n_design() == static_cast<Index>(va.size()));
      for (size_t t = 0; t < va.size(); ++t) {
        const Vector x = X.row(va[t]).transpose();
        double mean = 0.0;
        for (Index r = 0; r < R; ++r) mean += ps.curve(r, static_cast<Index>(t))(0);
        mean /= static_cast<double>(R);
        const double sd = std::sqrt(x.dot(gp.covariance * x) + 1.0);
        const double se = sd * std::sqrt(1.0 / R + 1.0 / fw.ess[static_cast<size_t>(k)]);
        within += std::abs(mean - x.dot(gp.mean)) <= 3.0 * se;
        ++total;
      }
    }
    CHECK(within >= total - 1);
  }

  TEST_CASE("losses: hand enumeration with n = 6, K = 2, R = 3") {
    const FoldPlan plan = plan_from({0, 1, 0, 1, 0, 1}, 2);
    Matrix X(6, 2);
    for (Index i = 0; i < 6; ++i) X.row(i) << 1.0, static_cast<double>(i);
    const Vector z = Vector::LinSpaced(6, 0.0, 5.0);
    Matrix draws(2, 6);
    draws.row(0) = z.transpose();
    draws.row(1) = (z.array() + 1.0).matrix().transpose();
    LambdaPath f0, f1;
    f0.lambdas = f1.lambdas = {1.0, 0.0};
    f0.fits = {fit_with(0, 1, 1.0), fit_with(0, 1, 0.0)};
    f1.fits = {fit_with(1, 0, 1.0), fit_with(0, 1, 0.0)};
    SirSelection sir;
    sir.R = 3;
    sir.indices = {{0, 1, 1}, {1, 0, 0}};
    const LossReport rep = losses(plan, {f0, f1}, X, z, draws, sir, LossKind::squared);
    REQUIRE(rep.actions.size() == 2);
    CHECK(rep.actions[0].empirical == doctest::Approx(10.0 / 3.0));
    CHECK(rep.actions[1].empirical == 0.0);
    CHECK(rep.min_index == 1);
    CHECK(rep.actions[0].predictive(0) == doctest::Approx(35.0 / 6.0));
    CHECK(rep.actions[0].predictive(1) == doctest::Approx(23.0 / 6.0));
    CHECK(rep.actions[0].predictive(2) == doctest::Approx(23.0 / 6.0));
    for (Index r = 0; r < 3; ++r) CHECK(rep.actions[1].predictive(r) == doctest::Approx(0.5));
    const Vector pct = rep.percent_increase(0);
    CHECK(pct(0) == doctest::Approx(100.0 * (35.0 / 6.0 - 0.5) / 0.5));
    CHECK(pct(1) == doctest::Approx(100.0 * (23.0 / 6.0 - 0.5) / 0.5));
    CHECK((rep.percent_increase(1).array() == 0.0).all());

    SirSelection one;
    one.R = 1;
    one.indices = {{0}, {0}};
    CHECK(losses(plan, {f0, f1}, X, z, draws, one, LossKind::squared).R() == 1);
  }

  TEST_CASE("pointwise_loss") {
    CHECK(pointwise_loss(1.0, 3.0, LossKind::squared) == 4.0);
    CHECK(pointwise_loss(1.0, 0.5, LossKind::cross_entropy) == doctest::Approx(std::log(2.0)));
    CHECK(pointwise_loss(0.3, 0.3, LossKind::cross_entropy) ==
          doctest::Approx(-(0.3 * std::log(0.3) + 0.7 * std::log(0.7))));
    CHECK(std::isfinite(pointwise_loss(1.0, 0.0, LossKind::cross_entropy)));
  }

  TEST_CASE("acceptable sets: minimizer, infinite margin, nesting, monotonicity") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const LossReport rep = random_report(seed, 15, 40);
      const Index amin = rep.min_index;
      CHECK(prob_within(rep, amin, 0.0) == 1.0);
      CHECK((rep.percent_increase(amin).array() == 0.0).all());
      const AcceptableSet all = acceptable_set(rep, {std::numeric_limits<double>::infinity(), 1.0});
      CHECK(all.members.size() == 15);
      const AcceptableSet strict = acceptable_set(rep, {0.0, 1.0});
      CHECK(std::find(strict.members.begin(), strict.members.end(), amin) != strict.members.end());
      std::vector<Index> prev;
      for (double eta : {0.0, 1.0, 5.0, 10.0, 25.0}) {
        const auto cur = acceptable_set(rep, {eta, 0.3}).members;
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
      }
      const auto big = acceptable_set(rep, {2.0, 0.5}).members;
      const auto small = acceptable_set(rep, {2.0, 0.2}).members;
      CHECK(std::includes(small.begin(), small.end(), big.begin(), big.end()));
    }
  }

  TEST_CASE("Lemma 1: probability and interval routes agree") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const LossReport rep = random_report(1000 + seed, 12, 1 + static_cast<Index>(seed % 37));
      for (double eta : {0.0, 0.5, 2.0, 5.0, 10.0, 30.0})
        for (double eps : {0.0, 0.05, 0.1, 0.25, 0.5, 0.9, 1.0}) {
          const AcceptanceConfig cfg{eta, eps};
          CHECK(acceptable_set(rep, cfg).members == acceptable_by_interval(rep, cfg));
        }
    }
  }

  TEST_CASE("simplest_acceptable") {
    const LossReport rep = random_report(7, 10, 20);
    AcceptableSet only;
    only.members = {rep.min_index};
    CHECK(simplest_acceptable(only, rep) == rep.min_index);
    const AcceptableSet all = acceptable_set(rep, {std::numeric_limits<double>::infinity(), 0.1});
    CHECK(simplest_acceptable(all, rep) == 0);  // lambda_max entry
  }

  TEST_CASE("quantile is type 7") {
    Vector v(5);
    v << 4.0, 1.0, 3.0, 2.0, 5.0;
    CHECK(quantile(v, 0.0) == 1.0);
    CHECK(quantile(v, 1.0) == 5.0);
    CHECK(quantile(v, 0.5) == 3.0);
    CHECK(quantile(v, 0.1) == doctest::Approx(1.4));
    CHECK(quantile(v, 0.85) == doctest::Approx(4.4));
  }

  TEST_CASE("reports serialize with the documented fields") {
    const LossReport rep = random_report(3, 4, 25);
    const auto j = to_json(rep, {0.0, 0.1});
    REQUIRE(j["actions"].size() == 4);
    const auto& a = j["actions"][0];
    CHECK(a.contains("lambda"));
    CHECK(a.contains("active_set_size"));
    CHECK(a.contains("empirical_loss"));
    CHECK(a["predictive_loss_quantiles"].size() == 5);
    CHECK(a.contains("prob_within_eta"));
    const std::string csv = figure_table_csv(rep);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  }
}
