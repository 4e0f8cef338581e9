#include "targetpred/sim_study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "targetpred/action_solver.hpp"
#include "targetpred/functionals.hpp"
#include "targetpred/pipeline.hpp"
#include "targetpred/rng.hpp"

namespace targetpred {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kRho = 0.75;

double sample_sd(const Eigen::Ref<const Vector>& v) {
  const double mu = v.mean();
  return std::sqrt((v.array() - mu).square().sum() / static_cast<double>(v.size() - 1));
}

double rmse(const Vector& a, const Vector& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

std::vector<Index> support_of(const Vector& delta) {
  std::vector<Index> s;
  for (Index j = 1; j < delta.size(); ++j)
    if (delta(j) != 0.0) s.push_back(j);
  return s;
}

MethodMetrics prediction_only(const std::string& method, const Vector& pred, const SimTruth& truth) {
  MethodMetrics out;
  out.method = method;
  out.rmse_h = rmse(pred, truth.tau_star);
  out.rmse_beta = out.tpr = out.fpr = out.tnr = kNaN;
  out.size = -1;
  return out;
}

}  // namespace

void SimConfig::validate() const {
  require(p >= 4, "simulation needs p >= 4, got " + std::to_string(p));
  require(m >= 3, "simulation needs m >= 3, got " + std::to_string(m));
  require(n >= 2, "simulation needs n >= 2, got " + std::to_string(n));
  require(rsnr > 0.0, "rsnr must be positive");
  require(replications >= 1, "need at least one replication");
}

SimData simulate(const SimConfig& config) {
  config.validate();
  const Index n = config.n;
  const Index p = config.p;
  const Index m = config.m;
  Rng rng(config.seed);

  Matrix X(n, p);
  const double innov = std::sqrt(1.0 - kRho * kRho);
  for (Index i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    for (Index j = 1; j < p; ++j) X(i, j) = kRho * X(i, j - 1) + innov * rng.normal();
  }
  for (Index j = 0; j < p; ++j) {
    if (j % 2 == 1) {
      X.col(j) = (X.col(j).array() >= 0.0).cast<double>().matrix();
    } else {
      const double mu = X.col(j).mean();
      const double sd = sample_sd(X.col(j));
      X.col(j) = ((X.col(j).array() - mu) * (0.5 / sd)).matrix();
    }
  }

  const auto k = static_cast<Index>(std::ceil(0.05 * static_cast<double>(p) - 1e-12));
  std::vector<Index> perm(static_cast<size_t>(p));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index r = 0; r < 2 * k; ++r) {
    const auto j = r + static_cast<Index>(rng.below(static_cast<std::uint64_t>(p - r)));
    std::swap(perm[static_cast<size_t>(r)], perm[static_cast<size_t>(j)]);
  }
  Vector beta = Vector::Zero(p);
  for (Index r = 0; r < 2 * k; ++r) beta(perm[static_cast<size_t>(r)]) = r < k ? 1.0 : -1.0;

  const Vector raw = (X * beta).array() + 1.0;
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  if (!(hi > lo)) throw NumericalError("simulated argmax values are constant; cannot rescale onto [0.2, 0.8]");
  const double scale = 0.6 / (hi - lo);

  SimData out;
  SimTruth& t = out.truth;
  t.beta_star.resize(p + 1);
  t.beta_star(0) = 0.2 + scale * (1.0 - lo);
  t.beta_star.tail(p) = scale * beta;
  t.tau_star = with_intercept(X) * t.beta_star;
  for (Index j = 0; j < p; ++j)
    if (beta(j) != 0.0) t.support.push_back(j + 1);

  const Vector tau = uniform_grid(m);
  t.a0.resize(n);
  t.a1.resize(n);
  t.a2.resize(n);
  t.curves.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    t.a0(i) = rng.normal();
    t.a1(i) = rng.chi_squared(5.0);
    t.a2(i) = rng.chi_squared(5.0);
    for (Index j = 0; j < m; ++j) {
      const double kink = std::max(0.0, tau(j) - t.tau_star(i));
      t.curves(i, j) = t.a0(i) + t.a1(i) * tau(j) - (t.a1(i) + t.a2(i)) * kink;
    }
  }
  const Eigen::Map<const Vector> all(t.curves.data(), t.curves.size());
  t.noise_sd = std::isinf(config.rsnr) ? 0.0 : sample_sd(all) / config.rsnr;

  out.data.X = X;
  out.data.tau = tau;
  out.data.Y = t.curves;
  if (t.noise_sd > 0.0)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) out.data.Y(i, j) += t.noise_sd * rng.normal();
  return out;
}

EngineSettings EngineSettings::fast() {
  EngineSettings e;
  e.gibbs_iters = 1500;
  e.gibbs_burnin = 500;
  e.R = 100;
  return e;
}

void EngineSettings::validate(Index n) const {
  require(gibbs_iters > gibbs_burnin && gibbs_burnin >= 0, "need gibbs_iters > gibbs_burnin >= 0");
  require(K >= 2 && K <= n, "need 2 <= K <= n");
  require(baseline_folds >= 2 && baseline_folds <= n, "need 2 <= baseline folds <= n");
  require(R >= 1, "need R >= 1");
  require(R * 10 <= gibbs_iters - gibbs_burnin,
          "R = " + std::to_string(R) + " exceeds a tenth of the kept draws (" +
              std::to_string(gibbs_iters - gibbs_burnin) + ")");
  require(n_lambda >= 2, "need n_lambda >= 2");
  require(ratio > 0.0 && ratio < 1.0, "lambda ratio must lie in (0, 1)");
  AcceptanceConfig{eta, epsilon}.validate();
  for (double e : eta_grid) require(e >= 0.0, "eta grid values must be >= 0");
}

MethodMetrics metrics(const std::string& method, const Vector& delta, const Matrix& design, const SimTruth& truth) {
  require(delta.size() == truth.beta_star.size(), "coefficient vector does not match beta_star");
  require(design.cols() == delta.size() && design.rows() == truth.tau_star.size(), "design does not match truth");
  MethodMetrics out;
  out.method = method;
  out.rmse_h = rmse(design * delta, truth.tau_star);
  out.rmse_beta = rmse(delta, truth.beta_star);
  const std::vector<Index> sel = support_of(delta);
  const auto p = static_cast<double>(delta.size() - 1);
  const auto n_true = static_cast<double>(truth.support.size());
  Index hits = 0;
  for (Index j : sel)
    if (std::binary_search(truth.support.begin(), truth.support.end(), j)) ++hits;
  const auto false_pos = static_cast<double>(static_cast<Index>(sel.size()) - hits);
  out.tpr = n_true > 0 ? static_cast<double>(hits) / n_true : kNaN;
  out.fpr = p > n_true ? false_pos / (p - n_true) : kNaN;
  out.tnr = 1.0 - out.fpr;
  out.size = static_cast<Index>(sel.size());
  return out;
}

Vector epsilon_max(const LossReport& report, const LambdaPath& path, const std::vector<Index>& true_support,
                   const std::vector<double>& eta_grid) {
  require(path.fits.size() == report.actions.size(), "path and report have different numbers of actions");
  std::vector<Index> truth = true_support;
  std::sort(truth.begin(), truth.end());
  Vector out = Vector::Zero(static_cast<Index>(eta_grid.size()));
  for (size_t a = 0; a < path.fits.size(); ++a) {
    std::vector<Index> active = path.fits[a].active_set;
    std::sort(active.begin(), active.end());
    if (active != truth) continue;
    for (size_t e = 0; e < eta_grid.size(); ++e)
      out(static_cast<Index>(e)) = std::max(out(static_cast<Index>(e)), prob_within(report, static_cast<Index>(a), eta_grid[e]));
  }
  return out;
}

FitResult adaptive_lasso_cv(const Vector& z, const Matrix& design, Index folds, Index n_lambda, double ratio,
                            std::uint64_t seed) {
  const Index n = design.rows();
  const Index q = design.cols();
  require(z.size() == n, "response length does not match design");
  Matrix gram = design.transpose() * design;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (n < q || qr.rank() < q) gram.diagonal().array() += 1e-6;
  const Vector pilot = gram.ldlt().solve(design.transpose() * z);
  Vector w(q - 1);
  for (Index j = 1; j < q; ++j) {
    const double a = std::abs(pilot(j));
    w(j - 1) = a > 0.0 ? std::min(1.0 / a, kDefaultWeightCap) : kDefaultWeightCap;
  }
  const double lmax = lambda_max(z, design, w, LossKind::squared);
  const std::vector<double> grid = lambda_grid(lmax, n_lambda, ratio, true);

  const FoldPlan plan = make_folds(n, folds, seed);
  std::vector<double> cv(grid.size(), 0.0);
  for (Index k = 0; k < plan.K; ++k) {
    const std::vector<Index> train = plan.training(k);
    const std::vector<Index> val = plan.validation(k);
    Matrix Xt(static_cast<Index>(train.size()), q);
    Vector zt(Xt.rows());
    for (size_t t = 0; t < train.size(); ++t) {
      Xt.row(static_cast<Index>(t)) = design.row(train[t]);
      zt(static_cast<Index>(t)) = z(train[t]);
    }
    Matrix Xv(static_cast<Index>(val.size()), q);
    Vector zv(Xv.rows());
    for (size_t t = 0; t < val.size(); ++t) {
      Xv.row(static_cast<Index>(t)) = design.row(val[t]);
      zv(static_cast<Index>(t)) = z(val[t]);
    }
    const LambdaPath path = fit_lambda_grid(zt, Xt, w, grid, LossKind::squared);
    for (size_t a = 0; a < grid.size(); ++a)
      cv[a] += (zv - Xv * path.fits[a].delta).squaredNorm() / static_cast<double>(val.size());
  }
  const auto best = static_cast<size_t>(std::min_element(cv.begin(), cv.end()) - cv.begin());
  LambdaPath full = fit_lambda_grid(z, design, w, grid, LossKind::squared);
  return full.fits[best];
}

ReplicationResult run_replication(const SimConfig& config, const EngineSettings& engine, Index replication) {
  config.validate();
  engine.validate(config.n);
  ReplicationResult res;
  res.replication = replication;
  res.n = config.n;
  res.seed = derive_seed(config.seed, 0x726570ULL, static_cast<std::uint64_t>(replication));

  SimConfig cfg = config;
  cfg.seed = derive_seed(res.seed, 1);
  const SimData sim = simulate(cfg);
  const Dataset& data = sim.data;
  const Matrix design = with_intercept(data.X);

  GibbsConfig gibbs;
  gibbs.iters = engine.gibbs_iters;
  gibbs.burnin = engine.gibbs_burnin;
  gibbs.seed = derive_seed(res.seed, 2);
  const PosteriorDrawSet post = gibbs_fosr(data, make_fosr_model(data.tau), gibbs);
  res.rhat_sigma_eps = split_rhat(post.fosr().sigma_eps);

  FunctionalSpec spec;
  spec.kind = FunctionalKind::argmax;
  TargetOptions topts;
  topts.n_lambda = engine.n_lambda;
  topts.ratio = engine.ratio;
  topts.seed = derive_seed(res.seed, 3);
  topts.kind = engine.fit_draws;
  const TargetResult tgt = target(post, data, spec, topts);
  const LambdaPath& full = tgt.path;

  EvaluateOptions eopts;
  eopts.K = engine.K;
  eopts.R = engine.R;
  eopts.acceptance = AcceptanceConfig{engine.eta, engine.epsilon};
  eopts.importance.truncate = engine.truncate_weights;
  eopts.importance.likelihood = engine.likelihood;
  eopts.seed = derive_seed(res.seed, 4);
  eopts.holdout_kind = engine.holdout_draws;
  const EvaluationResult eval = evaluate(post, data, spec, tgt, topts, eopts);
  const LossReport& out_report = eval.report;
  res.min_ess = *std::min_element(eval.weights.ess.begin(), eval.weights.ess.end());
  res.warnings = out_report.warnings;
  res.selected_index = eval.selected;
  res.min_index = out_report.min_index;

  const LossReport in_report = in_sample_report(eval, tgt, topts, engine.R, derive_seed(res.seed, 6));
  const Index in_index = simplest_acceptable(acceptable_set(in_report, eopts.acceptance), in_report);
  const Vector& empirical = eval.empirical;
  const Vector& hb = tgt.hbar;

  const FitResult baseline = adaptive_lasso_cv(empirical, design, engine.baseline_folds, engine.n_lambda,
                                               engine.ratio, derive_seed(res.seed, 7));

  const SimTruth& truth = sim.truth;
  res.methods.push_back(metrics("proposed(out)", full.fits[static_cast<size_t>(res.selected_index)].delta, design, truth));
  res.methods.push_back(metrics("proposed(in)", full.fits[static_cast<size_t>(in_index)].delta, design, truth));
  res.methods.push_back(metrics("proposed(full)", full.fits.back().delta, design, truth));
  res.methods.push_back(metrics("adaptive_lasso", baseline.delta, design, truth));
  res.methods.push_back(prediction_only("h_bar", hb, truth));
  res.methods.push_back(prediction_only("h_y", empirical, truth));

  res.eps_max = epsilon_max(out_report, full, truth.support, engine.eta_grid);
  for (const auto& fit : full.fits)
    if (fit.active_set == truth.support) res.true_support_on_path = true;
  return res;
}

std::vector<ReplicationResult> replicate(const SimConfig& config, const EngineSettings& engine, unsigned threads) {
  config.validate();
  const auto total = static_cast<size_t>(config.replications);
  std::vector<ReplicationResult> results(total);
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (size_t r = next++; r < total; r = next++) {
      try {
        results[r] = run_replication(config, engine, static_cast<Index>(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(total)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::string metrics_csv(const std::vector<ReplicationResult>& results) {
  std::ostringstream os;
  os.precision(17);
  os << "replication,n,seed,method,rmse_h,rmse_beta,tpr,fpr,tnr,size\n";
  for (const auto& r : results)
    for (const auto& m : r.methods)
      os << r.replication << ',' << r.n << ',' << r.seed << ',' << m.method << ',' << m.rmse_h << ',' << m.rmse_beta
         << ',' << m.tpr << ',' << m.fpr << ',' << m.tnr << ',' << m.size << '\n';
  return os.str();
}

std::string eps_max_csv(const std::vector<ReplicationResult>& results, const std::vector<double>& eta_grid) {
  std::ostringstream os;
  os.precision(17);
  os << "eta,mean_eps_max,replications\n";
  for (size_t e = 0; e < eta_grid.size(); ++e) {
    double acc = 0.0;
    for (const auto& r : results) acc += r.eps_max(static_cast<Index>(e));
    os << eta_grid[e] << ',' << acc / static_cast<double>(results.size()) << ',' << results.size() << '\n';
  }
  return os.str();
}

nlohmann::json summary_json(const std::vector<ReplicationResult>& results, const SimConfig& config,
                            const EngineSettings& engine) {
  require(!results.empty(), "no replication results");
  auto stats = [](const std::vector<double>& v) -> nlohmann::json {
    std::vector<double> finite;
    for (double x : v)
      if (std::isfinite(x)) finite.push_back(x);
    if (finite.empty()) return nullptr;
    const Vector vv = Eigen::Map<const Vector>(finite.data(), static_cast<Index>(finite.size()));
    return {{"q1", quantile(vv, 0.25)}, {"median", quantile(vv, 0.5)}, {"q3", quantile(vv, 0.75)}, {"mean", vv.mean()}};
  };
  nlohmann::json methods = nlohmann::json::object();
  for (size_t k = 0; k < results.front().methods.size(); ++k) {
    const std::string& name = results.front().methods[k].method;
    std::vector<double> rh, rb, tpr, fpr, tnr, size;
    for (const auto& r : results) {
      const auto& m = r.methods[k];
      rh.push_back(m.rmse_h);
      rb.push_back(m.rmse_beta);
      tpr.push_back(m.tpr);
      fpr.push_back(m.fpr);
      tnr.push_back(m.tnr);
      size.push_back(m.size >= 0 ? static_cast<double>(m.size) : kNaN);
    }
    methods[name] = {{"rmse_h", stats(rh)}, {"rmse_beta", stats(rb)}, {"tpr", stats(tpr)},
                     {"fpr", stats(fpr)},   {"tnr", stats(tnr)},      {"size", stats(size)}};
  }
  nlohmann::json eps = nlohmann::json::array();
  for (size_t e = 0; e < engine.eta_grid.size(); ++e) {
    double acc = 0.0;
    for (const auto& r : results) acc += r.eps_max(static_cast<Index>(e));
    eps.push_back({{"eta", engine.eta_grid[e]}, {"mean_eps_max", acc / static_cast<double>(results.size())}});
  }
  Index on_path = 0;
  std::vector<double> ess;
  for (const auto& r : results) {
    on_path += r.true_support_on_path ? 1 : 0;
    ess.push_back(r.min_ess);
  }
  return {{"schema", "targetpred/v1"},
          {"n", config.n},
          {"p", config.p},
          {"m", config.m},
          {"rsnr", std::isinf(config.rsnr) ? nlohmann::json("inf") : nlohmann::json(config.rsnr)},
          {"rsnr_signal", "sample sd of all noiseless curve values"},
          {"seed", config.seed},
          {"replications", results.size()},
          {"engine",
           {{"gibbs_iters", engine.gibbs_iters},
            {"gibbs_burnin", engine.gibbs_burnin},
            {"K", engine.K},
            {"R", engine.R},
            {"n_lambda", engine.n_lambda},
            {"ratio", engine.ratio},
            {"eta", engine.eta},
            {"epsilon", engine.epsilon}}},
          {"methods", methods},
          {"eps_max", eps},
          {"true_support_on_path_rate", static_cast<double>(on_path) / static_cast<double>(results.size())},
          {"min_fold_ess", stats(ess)}};
}

nlohmann::json to_json(const SimTruth& truth) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"schema", "targetpred/v1"},
          {"beta_star", vec(truth.beta_star)},
          {"tau_star", vec(truth.tau_star)},
          {"a0", vec(truth.a0)},
          {"a1", vec(truth.a1)},
          {"a2", vec(truth.a2)},
          {"support", truth.support},
          {"noise_sd", truth.noise_sd}};
}

}  // namespace targetpred
