#include "targetpred/oos_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "targetpred/rng.hpp"

namespace targetpred {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix rows_of(const Matrix& M, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), M.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = M.row(rows[r]);
  return out;
}

double nan_as_inf(double v) { return std::isnan(v) ? kInf : v; }

}  // namespace

std::vector<Index> FoldPlan::validation(Index k) const {
  std::vector<Index> out;
  for (Index i = 0; i < n(); ++i)
    if (assignment[static_cast<size_t>(i)] == k) out.push_back(i);
  return out;
}

std::vector<Index> FoldPlan::training(Index k) const {
  std::vector<Index> out;
  for (Index i = 0; i < n(); ++i)
    if (assignment[static_cast<size_t>(i)] != k) out.push_back(i);
  return out;
}

FoldPlan make_folds(Index n, Index K, std::uint64_t seed) {
  require(K >= 2, "need K >= 2 folds, got " + std::to_string(K));
  require(K <= n, "K = " + std::to_string(K) + " exceeds n = " + std::to_string(n));
  std::vector<Index> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(derive_seed(seed, 0x666f6c64ULL));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  FoldPlan plan;
  plan.K = K;
  plan.seed = seed;
  plan.assignment.assign(static_cast<size_t>(n), 0);
  for (Index pos = 0; pos < n; ++pos) plan.assignment[static_cast<size_t>(perm[static_cast<size_t>(pos)])] = pos % K;
  return plan;
}

double quantile(Vector values, double prob) {
  const Index n = values.size();
  require(n >= 1, "quantile of an empty sample");
  std::sort(values.data(), values.data() + n);
  const double h = std::clamp(prob, 0.0, 1.0) * static_cast<double>(n - 1);
  const auto lo = static_cast<Index>(std::floor(h));
  const Index hi = std::min(lo + 1, n - 1);
  return values(lo) + (h - static_cast<double>(lo)) * (values(hi) - values(lo));
}

FoldWeights importance_weights(const Matrix& log_lik, const FoldPlan& plan, const ImportanceOptions& opts) {
  const Index S = log_lik.rows();
  require(S >= 1, "no posterior draws");
  require(log_lik.cols() == plan.n(), "log-likelihood has " + std::to_string(log_lik.cols()) +
                                          " columns, fold plan covers " + std::to_string(plan.n()) + " points");
  FoldWeights out;
  for (Index k = 0; k < plan.K; ++k) {
    const std::vector<Index> val = plan.validation(k);
    Vector lw = Vector::Zero(S);
    for (Index i : val) lw -= log_lik.col(i);
    if (!lw.allFinite()) throw NumericalError("non-finite log-likelihood in fold " + std::to_string(k));
    Vector w = (lw.array() - lw.maxCoeff()).exp().matrix();
    Index clipped = 0;
    if (opts.truncate && S > 1) {
      const double cap = quantile(w, 1.0 - 1.0 / std::sqrt(static_cast<double>(S)));
      for (Index s = 0; s < S; ++s)
        if (w(s) > cap) {
          w(s) = cap;
          ++clipped;
        }
    }
    const double total = w.sum();
    if (!(total > 0.0) || !std::isfinite(total))
      throw NumericalError("importance weights for fold " + std::to_string(k) +
                           " underflowed to zero; increase the number of posterior draws");
    w /= total;
    out.ess.push_back(1.0 / w.squaredNorm());
    out.weights.push_back(std::move(w));
    out.truncated.push_back(clipped);
  }
  return out;
}

FoldWeights importance_weights(const PosteriorDrawSet& post, const Dataset& data, const FoldPlan& plan,
                               const ImportanceOptions& opts) {
  return importance_weights(post.log_lik_matrix(data, opts.likelihood), plan, opts);
}

Matrix hbar_train(const Matrix& func_draws, const FoldWeights& weights) {
  const Index S = func_draws.rows();
  require(weights.S() == S, "weights have " + std::to_string(weights.S()) + " draws, functional draws have " +
                                std::to_string(S));
  Matrix W(weights.K(), S);
  for (Index k = 0; k < weights.K(); ++k) W.row(k) = weights.weights[static_cast<size_t>(k)].transpose();
  return W * func_draws;
}

std::vector<LambdaPath> fit_per_fold(const FoldPlan& plan, const Matrix& hbar_by_fold, const Matrix& design,
                                     const PenaltyConfig& config) {
  require(plan.K >= 2, "out-of-sample fitting needs K >= 2 folds");
  require(hbar_by_fold.rows() == plan.K && hbar_by_fold.cols() == plan.n(),
          "per-fold targets are " + dims(hbar_by_fold.rows(), hbar_by_fold.cols()) + ", expected " +
              dims(plan.K, plan.n()));
  require(design.rows() == plan.n(), "design rows do not match the fold plan");
  require(!config.lambdas.empty(), "empty lambda grid");
  std::vector<LambdaPath> out;
  out.reserve(static_cast<size_t>(plan.K));
  for (Index k = 0; k < plan.K; ++k) {
    const std::vector<Index> train = plan.training(k);
    const Matrix Xk = rows_of(design, train);
    Vector yk(static_cast<Index>(train.size()));
    for (size_t t = 0; t < train.size(); ++t) yk(static_cast<Index>(t)) = hbar_by_fold(k, train[t]);
    out.push_back(fit_lambda_grid(yk, Xk, config.weights, config.lambdas, config.loss, config.solver));
  }
  return out;
}

std::vector<LambdaPath> fit_per_fold(const FoldPlan& plan, const FoldWeights& weights, const Matrix& func_draws,
                                     const Matrix& design, const PenaltyConfig& config) {
  return fit_per_fold(plan, hbar_train(func_draws, weights), design, config);
}

SirSelection sir_select(const FoldWeights& weights, Index R, std::uint64_t seed, const SirOptions& opts) {
  const Index S = weights.S();
  require(R >= 1, "need R >= 1 resampled draws");
  require(R <= S, "R = " + std::to_string(R) + " exceeds the number of draws S = " + std::to_string(S));
  if (opts.max_fraction > 0.0)
    require(static_cast<double>(R) <= opts.max_fraction * static_cast<double>(S),
            "R = " + std::to_string(R) + " exceeds " + std::to_string(opts.max_fraction) + " * S (S = " +
                std::to_string(S) + ")");
  SirSelection sel;
  sel.R = R;
  for (Index k = 0; k < weights.K(); ++k) {
    const Vector& w = weights.weights[static_cast<size_t>(k)];
    Rng rng = Rng::stream(seed, 0x736972ULL, static_cast<std::uint64_t>(k));
    std::vector<Index> idx;
    idx.reserve(static_cast<size_t>(R));
    const bool fallback = weights.ess[static_cast<size_t>(k)] < static_cast<double>(R);
    if (fallback) {
      std::ostringstream os;
      os << "fold " << k << ": ESS " << weights.ess[static_cast<size_t>(k)] << " < R " << R
         << "; resampled with replacement";
      sel.warnings.push_back(os.str());
      Vector cum(S);
      std::partial_sum(w.data(), w.data() + S, cum.data());
      for (Index r = 0; r < R; ++r) {
        const double u = rng.uniform() * cum(S - 1);
        const auto it = std::upper_bound(cum.data(), cum.data() + S, u);
        idx.push_back(std::min<Index>(static_cast<Index>(it - cum.data()), S - 1));
      }
    } else {
      // Exponential keys log(u) / w: the R largest are a weighted sample without replacement.
      std::vector<std::pair<double, Index>> keys(static_cast<size_t>(S));
      for (Index s = 0; s < S; ++s) {
        const double u = rng.uniform();
        keys[static_cast<size_t>(s)] = {w(s) > 0.0 ? std::log(u) / w(s) : -kInf, s};
      }
      std::partial_sort(keys.begin(), keys.begin() + R, keys.end(),
                        [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
      for (Index r = 0; r < R; ++r) idx.push_back(keys[static_cast<size_t>(r)].second);
    }
    sel.indices.push_back(std::move(idx));
    sel.with_replacement.push_back(fallback);
  }
  return sel;
}

SirSelection uniform_select(Index K, Index S, Index R, std::uint64_t seed) {
  require(R >= 1 && R <= S, "need 1 <= R <= S");
  SirSelection sel;
  sel.R = R;
  for (Index k = 0; k < K; ++k) {
    Rng rng = Rng::stream(seed, 0x756e6966ULL, static_cast<std::uint64_t>(k));
    std::vector<Index> perm(static_cast<size_t>(S));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index r = 0; r < R; ++r) {
      const auto j = r + static_cast<Index>(rng.below(static_cast<std::uint64_t>(S - r)));
      std::swap(perm[static_cast<size_t>(r)], perm[static_cast<size_t>(j)]);
    }
    perm.resize(static_cast<size_t>(R));
    sel.indices.push_back(std::move(perm));
    sel.with_replacement.push_back(false);
  }
  return sel;
}

std::vector<PredictiveDrawSet> sir_resample(const PredictiveDrawSet& preds_full, const FoldWeights& weights,
                                            const FoldPlan& plan, Index R, std::uint64_t seed,
                                            const SirOptions& opts) {
  require(preds_full.n_design() == plan.n(), "predictive draws must be at the observed design");
  require(preds_full.S == weights.S(), "predictive draws and weights disagree on S");
  const SirSelection sel = sir_select(weights, R, seed, opts);
  std::vector<PredictiveDrawSet> out;
  for (Index k = 0; k < plan.K; ++k) {
    const std::vector<Index> val = plan.validation(k);
    const auto nk = static_cast<Index>(val.size());
    PredictiveDrawSet p;
    p.S = R;
    p.tau = preds_full.tau;
    p.design = rows_of(preds_full.design, val);
    p.values.resize(R * nk, preds_full.m());
    for (Index r = 0; r < R; ++r)
      for (Index t = 0; t < nk; ++t)
        p.values.row(r * nk + t) = preds_full.curve(sel.indices[static_cast<size_t>(k)][static_cast<size_t>(r)],
                                                    val[static_cast<size_t>(t)]);
    out.push_back(std::move(p));
  }
  return out;
}

double pointwise_loss(double z, double zhat, LossKind loss) {
  if (loss == LossKind::squared) return (z - zhat) * (z - zhat);
  const double p = std::clamp(zhat, 1e-12, 1.0 - 1e-12);
  return -(z * std::log(p) + (1.0 - z) * std::log1p(-p));
}

Vector LossReport::percent_increase(Index a) const {
  const Index Rn = R();
  Vector d(Rn);
  if (a == min_index) return Vector::Zero(Rn);
  const Vector& la = actions[static_cast<size_t>(a)].predictive;
  const Vector& lm = actions[static_cast<size_t>(min_index)].predictive;
  for (Index r = 0; r < Rn; ++r) {
    const double diff = la(r) - lm(r);
    if (lm(r) > 0.0)
      d(r) = 100.0 * diff / lm(r);
    else
      d(r) = diff == 0.0 ? 0.0 : (diff > 0.0 ? kInf : -kInf);
  }
  return d;
}

LossReport losses(const FoldPlan& plan, const std::vector<LambdaPath>& fold_fits, const Matrix& design,
                  const Vector& empirical, const Matrix& func_draws, const SirSelection& sir, LossKind loss) {
  const Index K = plan.K;
  require(static_cast<Index>(fold_fits.size()) == K, "need one path per fold");
  require(static_cast<Index>(sir.indices.size()) == K, "need one SIR selection per fold");
  require(empirical.size() == plan.n() && func_draws.cols() == plan.n() && design.rows() == plan.n(),
          "loss inputs do not match the fold plan");
  const auto A = static_cast<Index>(fold_fits.front().fits.size());
  for (const auto& path : fold_fits)
    require(static_cast<Index>(path.fits.size()) == A, "fold paths must share the lambda grid");
  const Index R = sir.R;

  LossReport report;
  report.loss = loss;
  report.warnings = sir.warnings;
  report.actions.resize(static_cast<size_t>(A));
  std::vector<std::vector<Index>> val(static_cast<size_t>(K));
  std::vector<Matrix> Xval(static_cast<size_t>(K));
  for (Index k = 0; k < K; ++k) {
    val[static_cast<size_t>(k)] = plan.validation(k);
    Xval[static_cast<size_t>(k)] = rows_of(design, val[static_cast<size_t>(k)]);
  }
  for (Index a = 0; a < A; ++a) {
    ActionLoss& act = report.actions[static_cast<size_t>(a)];
    act.lambda = fold_fits.front().lambdas[static_cast<size_t>(a)];
    act.active_set_size = -1;
    act.predictive = Vector::Zero(R);
    double emp = 0.0;
    for (Index k = 0; k < K; ++k) {
      const auto& vk = val[static_cast<size_t>(k)];
      const auto nk = static_cast<double>(vk.size());
      const Vector pred = predict(fold_fits[static_cast<size_t>(k)].fits[static_cast<size_t>(a)].delta,
                                  Xval[static_cast<size_t>(k)], loss);
      double ek = 0.0;
      for (size_t t = 0; t < vk.size(); ++t) ek += pointwise_loss(empirical(vk[t]), pred(static_cast<Index>(t)), loss);
      emp += ek / nk;
      const auto& idx = sir.indices[static_cast<size_t>(k)];
      for (Index r = 0; r < R; ++r) {
        const Index s = idx[static_cast<size_t>(r)];
        double pk = 0.0;
        for (size_t t = 0; t < vk.size(); ++t) pk += pointwise_loss(func_draws(s, vk[t]), pred(static_cast<Index>(t)), loss);
        act.predictive(r) += pk / nk;
      }
    }
    act.empirical = emp / static_cast<double>(K);
    act.predictive /= static_cast<double>(K);
  }
  Index best = 0;
  for (Index a = 1; a < A; ++a)
    if (report.actions[static_cast<size_t>(a)].empirical < report.actions[static_cast<size_t>(best)].empirical) best = a;
  report.min_index = best;
  return report;
}

void AcceptanceConfig::validate() const {
  require(eta >= 0.0, "eta must be >= 0");
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
}

double prob_within(const LossReport& report, Index a, double eta) {
  if (a == report.min_index) return 1.0;
  const Vector d = report.percent_increase(a);
  Index count = 0;
  for (Index r = 0; r < d.size(); ++r)
    if (d(r) < eta) ++count;
  return static_cast<double>(count) / static_cast<double>(d.size());
}

AcceptableSet acceptable_set(const LossReport& report, const AcceptanceConfig& config) {
  config.validate();
  const auto A = static_cast<Index>(report.actions.size());
  AcceptableSet set;
  set.probability.resize(A);
  for (Index a = 0; a < A; ++a) {
    set.probability(a) = prob_within(report, a, config.eta);
    if (set.probability(a) >= config.epsilon) set.members.push_back(a);
  }
  return set;
}

std::vector<Index> acceptable_by_interval(const LossReport& report, const AcceptanceConfig& config) {
  config.validate();
  const auto A = static_cast<Index>(report.actions.size());
  const Index R = report.R();
  const double Rd = static_cast<double>(R);
  // Smallest count c with c / R >= epsilon.
  auto Rc = static_cast<Index>(std::ceil(config.epsilon * Rd));
  while (Rc > 0 && static_cast<double>(Rc - 1) / Rd >= config.epsilon) --Rc;
  while (Rc <= R && static_cast<double>(Rc) / Rd < config.epsilon) ++Rc;
  std::vector<Index> members;
  for (Index a = 0; a < A; ++a) {
    if (a == report.min_index || Rc == 0) {
      members.push_back(a);
      continue;
    }
    if (Rc > R) continue;
    Vector d = report.percent_increase(a);
    for (Index r = 0; r < R; ++r) d(r) = nan_as_inf(d(r));
    std::nth_element(d.data(), d.data() + (Rc - 1), d.data() + R);
    // The interval (D_(c), inf) carries predictive mass 1 - epsilon; accept if it contains eta.
    if (config.eta > d(Rc - 1)) members.push_back(a);
  }
  return members;
}

Index simplest_acceptable(const AcceptableSet& set, const LossReport& report) {
  require(!set.members.empty(), "acceptable set is empty");
  Index best = set.members.front();
  for (Index a : set.members)
    if (report.actions[static_cast<size_t>(a)].lambda > report.actions[static_cast<size_t>(best)].lambda) best = a;
  return best;
}

nlohmann::json to_json(const LossReport& report, const AcceptanceConfig& config) {
  const AcceptableSet set = acceptable_set(report, config);
  nlohmann::json actions = nlohmann::json::array();
  for (size_t a = 0; a < report.actions.size(); ++a) {
    const auto& act = report.actions[a];
    nlohmann::json q = nlohmann::json::object();
    for (double p : {0.05, 0.2, 0.5, 0.8, 0.95}) {
      const std::string key = std::to_string(static_cast<int>(std::lround(p * 100))) + "%";
      q[key] = quantile(act.predictive, p);
    }
    actions.push_back({{"lambda", act.lambda},
                       {"active_set_size", act.active_set_size},
                       {"empirical_loss", act.empirical},
                       {"predictive_loss_quantiles", q},
                       {"prob_within_eta", set.probability(static_cast<Index>(a))}});
  }
  const Index selected = simplest_acceptable(set, report);
  return {{"schema", "targetpred/loss_report/v1"},
          {"loss", report.loss == LossKind::squared ? "squared" : "cross_entropy"},
          {"eta", config.eta},
          {"epsilon", config.epsilon},
          {"R", report.R()},
          {"min_index", report.min_index},
          {"acceptable", set.members},
          {"selected_index", selected},
          {"selected_lambda", report.actions[static_cast<size_t>(selected)].lambda},
          {"warnings", report.warnings},
          {"actions", actions}};
}

std::string figure_table_csv(const LossReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "action,lambda,active_set_size,empirical_pct,predictive_mean_pct,predictive_q10_pct,predictive_q90_pct\n";
  const double emp_min = report.actions[static_cast<size_t>(report.min_index)].empirical;
  for (size_t a = 0; a < report.actions.size(); ++a) {
    const auto& act = report.actions[a];
    const Vector d = report.percent_increase(static_cast<Index>(a));
    const double emp_pct = emp_min > 0.0 ? 100.0 * (act.empirical - emp_min) / emp_min : 0.0;
    os << a << ',' << act.lambda << ',' << act.active_set_size << ',' << emp_pct << ',' << d.mean() << ','
       << quantile(d, 0.1) << ',' << quantile(d, 0.9) << '\n';
  }
  return os.str();
}

}  // namespace targetpred
