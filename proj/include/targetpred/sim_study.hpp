#pragma once

// Synthetic study for targeted prediction of the argmax functional: data
// generation, a full targeted-prediction run per replication, and the
// selection, prediction and estimation metrics.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "targetpred/common.hpp"
#include "targetpred/model_core.hpp"
#include "targetpred/oos_eval.hpp"

namespace targetpred {

struct SimConfig {
  Index n = 100;
  Index p = 50;
  Index m = 200;
  double rsnr = 5.0;  // +inf gives noiseless data
  std::uint64_t seed = 0;
  Index replications = 100;

  void validate() const;
};

struct SimTruth {
  Vector beta_star;          // p + 1, intercept first, after rescaling
  Vector tau_star;           // n, equals with_intercept(X) * beta_star
  Matrix curves;             // n x m noiseless curves
  Vector a0, a1, a2;         // per-subject shape coefficients
  std::vector<Index> support;  // design columns j >= 1 with beta_star_j != 0
  double noise_sd = 0.0;
};

struct SimData {
  Dataset data;
  SimTruth truth;
};

/// Correlated mixed covariates (AR(0.75) Gaussian, every second column
/// binarized), a sparse argmax regression rescaled onto [0.2, 0.8], concave
/// piecewise-linear curves peaking at tau_star, plus Gaussian noise.
SimData simulate(const SimConfig& config);

struct EngineSettings {
  Index gibbs_iters = 10000;
  Index gibbs_burnin = 5000;
  Index K = 10;
  Index R = 500;  // at most a tenth of the kept draws
  Index n_lambda = 100;
  double ratio = 1e-3;
  double eta = 0.0;
  double epsilon = 0.1;
  bool truncate_weights = true;
  Index baseline_folds = 10;
  std::vector<double> eta_grid{0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0};
  /// Predictive draws behind hbar, the adaptive weights and the training targets.
  PredictiveKind fit_draws = PredictiveKind::fitted_subject;
  /// Predictive draws scored at held-out points.
  PredictiveKind holdout_draws = PredictiveKind::fitted_subject;
  LikelihoodKind likelihood = LikelihoodKind::conditional;

  /// Reduced MCMC and resampling sizes for routine runs.
  static EngineSettings fast();
  void validate(Index n) const;
};

struct MethodMetrics {
  std::string method;
  double rmse_h = 0.0;
  double rmse_beta = 0.0;  // NaN for predictors without coefficients
  double tpr = 0.0;
  double fpr = 0.0;
  double tnr = 0.0;
  Index size = 0;          // selected covariates, -1 when not applicable
};

/// RMSE of the linear predictions against tau_star and of delta against
/// beta_star (all p + 1 entries), with selection rates over covariates 1..p.
MethodMetrics metrics(const std::string& method, const Vector& delta, const Matrix& design, const SimTruth& truth);

struct ReplicationResult {
  Index replication = 0;
  std::uint64_t seed = 0;
  Index n = 0;
  std::vector<MethodMetrics> methods;
  Vector eps_max;                 // one entry per eta in the grid
  bool true_support_on_path = false;
  Index selected_index = 0;       // proposed(out) position on the lambda path
  Index min_index = 0;
  double min_ess = 0.0;
  double rhat_sigma_eps = 0.0;
  std::vector<std::string> warnings;
};

/// eps_max(eta) = P(D~_{A*, A_min} < eta), where A* ranges over the path
/// entries whose active set equals the true support (the largest probability
/// is kept); zero when no entry has that support.
Vector epsilon_max(const LossReport& report, const LambdaPath& path, const std::vector<Index>& true_support,
                   const std::vector<double>& eta_grid);

/// Empirical-functional adaptive lasso: OLS pilot weights, lambda by K-fold CV.
FitResult adaptive_lasso_cv(const Vector& z, const Matrix& design, Index folds, Index n_lambda, double ratio,
                            std::uint64_t seed);

ReplicationResult run_replication(const SimConfig& config, const EngineSettings& engine, Index replication);

/// All replications, run on up to `threads` workers; results ordered by replication.
std::vector<ReplicationResult> replicate(const SimConfig& config, const EngineSettings& engine, unsigned threads = 1);

/// One row per replication per method.
std::string metrics_csv(const std::vector<ReplicationResult>& results);

/// Mean eps_max per eta (one row per eta).
std::string eps_max_csv(const std::vector<ReplicationResult>& results, const std::vector<double>& eta_grid);

/// Medians and quartiles per method and metric, mean eps_max per eta.
nlohmann::json summary_json(const std::vector<ReplicationResult>& results, const SimConfig& config,
                            const EngineSettings& engine);

nlohmann::json to_json(const SimTruth& truth);

}  // namespace targetpred
