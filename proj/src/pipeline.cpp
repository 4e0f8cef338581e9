#include "targetpred/pipeline.hpp"

#include "targetpred/rng.hpp"

namespace targetpred {

namespace {

// The conjugate model's likelihood is written against its own design.
Dataset model_view(const PosteriorDrawSet& post, const Dataset& data) {
  if (!post.is_conjugate()) return data;
  Dataset view = data;
  view.X = action_design(data);
  return view;
}

const char* loss_name(LossKind loss) { return loss == LossKind::squared ? "squared" : "cross_entropy"; }

}  // namespace

Matrix action_design(const Dataset& data) { return with_intercept(data.X); }

Matrix predictive_design(const PosteriorDrawSet& post, const Dataset& data) {
  return post.is_conjugate() ? action_design(data) : data.X;
}

TargetResult target(const PosteriorDrawSet& post, const Dataset& data, const FunctionalSpec& spec,
                    const TargetOptions& opts) {
  data.validate();
  spec.validate(data.m());
  require(spec.output_dim() == 1, "targeting needs a scalar functional; run one contrast row at a time");
  TargetResult out;
  out.design = action_design(data);
  out.func_draws =
      predictive_functional_draws(spec, post, predictive_design(post, data), data.tau, opts.seed, opts.kind);
  out.hbar = column_means(out.func_draws);
  out.weights = adaptive_weights(out.func_draws, out.design, opts.weight_cap);
  PathOptions popt;
  popt.n_lambda = opts.n_lambda;
  popt.ratio = opts.ratio;
  popt.loss = opts.loss;
  out.path = lambda_path(out.hbar, out.design, out.weights, popt, opts.solver);
  return out;
}

EvaluationResult evaluate(const PosteriorDrawSet& post, const Dataset& data, const FunctionalSpec& spec,
                          const TargetResult& target, const TargetOptions& topts, const EvaluateOptions& opts) {
  opts.acceptance.validate();
  EvaluationResult out;
  out.plan = make_folds(data.n(), opts.K, derive_seed(opts.seed, 1));
  out.weights = importance_weights(post, model_view(post, data), out.plan, opts.importance);
  out.empirical = apply_to_rows(spec, data.Y, data.tau).col(0);
  out.holdout_draws =
      opts.holdout_kind == topts.kind
          ? target.func_draws
          : predictive_functional_draws(spec, post, predictive_design(post, data), data.tau,
                                        derive_seed(opts.seed, 2), opts.holdout_kind);

  PenaltyConfig pen;
  pen.weights = target.weights;
  pen.lambdas = target.path.lambdas;
  pen.loss = topts.loss;
  pen.solver = topts.solver;
  const std::vector<LambdaPath> fold_fits =
      fit_per_fold(out.plan, out.weights, target.func_draws, target.design, pen);
  const SirSelection sir = sir_select(out.weights, opts.R, derive_seed(opts.seed, 3), opts.sir);
  out.report = losses(out.plan, fold_fits, target.design, out.empirical, out.holdout_draws, sir, topts.loss);
  for (size_t a = 0; a < target.path.fits.size(); ++a)
    out.report.actions[a].active_set_size = static_cast<Index>(target.path.fits[a].active_set.size());
  out.acceptable = acceptable_set(out.report, opts.acceptance);
  out.selected = simplest_acceptable(out.acceptable, out.report);
  return out;
}

LossReport in_sample_report(const EvaluationResult& eval, const TargetResult& target, const TargetOptions& topts,
                            Index R, std::uint64_t seed) {
  const std::vector<LambdaPath> fits(static_cast<size_t>(eval.plan.K), target.path);
  const SirSelection uni = uniform_select(eval.plan.K, target.func_draws.rows(), R, seed);
  LossReport report = losses(eval.plan, fits, target.design, eval.empirical, target.func_draws, uni, topts.loss);
  for (size_t a = 0; a < target.path.fits.size(); ++a)
    report.actions[a].active_set_size = static_cast<Index>(target.path.fits[a].active_set.size());
  return report;
}

nlohmann::json to_json(const TargetResult& target, const FunctionalSpec& spec, const TargetOptions& opts) {
  nlohmann::json fits = nlohmann::json::array();
  double worst_kkt = 0.0;
  for (const auto& f : target.path.fits) {
    worst_kkt = std::max(worst_kkt, f.kkt_residual);
    const std::vector<double> delta(f.delta.data(), f.delta.data() + f.delta.size());
    fits.push_back({{"lambda", f.lambda},
                    {"delta", delta},
                    {"active_set", f.active_set},
                    {"objective", f.objective},
                    {"kkt_residual", f.kkt_residual},
                    {"iterations", f.iterations}});
  }
  return {{"schema", "targetpred/v1"},
          {"kind", "target"},
          {"functional", to_json(spec)},
          {"loss", loss_name(opts.loss)},
          {"hbar", std::vector<double>(target.hbar.data(), target.hbar.data() + target.hbar.size())},
          {"weights", std::vector<double>(target.weights.data(), target.weights.data() + target.weights.size())},
          {"lambdas", target.path.lambdas},
          {"max_kkt_residual", worst_kkt},
          {"fits", fits}};
}

}  // namespace targetpred
