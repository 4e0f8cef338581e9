// targetpred: simulate, fit, target, evaluate, replicate.
//
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <thread>

#include "targetpred/io.hpp"
#include "targetpred/pipeline.hpp"
#include "targetpred/rng.hpp"
#include "targetpred/sim_study.hpp"

namespace fs = std::filesystem;
using namespace targetpred;

namespace {

// Stream tags so that every command derives its randomness from --seed alone.
constexpr std::uint64_t kFitStream = 0x666974;
constexpr std::uint64_t kTargetStream = 0x746172;
constexpr std::uint64_t kEvalStream = 0x6576616c;

struct FunctionalArgs {
  std::string name = "avg";
  double threshold = 100.0;
  std::vector<double> window{1.0 / 24.0, 5.0 / 24.0};
  std::string contrast_file;
  std::string spec_file;

  void add(CLI::App* cmd) {
    cmd->add_option("--functional", name, "avg, tlac, sd, sedentary, max, argmax, zeros_window, contrast")
        ->capture_default_str();
    cmd->add_option("--threshold", threshold, "sedentary threshold")->capture_default_str();
    cmd->add_option("--window", window, "zeros_window bounds on [0, 1]")->expected(2);
    cmd->add_option("--contrast", contrast_file, "JSON file holding a 1 x m contrast matrix")
        ->check(CLI::ExistingFile);
    cmd->add_option("--functional-json", spec_file, "JSON functional spec {kind, params}")->check(CLI::ExistingFile);
  }

  FunctionalSpec build() const {
    if (!spec_file.empty()) return functional_from_json(read_json_file(spec_file));
    FunctionalSpec spec;
    spec.kind = functional_kind_from_string(name);
    spec.threshold = threshold;
    spec.window_lo = window.at(0);
    spec.window_hi = window.at(1);
    if (spec.kind == FunctionalKind::contrast) {
      require(!contrast_file.empty(), "--functional contrast needs --contrast FILE");
      nlohmann::json j = read_json_file(contrast_file);
      if (j.is_object() && j.contains("contrast")) j = j["contrast"];
      spec.contrast = matrix_from_json(j, "contrast");
    }
    return spec;
  }
};

struct SolverArgs {
  std::string loss = "auto";
  Index n_lambda = 100;
  double ratio = 1e-3;
  double tol = 1e-8;
  Index max_iters = 100000;
  double weight_cap = kDefaultWeightCap;

  void add(CLI::App* cmd) {
    cmd->add_option("--loss", loss, "squared, cross_entropy or auto (cross-entropy for binary functionals)")
        ->check(CLI::IsMember({"auto", "squared", "cross_entropy"}))
        ->capture_default_str();
    cmd->add_option("--n-lambda", n_lambda, "lambda values on the path before lambda = 0")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--ratio", ratio, "smallest positive lambda as a fraction of lambda_max")
        ->check(CLI::Range(1e-12, 1.0))
        ->capture_default_str();
    cmd->add_option("--tol", tol, "coordinate-descent tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-iters", max_iters, "coordinate-descent sweeps")->check(CLI::PositiveNumber);
    cmd->add_option("--weight-cap", weight_cap, "cap on adaptive l1 weights")->check(CLI::PositiveNumber);
  }

  TargetOptions build(const FunctionalSpec& spec, std::uint64_t seed) const {
    TargetOptions o;
    if (loss == "auto")
      o.loss = spec.is_binary() ? LossKind::cross_entropy : LossKind::squared;
    else
      o.loss = loss == "squared" ? LossKind::squared : LossKind::cross_entropy;
    o.n_lambda = n_lambda;
    o.ratio = ratio;
    o.weight_cap = weight_cap;
    o.solver.tol = tol;
    o.solver.max_iters = max_iters;
    o.seed = derive_seed(seed, kTargetStream);
    return o;
  }
};

void print_written(const fs::path& p) { std::cout << "wrote " << p.string() << "\n"; }

// Covariates enter every model on a common scale: binary columns kept, the rest at sd 0.5.
Dataset load_dataset(const std::string& manifest) {
  Dataset data = read_dataset(manifest);
  data.X = standardize_covariates(data.X);
  return data;
}

int run_simulate(const SimConfig& cfg, const fs::path& out) {
  const SimData sim = simulate(cfg);
  fs::create_directories(out);
  write_dataset(out / "data.json", sim.data);
  nlohmann::json truth = to_json(sim.truth);
  truth["config"] = {{"n", cfg.n}, {"p", cfg.p}, {"m", cfg.m}, {"seed", cfg.seed},
                     {"rsnr", std::isinf(cfg.rsnr) ? nlohmann::json("inf") : nlohmann::json(cfg.rsnr)}};
  write_json_file(out / "truth.json", truth);
  print_written(out / "data.json");
  print_written(out / "truth.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted prediction with parametrized Bayesian actions"};
  app.set_config("--config", "", "TOML/INI file with option values (flags take precedence)");
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  unsigned threads = 1;
  app.add_option("--seed", seed, "single source of randomness")->capture_default_str();
  app.add_option("--threads", threads, "upper bound on worker threads")->check(CLI::PositiveNumber);

  // simulate
  SimConfig sim_cfg;
  std::string sim_out;
  auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic argmax dataset");
  simulate_cmd->add_option("--n", sim_cfg.n, "subjects")->capture_default_str();
  simulate_cmd->add_option("--p", sim_cfg.p, "covariates")->capture_default_str();
  simulate_cmd->add_option("--m", sim_cfg.m, "grid points")->capture_default_str();
  simulate_cmd->add_option("--rsnr", sim_cfg.rsnr, "root signal-to-noise ratio (inf for no noise)")
      ->capture_default_str();
  simulate_cmd->add_option("--out", sim_out, "output directory")->required();

  // fit
  std::string fit_data, fit_out, fit_model = "fosr";
  GibbsConfig gibbs;
  Index num_basis = 0;
  double t_dof = 3.0;
  Index conj_draws = 1000;
  double prior_precision = 1.0;
  double noise_variance = 1.0;
  auto* fit_cmd = app.add_subcommand("fit", "fit the Bayesian model and store posterior draws");
  fit_cmd->add_option("--data", fit_data, "dataset manifest (JSON)")->required();
  fit_cmd->add_option("--model", fit_model, "fosr or conjugate")
      ->check(CLI::IsMember({"fosr", "conjugate"}))
      ->capture_default_str();
  fit_cmd->add_option("--iters", gibbs.iters, "Gibbs iterations (fosr)")->capture_default_str();
  fit_cmd->add_option("--burnin", gibbs.burnin, "discarded iterations (fosr)")->capture_default_str();
  fit_cmd->add_option("--num-basis", num_basis, "spline basis size; 0 selects the default (fosr)");
  fit_cmd->add_option("--t-dof", t_dof, "degrees of freedom of the innovations (fosr)")->capture_default_str();
  fit_cmd->add_option("--draws", conj_draws, "posterior draws (conjugate)")->capture_default_str();
  fit_cmd->add_option("--prior-precision", prior_precision, "isotropic prior precision (conjugate)")
      ->capture_default_str();
  fit_cmd->add_option("--noise-variance", noise_variance, "known noise variance (conjugate)")->capture_default_str();
  fit_cmd->add_option("--out", fit_out, "output stem; writes <stem>.bin, <stem>.json, <stem>.summary.json")
      ->required();

  // target
  std::string tgt_data, tgt_post, tgt_out;
  FunctionalArgs tgt_func;
  SolverArgs tgt_solver;
  auto* target_cmd = app.add_subcommand("target", "optimal targeted actions along the lambda path");
  target_cmd->add_option("--data", tgt_data, "dataset manifest")->required();
  target_cmd->add_option("--posterior", tgt_post, "posterior sidecar (JSON) or stem")->required();
  target_cmd->add_option("--out", tgt_out, "output JSON file")->required();
  tgt_func.add(target_cmd);
  tgt_solver.add(target_cmd);

  // evaluate
  std::string ev_data, ev_post, ev_out;
  FunctionalArgs ev_func;
  SolverArgs ev_solver;
  EvaluateOptions ev_opts;
  bool no_truncate = false;
  std::string likelihood = "conditional";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "out-of-sample losses and the acceptable set");
  evaluate_cmd->add_option("--data", ev_data, "dataset manifest")->required();
  evaluate_cmd->add_option("--posterior", ev_post, "posterior sidecar (JSON) or stem")->required();
  evaluate_cmd->add_option("--out", ev_out, "output directory")->required();
  evaluate_cmd->add_option("--K", ev_opts.K, "folds")->capture_default_str();
  auto* ev_R = evaluate_cmd->add_option("--R", ev_opts.R,
                                        "resampled predictive draws per fold (default: min(1000, max-fraction * S))");
  evaluate_cmd->add_option("--eta", ev_opts.acceptance.eta, "percent margin")->capture_default_str();
  evaluate_cmd->add_option("--epsilon", ev_opts.acceptance.epsilon, "probability level")->capture_default_str();
  evaluate_cmd->add_option("--max-fraction", ev_opts.sir.max_fraction, "require R <= max-fraction * S (<= 0 disables)")
      ->capture_default_str();
  evaluate_cmd->add_flag("--no-truncate", no_truncate, "disable importance-weight truncation");
  evaluate_cmd->add_option("--likelihood", likelihood, "integrated or conditional importance likelihood (fosr)")
      ->check(CLI::IsMember({"integrated", "conditional"}))
      ->capture_default_str();
  ev_func.add(evaluate_cmd);
  ev_solver.add(evaluate_cmd);

  // replicate
  SimConfig rep_cfg;
  std::string rep_out;
  bool fast = false;
  EngineSettings engine;
  Index rep_iters = 0, rep_burnin = -1, rep_R = 0;
  std::vector<double> eta_grid;
  auto* replicate_cmd = app.add_subcommand("replicate", "run the synthetic study");
  replicate_cmd->add_option("--n", rep_cfg.n, "subjects")->capture_default_str();
  replicate_cmd->add_option("--p", rep_cfg.p, "covariates")->capture_default_str();
  replicate_cmd->add_option("--m", rep_cfg.m, "grid points")->capture_default_str();
  replicate_cmd->add_option("--rsnr", rep_cfg.rsnr, "root signal-to-noise ratio")->capture_default_str();
  replicate_cmd->add_option("--replications", rep_cfg.replications, "number of simulated datasets")
      ->capture_default_str();
  replicate_cmd->add_flag("--fast", fast, "reduced MCMC and resampling sizes");
  replicate_cmd->add_option("--iters", rep_iters, "override Gibbs iterations");
  replicate_cmd->add_option("--burnin", rep_burnin, "override Gibbs burn-in");
  replicate_cmd->add_option("--R", rep_R, "override resampled draws per fold");
  replicate_cmd->add_option("--eta-grid", eta_grid, "eta values for eps_max");
  replicate_cmd->add_option("--out", rep_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate_cmd) {
      sim_cfg.seed = seed;
      return run_simulate(sim_cfg, sim_out);
    }

    if (*fit_cmd) {
      const Dataset data = load_dataset(fit_data);
      PosteriorDrawSet post;
      nlohmann::json summary = {{"schema", kSchema}, {"kind", "fit_summary"}, {"model", fit_model}};
      const std::uint64_t fit_seed = derive_seed(seed, kFitStream);
      if (fit_model == "fosr") {
        gibbs.seed = fit_seed;
        const FosrModel model = make_fosr_model(data.tau, num_basis, t_dof);
        post = gibbs_fosr(data, model, gibbs);
        const double rhat = split_rhat(post.fosr().sigma_eps);
        summary["num_basis"] = model.num_basis();
        summary["iters"] = gibbs.iters;
        summary["burnin"] = gibbs.burnin;
        summary["split_rhat_sigma_eps"] = rhat;
        summary["sigma_eps_mean"] = post.fosr().sigma_eps.mean();
        if (!(rhat < 1.1)) std::cerr << "warning: split R-hat for sigma_eps is " << rhat << "\n";
      } else {
        require(data.m() == 1, "the conjugate model needs scalar responses (m = 1), got m = " +
                                   std::to_string(data.m()));
        const Matrix design = action_design(data);
        ConjugateLinearModel model;
        model.prior_precision = prior_precision * Matrix::Identity(design.cols(), design.cols());
        model.noise_variance = noise_variance;
        const GaussianPosterior gp = fit_conjugate(design, data.Y.col(0), model);
        post = sample_conjugate(gp, noise_variance, conj_draws, fit_seed);
        summary["posterior_mean"] = to_json(gp.mean);
        summary["posterior_covariance"] = to_json(gp.covariance);
      }
      summary["S"] = post.size();
      summary["seed"] = seed;
      write_posterior(fit_out, post);
      write_json_file(fit_out + ".summary.json", summary);
      print_written(fit_out + ".json");
      print_written(fit_out + ".summary.json");
      return 0;
    }

    if (*target_cmd) {
      const Dataset data = load_dataset(tgt_data);
      const PosteriorDrawSet post = read_posterior(tgt_post);
      const FunctionalSpec spec = tgt_func.build();
      const TargetOptions topts = tgt_solver.build(spec, seed);
      const TargetResult res = target(post, data, spec, topts);
      write_json_file(tgt_out, to_json(res, spec, topts));
      print_written(tgt_out);
      return 0;
    }

    if (*evaluate_cmd) {
      const Dataset data = load_dataset(ev_data);
      const PosteriorDrawSet post = read_posterior(ev_post);
      const FunctionalSpec spec = ev_func.build();
      const TargetOptions topts = ev_solver.build(spec, seed);
      ev_opts.importance.truncate = !no_truncate;
      ev_opts.importance.likelihood =
          likelihood == "conditional" ? LikelihoodKind::conditional : LikelihoodKind::integrated;
      ev_opts.seed = derive_seed(seed, kEvalStream);
      if (ev_R->count() == 0 && ev_opts.sir.max_fraction > 0.0)
        ev_opts.R = std::max<Index>(
            1, std::min<Index>(ev_opts.R, static_cast<Index>(ev_opts.sir.max_fraction * static_cast<double>(post.size()))));
      const TargetResult tgt = target(post, data, spec, topts);
      const EvaluationResult ev = evaluate(post, data, spec, tgt, topts, ev_opts);
      const fs::path out(ev_out);
      fs::create_directories(out);
      write_json_file(out / "target.json", to_json(tgt, spec, topts));
      nlohmann::json report = to_json(ev.report, ev_opts.acceptance);
      report["schema"] = kSchema;
      report["functional"] = to_json(spec);
      report["K"] = ev_opts.K;
      report["fold_assignment"] = ev.plan.assignment;
      report["fold_ess"] = ev.weights.ess;
      report["fold_truncated"] = ev.weights.truncated;
      write_json_file(out / "report.json", report);
      write_text_file(out / "figure_table.csv", figure_table_csv(ev.report));
      const FitResult& sel = tgt.path.fits[static_cast<size_t>(ev.selected)];
      nlohmann::json selected = to_json(sel);
      selected["schema"] = kSchema;
      selected["index"] = ev.selected;
      selected["eta"] = ev_opts.acceptance.eta;
      selected["epsilon"] = ev_opts.acceptance.epsilon;
      selected["min_index"] = ev.report.min_index;
      write_json_file(out / "selected.json", selected);
      for (const auto& w : ev.report.warnings) std::cerr << "warning: " << w << "\n";
      print_written(out / "report.json");
      print_written(out / "figure_table.csv");
      print_written(out / "selected.json");
      return 0;
    }

    if (*replicate_cmd) {
      rep_cfg.seed = seed;
      if (fast) engine = EngineSettings::fast();
      if (rep_iters > 0) engine.gibbs_iters = rep_iters;
      if (rep_burnin >= 0) engine.gibbs_burnin = rep_burnin;
      if (rep_R > 0) engine.R = rep_R;
      if (!eta_grid.empty()) engine.eta_grid = eta_grid;
      const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
      const auto results = replicate(rep_cfg, engine, std::min(threads, hw));
      const fs::path out(rep_out);
      fs::create_directories(out);
      write_text_file(out / "metrics.csv", metrics_csv(results));
      write_text_file(out / "eps_max.csv", eps_max_csv(results, engine.eta_grid));
      write_json_file(out / "summary.json", summary_json(results, rep_cfg, engine));
      print_written(out / "metrics.csv");
      print_written(out / "eps_max.csv");
      print_written(out / "summary.json");
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
