#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "targetpred/functionals.hpp"
#include "targetpred/io.hpp"
#include "targetpred/pipeline.hpp"
#include "targetpred/sim_study.hpp"

namespace py = pybind11;
using namespace targetpred;

namespace {

LossKind loss_from_string(const std::string& name) {
  if (name == "squared") return LossKind::squared;
  if (name == "cross_entropy") return LossKind::cross_entropy;
  throw InputError("unknown loss '" + name + "' (expected squared or cross_entropy)");
}

FunctionalSpec make_spec(const std::string& kind, double threshold, double window_lo, double window_hi) {
  FunctionalSpec spec;
  spec.kind = functional_kind_from_string(kind);
  spec.threshold = threshold;
  spec.window_lo = window_lo;
  spec.window_hi = window_hi;
  return spec;
}

// JSON crosses the boundary as text; the Python side parses it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

std::string fit_json(const FitResult& fit) { return dump(to_json(fit)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the targetpred C++ core";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](Matrix X, Matrix Y, Vector tau) {
             Dataset d{std::move(X), std::move(Y), std::move(tau)};
             d.validate();
             return d;
           }),
           py::arg("X"), py::arg("Y"), py::arg("tau"))
      .def_readonly("X", &Dataset::X)
      .def_readonly("Y", &Dataset::Y)
      .def_readonly("tau", &Dataset::tau)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("p", &Dataset::p)
      .def_property_readonly("m", &Dataset::m);

  py::class_<PosteriorDrawSet>(m, "Posterior")
      .def_property_readonly("size", &PosteriorDrawSet::size)
      .def_property_readonly("is_conjugate", &PosteriorDrawSet::is_conjugate)
      .def("sigma_eps", [](const PosteriorDrawSet& p) {
        if (!p.is_fosr()) throw InputError("sigma_eps is only defined for functional-regression draws");
        return p.fosr().sigma_eps;
      });

  m.def("read_dataset", [](const std::string& path) { return read_dataset(path); }, py::arg("path"));
  m.def("read_posterior", [](const std::string& path) { return read_posterior(path); }, py::arg("path"));

  m.def(
      "simulate",
      [](Index n, Index p, Index mm, double rsnr, std::uint64_t seed) {
        SimConfig cfg;
        cfg.n = n;
        cfg.p = p;
        cfg.m = mm;
        cfg.rsnr = rsnr;
        cfg.seed = seed;
        SimData sim = simulate(cfg);
        return py::make_tuple(sim.data, dump(to_json(sim.truth)));
      },
      py::arg("n") = 100, py::arg("p") = 50, py::arg("m") = 200, py::arg("rsnr") = 5.0, py::arg("seed") = 0);

  m.def(
      "gibbs_fosr",
      [](const Dataset& data, Index iters, Index burnin, std::uint64_t seed, Index num_basis) {
        py::gil_scoped_release release;
        return gibbs_fosr(data, make_fosr_model(data.tau, num_basis), GibbsConfig{iters, burnin, seed});
      },
      py::arg("data"), py::arg("iters") = 10000, py::arg("burnin") = 5000, py::arg("seed") = 0,
      py::arg("num_basis") = 0);

  m.def(
      "fit_conjugate",
      [](const Matrix& X, const Vector& y, const Matrix& prior_precision, double noise_variance) {
        const GaussianPosterior gp = fit_conjugate(X, y, ConjugateLinearModel{prior_precision, noise_variance});
        return py::make_tuple(gp.mean, gp.covariance);
      },
      py::arg("X"), py::arg("y"), py::arg("prior_precision"), py::arg("noise_variance"));

  m.def(
      "sample_conjugate",
      [](const Vector& mean, const Matrix& covariance, double noise_variance, Index S, std::uint64_t seed) {
        return sample_conjugate(GaussianPosterior{mean, covariance}, noise_variance, S, seed);
      },
      py::arg("mean"), py::arg("covariance"), py::arg("noise_variance"), py::arg("S"), py::arg("seed") = 0);

  m.def(
      "apply_functional",
      [](const std::string& kind, const Matrix& curves, const Vector& tau, double threshold, double window_lo,
         double window_hi) {
        return apply_to_rows(make_spec(kind, threshold, window_lo, window_hi), curves, tau);
      },
      py::arg("kind"), py::arg("curves"), py::arg("tau"), py::arg("threshold") = 100.0,
      py::arg("window_lo") = 1.0 / 24.0, py::arg("window_hi") = 5.0 / 24.0);

  m.def(
      "solve_penalized",
      [](const Vector& h, const Matrix& X, double lambda, const Vector& weights, const std::string& loss) {
        ActionSpec spec;
        spec.lambda = lambda;
        spec.weights = weights;
        spec.loss = loss_from_string(loss);
        return fit_json(solve_penalized(h, X, spec));
      },
      py::arg("hbar"), py::arg("X"), py::arg("lam"), py::arg("weights"), py::arg("loss") = "squared");

  m.def(
      "lambda_path",
      [](const Vector& h, const Matrix& X, const Vector& weights, Index n_lambda, double ratio,
         const std::string& loss) {
        return dump(to_json(lambda_path(h, X, weights, PathOptions{n_lambda, ratio, loss_from_string(loss)})));
      },
      py::arg("hbar"), py::arg("X"), py::arg("weights"), py::arg("n_lambda") = 100, py::arg("ratio") = 1e-3,
      py::arg("loss") = "squared");

  m.def(
      "adaptive_weights",
      [](const Matrix& func_draws, const Matrix& X, double cap) { return adaptive_weights(func_draws, X, cap); },
      py::arg("func_draws"), py::arg("X"), py::arg("cap") = kDefaultWeightCap);

  m.def(
      "target_and_evaluate",
      [](const PosteriorDrawSet& post, const Dataset& data, const std::string& functional, Index n_lambda, Index K,
         Index R, double eta, double epsilon, std::uint64_t seed, const std::string& loss) {
        const FunctionalSpec spec = make_spec(functional, 100.0, 1.0 / 24.0, 5.0 / 24.0);
        TargetOptions topts;
        topts.n_lambda = n_lambda;
        topts.seed = seed;
        topts.loss = loss_from_string(loss);
        EvaluateOptions eopts;
        eopts.K = K;
        eopts.R = R;
        eopts.acceptance = AcceptanceConfig{eta, epsilon};
        eopts.seed = seed;
        py::gil_scoped_release release;
        const TargetResult tr = target(post, data, spec, topts);
        const EvaluationResult ev = evaluate(post, data, spec, tr, topts, eopts);
        nlohmann::json out;
        out["target"] = to_json(tr, spec, topts);
        out["report"] = to_json(ev.report, eopts.acceptance);
        out["selected"] = ev.selected;
        out["acceptable"] = ev.acceptable.members;
        return dump(out);
      },
      py::arg("posterior"), py::arg("data"), py::arg("functional"), py::arg("n_lambda") = 100, py::arg("K") = 10,
      py::arg("R") = 100, py::arg("eta") = 0.0, py::arg("epsilon") = 0.1, py::arg("seed") = 0,
      py::arg("loss") = "squared");

  m.def("star_round", &star_round, py::arg("t"));
  m.def("star_transform", &star_transform, py::arg("t"));
  m.def("star_transform_inverse", &star_transform_inverse, py::arg("u"));
}
