#include "targetpred/functionals.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace targetpred {

namespace {

constexpr std::array<std::pair<FunctionalKind, const char*>, 8> kNames{{
    {FunctionalKind::avg, "avg"},
    {FunctionalKind::tlac, "tlac"},
    {FunctionalKind::sd, "sd"},
    {FunctionalKind::sedentary, "sedentary"},
    {FunctionalKind::max, "max"},
    {FunctionalKind::argmax, "argmax"},
    {FunctionalKind::zeros_window, "zeros_window"},
    {FunctionalKind::contrast, "contrast"},
}};

constexpr double kZeroTol = 1e-12;

double domain_length(const Vector& tau) { return tau.size() > 1 ? tau(tau.size() - 1) - tau(0) : 1.0; }

// Mean of log(u) for u uniform on [a, b], a, b > 0.
double mean_log(double a, double b) {
  const double c = 0.5 * (a + b);
  const double d = 0.5 * std::abs(b - a);
  if (d < 1e-4 * c) return std::log(c) - d * d / (6.0 * c * c);
  auto F = [](double u) { return u * std::log(u) - u; };
  return (F(b) - F(a)) / (b - a);
}

// Fraction of a linear segment from a to b lying at or below c.
double fraction_below(double a, double b, double c) {
  if (a <= c && b <= c) return 1.0;
  if (a > c && b > c) return 0.0;
  const double t = (c - a) / (b - a);
  return a <= c ? t : 1.0 - t;
}

// Integral over [tau_1, tau_m] of f applied segment-wise, normalized.
template <class SegmentMean>
double integrate(const Eigen::Ref<const Vector>& y, const Vector& tau, SegmentMean seg_mean) {
  const Index m = y.size();
  if (m == 1) return seg_mean(y(0), y(0));
  double acc = 0.0;
  for (Index j = 0; j + 1 < m; ++j) acc += (tau(j + 1) - tau(j)) * seg_mean(y(j), y(j + 1));
  return acc / domain_length(tau);
}

}  // namespace

std::string to_string(FunctionalKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

FunctionalKind functional_kind_from_string(const std::string& name) {
  for (const auto& [k, nm] : kNames)
    if (name == nm) return k;
  if (name == "zeros") return FunctionalKind::zeros_window;
  throw InputError("unknown functional kind '" + name + "'");
}

Index FunctionalSpec::output_dim() const { return kind == FunctionalKind::contrast ? contrast.rows() : 1; }

void FunctionalSpec::validate(Index m) const {
  switch (kind) {
    case FunctionalKind::sedentary:
      require(std::isfinite(threshold), "sedentary threshold must be finite");
      break;
    case FunctionalKind::zeros_window:
      require(std::isfinite(window_lo) && std::isfinite(window_hi) && window_lo >= 0.0 && window_hi <= 1.0 &&
                  window_lo < window_hi,
              "zeros window must satisfy 0 <= lo < hi <= 1");
      break;
    case FunctionalKind::contrast:
      require(contrast.rows() >= 1, "contrast matrix is empty");
      require(contrast.cols() == m, "contrast has " + std::to_string(contrast.cols()) +
                                        " columns, curves have m = " + std::to_string(m));
      require(contrast.allFinite(), "contrast matrix has non-finite entries");
      break;
    default:
      break;
  }
}

Vector trapezoid_weights(const Vector& tau) {
  const Index m = tau.size();
  require(m >= 1, "empty grid");
  Vector w = Vector::Zero(m);
  if (m == 1) {
    w(0) = 1.0;
    return w;
  }
  for (Index j = 0; j + 1 < m; ++j) {
    const double h = 0.5 * (tau(j + 1) - tau(j));
    w(j) += h;
    w(j + 1) += h;
  }
  return w / domain_length(tau);
}

Vector apply(const FunctionalSpec& spec, const Eigen::Ref<const Vector>& curve, const Vector& tau) {
  const Index m = curve.size();
  require(tau.size() == m, "curve length " + std::to_string(m) + " does not match grid length " +
                               std::to_string(tau.size()));
  require(m >= 1, "empty curve");
  switch (spec.kind) {
    case FunctionalKind::avg:
      return Vector::Constant(1, integrate(curve, tau, [](double a, double b) { return 0.5 * (a + b); }));
    case FunctionalKind::tlac: {
      require((curve.array() > -1.0).all(), "tlac requires curve values > -1");
      return Vector::Constant(1, integrate(curve, tau, [](double a, double b) { return mean_log(a + 1.0, b + 1.0); }));
    }
    case FunctionalKind::sd: {
      const double mu = integrate(curve, tau, [](double a, double b) { return 0.5 * (a + b); });
      const double var = integrate(curve, tau, [mu](double a, double b) {
        const double u = a - mu;
        const double v = b - mu;
        return (u * u + u * v + v * v) / 3.0;
      });
      return Vector::Constant(1, std::sqrt(std::max(0.0, var)));
    }
    case FunctionalKind::sedentary: {
      const double c = spec.threshold;
      return Vector::Constant(1, integrate(curve, tau, [c](double a, double b) { return fraction_below(a, b, c); }));
    }
    case FunctionalKind::max:
      return Vector::Constant(1, curve.maxCoeff());
    case FunctionalKind::argmax: {
      Index best = 0;
      for (Index j = 1; j < m; ++j)
        if (curve(j) > curve(best)) best = j;
      return Vector::Constant(1, tau(best));
    }
    case FunctionalKind::zeros_window: {
      spec.validate(m);
      bool any = false;
      bool all_zero = true;
      for (Index j = 0; j < m; ++j) {
        if (tau(j) < spec.window_lo || tau(j) > spec.window_hi) continue;
        any = true;
        if (!(std::abs(curve(j)) < kZeroTol)) {
          all_zero = false;
          break;
        }
      }
      require(any, "zeros window contains no grid points");
      return Vector::Constant(1, all_zero ? 1.0 : 0.0);
    }
    case FunctionalKind::contrast:
      spec.validate(m);
      return spec.contrast * curve;
  }
  throw InputError("unhandled functional kind");
}

double apply_scalar(const FunctionalSpec& spec, const Eigen::Ref<const Vector>& curve, const Vector& tau) {
  const Vector v = apply(spec, curve, tau);
  require(v.size() == 1, "functional is not scalar");
  return v(0);
}

Matrix apply_to_draws(const FunctionalSpec& spec, const PredictiveDrawSet& preds) {
  const Index nd = preds.n_design();
  const Index q = spec.output_dim();
  require(preds.values.rows() == preds.S * nd, "predictive draw set has inconsistent dimensions");
  spec.validate(preds.m());
  Matrix out(preds.S, nd * q);
  for (Index s = 0; s < preds.S; ++s)
    for (Index i = 0; i < nd; ++i)
      out.block(s, i * q, 1, q) = apply(spec, preds.curve(s, i).transpose(), preds.tau).transpose();
  return out;
}

Matrix apply_to_rows(const FunctionalSpec& spec, const Matrix& Y, const Vector& tau) {
  spec.validate(Y.cols());
  const Index q = spec.output_dim();
  Matrix out(Y.rows(), q);
  for (Index i = 0; i < Y.rows(); ++i) out.row(i) = apply(spec, Y.row(i).transpose(), tau).transpose();
  return out;
}

Vector column_means(const Matrix& draws) {
  require(draws.rows() >= 1, "no draws");
  return draws.colwise().mean().transpose();
}

Vector hbar(const FunctionalSpec& spec, const PredictiveDrawSet& preds) {
  return column_means(apply_to_draws(spec, preds));
}

Matrix predictive_functional_draws(const FunctionalSpec& spec, const PosteriorDrawSet& post, const Matrix& design,
                                   const Vector& tau, std::uint64_t seed, PredictiveKind kind) {
  const Index S = post.size();
  const Index nd = design.rows();
  const Index q = spec.output_dim();
  require(design.cols() == post.num_covariates(), "design has wrong number of columns");
  if (kind == PredictiveKind::fitted_subject && post.is_fosr())
    require(nd == post.fosr().n, "fitted-subject predictive needs the fitted design");
  spec.validate(tau.size());
  Matrix out(S, nd * q);
  for (Index s = 0; s < S; ++s)
    for (Index i = 0; i < nd; ++i) {
      const Vector curve = predictive_curve(post, design.row(i).transpose(), s, i, seed, kind);
      out.block(s, i * q, 1, q) = apply(spec, curve, tau).transpose();
    }
  return out;
}

nlohmann::json to_json(const FunctionalSpec& spec) {
  nlohmann::json params = nlohmann::json::object();
  switch (spec.kind) {
    case FunctionalKind::sedentary:
      params["threshold"] = spec.threshold;
      break;
    case FunctionalKind::zeros_window:
      params["window"] = {spec.window_lo, spec.window_hi};
      break;
    case FunctionalKind::contrast: {
      nlohmann::json rows = nlohmann::json::array();
      for (Index r = 0; r < spec.contrast.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Index c = 0; c < spec.contrast.cols(); ++c) row.push_back(spec.contrast(r, c));
        rows.push_back(row);
      }
      params["contrast"] = rows;
      break;
    }
    default:
      break;
  }
  return {{"kind", to_string(spec.kind)}, {"params", params}};
}

FunctionalSpec functional_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("kind") && j["kind"].is_string(), "functional spec needs a string 'kind'");
  FunctionalSpec spec;
  spec.kind = functional_kind_from_string(j["kind"].get<std::string>());
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  require(params.is_object(), "functional 'params' must be an object");
  try {
    if (params.contains("threshold")) spec.threshold = params["threshold"].get<double>();
    if (params.contains("window")) {
      const auto& w = params["window"];
      require(w.is_array() && w.size() == 2, "'window' must be [lo, hi]");
      spec.window_lo = w[0].get<double>();
      spec.window_hi = w[1].get<double>();
    }
    if (params.contains("contrast")) {
      const auto& rows = params["contrast"];
      require(rows.is_array() && !rows.empty() && rows[0].is_array(), "'contrast' must be a non-empty matrix");
      const auto q = static_cast<Index>(rows.size());
      const auto m = static_cast<Index>(rows[0].size());
      spec.contrast.resize(q, m);
      for (Index r = 0; r < q; ++r) {
        require(rows[r].size() == static_cast<size_t>(m), "'contrast' rows have unequal length");
        for (Index c = 0; c < m; ++c) spec.contrast(r, c) = rows[r][c].get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed functional params: ") + e.what());
  }
  if (spec.kind == FunctionalKind::contrast)
    require(spec.contrast.size() > 0, "contrast functional needs a 'contrast' matrix");
  return spec;
}

}  // namespace targetpred
