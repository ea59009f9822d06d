#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dimscale/core.hpp"
#include "dimscale/error.hpp"
#include "dimscale/least_squares.hpp"

namespace dimscale {

inline constexpr double kParamsPerMillion = 1e6;

/// 1 - SS_res / SS_tot, with SS_tot taken about the target mean.
inline double r_squared(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || targets.empty())
    throw ValidationError("r_squared needs equal, nonempty prediction and target lists");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_res += (predictions[i] - targets[i]) * (predictions[i] - targets[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (ss_tot == 0.0) throw NumericError("r_squared undefined: targets have zero variance");
  return 1.0 - ss_res / ss_tot;
}

/// Bookkeeping shared by both law fits.
struct FitDiagnostics {
  double r2 = 0.0;
  double residual_norm = 0.0;
  std::size_t n_points = 0;
  FitStatus status = FitStatus::converged;
  int iterations = 0;
  std::size_t start_index = 0;
  std::size_t n_starts = 0;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// L(D) = A / D^alpha + delta_D

struct DimLawModel {
  using Input = double;  // embedding dimension
  static constexpr std::size_t kParams = 3;  // A, alpha, delta

  static std::array<ParamTransform, kParams> transforms() {
    return {kLogTransform, kLogTransform, kLogShiftedTransform};
  }

  double value(double d, std::span<const double> p) const { return p[0] * std::pow(d, -p[1]) + p[2]; }

  void gradient(double d, std::span<const double> p, std::span<double> g) const {
    const double term = std::pow(d, -p[1]);
    g[0] = term;
    g[1] = -p[0] * term * std::log(d);
    g[2] = 1.0;
  }

  /// 3x3x3 grid: A scaled so the power term spans the observed range at the
  /// smallest dimension, times {0.1, 1, 10}; alpha in {0.5, 1, 2}; delta in
  /// {0, y_min/2, 0.99 y_min}.
  std::vector<std::vector<double>> default_starts(std::span<const double> x, std::span<const double> y) const {
    const double x_min = *std::min_element(x.begin(), x.end());
    const double y_min = *std::min_element(y.begin(), y.end());
    const double y_max = *std::max_element(y.begin(), y.end());
    const double span = std::max(y_max - y_min, 1e-12);
    std::vector<std::vector<double>> starts;
    for (double a_scale : {0.1, 1.0, 10.0})
      for (double alpha : {0.5, 1.0, 2.0})
        for (double delta : {0.0, 0.5 * y_min, 0.99 * y_min}) {
          const double a = a_scale * span * std::pow(x_min, alpha);
          starts.push_back({std::log(a), std::log(alpha), kLogShiftedTransform.to_free(std::max(delta, 0.0))});
        }
    return starts;
  }
};

struct DimLawFit {
  double a_coeff = 1.0;
  double alpha = 1.0;
  double delta = 0.0;
  FitDiagnostics diag;

  /// The equivalent form ((A')/D)^alpha + delta uses A' = A^(1/alpha).
  double scale_form_coeff() const { return std::pow(a_coeff, 1.0 / alpha); }
};

inline double predict_dim(const DimLawFit& fit, double dim) {
  if (!(dim >= 1.0)) throw ConfigError("dimension must be >= 1");
  return fit.a_coeff * std::pow(dim, -fit.alpha) + fit.delta;
}

// ---------------------------------------------------------------------------
// L(D, N) = A / D^alpha + B / N^beta + delta, N in millions of parameters

struct JointInput {
  double dim = 1.0;
  double n_millions = 1.0;
};

struct JointLawModel {
  using Input = JointInput;
  static constexpr std::size_t kParams = 5;  // A, B, alpha, beta, delta

  static std::array<ParamTransform, kParams> transforms() {
    return {kLogTransform, kLogTransform, kLogTransform, kLogTransform, kLogShiftedTransform};
  }

  double value(const JointInput& x, std::span<const double> p) const {
    return p[0] * std::pow(x.dim, -p[2]) + p[1] * std::pow(x.n_millions, -p[3]) + p[4];
  }

  void gradient(const JointInput& x, std::span<const double> p, std::span<double> g) const {
    const double td = std::pow(x.dim, -p[2]);
    const double tn = std::pow(x.n_millions, -p[3]);
    g[0] = td;
    g[1] = tn;
    g[2] = -p[0] * td * std::log(x.dim);
    g[3] = -p[1] * tn * std::log(x.n_millions);
    g[4] = 1.0;
  }

  /// 3^5 grid built the same way as the dimension-only grid, with the
  /// parameter term scaled at the smallest model.
  std::vector<std::vector<double>> default_starts(std::span<const JointInput> x, std::span<const double> y) const {
    double d_min = x[0].dim;
    double n_min = x[0].n_millions;
    for (const auto& xi : x) {
      d_min = std::min(d_min, xi.dim);
      n_min = std::min(n_min, xi.n_millions);
    }
    const double y_min = *std::min_element(y.begin(), y.end());
    const double y_max = *std::max_element(y.begin(), y.end());
    const double span = std::max(y_max - y_min, 1e-12);
    std::vector<std::vector<double>> starts;
    for (double a_scale : {0.1, 1.0, 10.0})
      for (double b_scale : {0.1, 1.0, 10.0})
        for (double alpha : {0.5, 1.0, 2.0})
          for (double beta : {0.5, 1.0, 2.0})
            for (double delta : {0.0, 0.5 * y_min, 0.99 * y_min}) {
              const double a = a_scale * span * std::pow(d_min, alpha);
              const double b = b_scale * span * std::pow(n_min, beta);
              starts.push_back({std::log(a), std::log(b), std::log(alpha), std::log(beta),
                                kLogShiftedTransform.to_free(std::max(delta, 0.0))});
            }
    return starts;
  }
};

struct JointLawFit {
  double a_coeff = 1.0;
  double b_coeff = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double delta = 0.0;
  FitDiagnostics diag;
  static constexpr const char* kParamUnit = "millions";
};

/// `n_params` is in raw parameters; the law is evaluated with N / 1e6.
inline double predict_joint(const JointLawFit& fit, double dim, double n_params) {
  if (!(dim >= 1.0)) throw ConfigError("dimension must be >= 1");
  if (!(n_params > 0.0)) throw ConfigError("parameter count must be > 0");
  return fit.a_coeff * std::pow(dim, -fit.alpha) + fit.b_coeff * std::pow(n_params / kParamsPerMillion, -fit.beta) +
         fit.delta;
}

namespace detail {

inline void require_single_dataset(const ObservationTable& table) {
  if (table.empty()) throw ValidationError("empty table");
  if (table.datasets().size() != 1) throw ValidationError("fit needs a single-dataset table; filter by dataset first");
}

inline FitDiagnostics make_diagnostics(const LeastSquaresResult& ls, std::span<const double> pred,
                                       std::span<const double> y, double delta) {
  FitDiagnostics d;
  d.r2 = r_squared(pred, y);
  d.residual_norm = ls.residual_norm;
  d.n_points = y.size();
  d.status = ls.status;
  d.iterations = ls.iterations;
  d.start_index = ls.start_index;
  d.n_starts = ls.n_starts;
  if (ls.status != FitStatus::converged) d.warnings.push_back("did not converge within max_iters; best-so-far returned");
  if (delta > *std::min_element(y.begin(), y.end())) d.warnings.push_back("irreducible term exceeds smallest observation");
  return d;
}

}  // namespace detail

inline DimLawFit fit_dim_law(const ObservationTable& table, const FitOptions& opts = {}) {
  detail::require_single_dataset(table);
  if (table.models().size() != 1)
    throw ValidationError("dimension-only law needs a single model; got " + std::to_string(table.models().size()));
  if (table.size() < 4) throw ValidationError("dimension-only law needs at least 4 points");

  std::vector<double> x, y;
  for (const auto& r : table.rows) {
    x.push_back(static_cast<double>(r.embed_dim));
    y.push_back(r.entropy);
  }
  const DimLawModel model;
  const auto ls = least_squares(model, std::span<const double>(x), std::span<const double>(y), opts);

  DimLawFit fit;
  fit.a_coeff = ls.params[0];
  fit.alpha = ls.params[1];
  fit.delta = std::max(ls.params[2], 0.0);
  std::vector<double> pred;
  for (double d : x) pred.push_back(predict_dim(fit, d));
  fit.diag = detail::make_diagnostics(ls, pred, y, fit.delta);
  return fit;
}

inline JointLawFit fit_joint_law(const ObservationTable& table, const FitOptions& opts = {}) {
  detail::require_single_dataset(table);
  if (table.models().size() < 2)
    throw ValidationError("joint law needs at least 2 models; use the dimension-only law for a single model");
  if (table.size() < 6) throw ValidationError("joint law needs at least 6 points");

  std::vector<JointInput> x;
  std::vector<double> y;
  for (const auto& r : table.rows) {
    x.push_back({static_cast<double>(r.embed_dim), r.n_params / kParamsPerMillion});
    y.push_back(r.entropy);
  }
  const JointLawModel model;
  const auto ls = least_squares(model, std::span<const JointInput>(x), std::span<const double>(y), opts);

  JointLawFit fit;
  fit.a_coeff = ls.params[0];
  fit.b_coeff = ls.params[1];
  fit.alpha = ls.params[2];
  fit.beta = ls.params[3];
  fit.delta = std::max(ls.params[4], 0.0);
  std::vector<double> pred;
  for (const auto& r : table.rows) pred.push_back(predict_joint(fit, static_cast<double>(r.embed_dim), r.n_params));
  fit.diag = detail::make_diagnostics(ls, pred, y, fit.delta);
  return fit;
}

}  // namespace dimscale
