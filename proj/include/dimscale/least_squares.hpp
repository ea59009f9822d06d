#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dimscale/error.hpp"

namespace dimscale {

/// How a positive model parameter maps to the unconstrained coordinate the
/// solver moves in: x = exp(u), or x = exp(u) - shift for parameters that may
/// reach zero.
struct ParamTransform {
  double shift = 0.0;

  double to_natural(double u) const { return std::exp(u) - shift; }
  double to_free(double x) const { return std::log(x + shift); }
  double dnatural_dfree(double u) const { return std::exp(u); }
};

inline constexpr ParamTransform kLogTransform{0.0};
inline constexpr double kDeltaShift = 1e-9;
inline constexpr ParamTransform kLogShiftedTransform{kDeltaShift};

struct FitOptions {
  int max_iters = 500;
  double gradient_tolerance = 1e-10;
  double relative_tolerance = 1e-12;
  /// Starting points in the solver's free (log) coordinates. Empty means the
  /// model's default grid.
  std::vector<std::vector<double>> multistart_grid;
  std::uint64_t seed = 0;
};

enum class FitStatus { converged, max_iterations };

inline const char* to_string(FitStatus s) { return s == FitStatus::converged ? "converged" : "max_iterations"; }

struct LeastSquaresResult {
  std::vector<double> params;  // natural coordinates
  double residual_norm = 0.0;  // ||model(x) - y||_2
  FitStatus status = FitStatus::converged;
  int iterations = 0;
  std::size_t start_index = 0;
  std::size_t n_starts = 0;
  std::vector<double> start_residual_norms;
};

/// A residual model: value and natural-coordinate gradient at one input, the
/// per-parameter transforms, and a default multistart grid.
template <class M>
concept ResidualModel = requires(const M& m, const typename M::Input& x, std::span<const double> p,
                                 std::span<double> g, std::span<const typename M::Input> xs,
                                 std::span<const double> ys) {
  { M::kParams } -> std::convertible_to<std::size_t>;
  { m.value(x, p) } -> std::convertible_to<double>;
  m.gradient(x, p, g);
  { M::transforms() } -> std::convertible_to<std::array<ParamTransform, M::kParams>>;
  { m.default_starts(xs, ys) } -> std::convertible_to<std::vector<std::vector<double>>>;
};

namespace detail {

template <ResidualModel M>
class LevenbergMarquardt {
 public:
  static constexpr int K = static_cast<int>(M::kParams);
  using Vec = Eigen::Matrix<double, K, 1>;
  using Mat = Eigen::Matrix<double, K, K>;

  LevenbergMarquardt(const M& model, std::span<const typename M::Input> x, std::span<const double> y,
                     const FitOptions& opts)
      : model_(model), x_(x), y_(y), opts_(opts), transforms_(M::transforms()) {}

  std::array<double, M::kParams> natural(const Vec& u) const {
    std::array<double, M::kParams> p{};
    for (int k = 0; k < K; ++k) p[k] = transforms_[k].to_natural(u[k]);
    return p;
  }

  /// Half the sum of squared residuals; +inf when the model overflows.
  double cost(const Vec& u) const {
    const auto p = natural(u);
    double c = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double r = model_.value(x_[i], p) - y_[i];
      c += r * r;
    }
    return std::isfinite(c) ? 0.5 * c : std::numeric_limits<double>::infinity();
  }

  void normal_equations(const Vec& u, Mat& a, Vec& g) const {
    const auto p = natural(u);
    std::array<double, M::kParams> grad{};
    a.setZero();
    g.setZero();
    Vec row;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      const double r = model_.value(x_[i], p) - y_[i];
      model_.gradient(x_[i], p, grad);
      for (int k = 0; k < K; ++k) row[k] = grad[k] * transforms_[k].dnatural_dfree(u[k]);
      a.noalias() += row * row.transpose();
      g.noalias() += r * row;
    }
  }

  struct Run {
    Vec u;
    double cost;
    FitStatus status;
    int iterations;
  };

  Run solve(Vec u) const {
    double f = cost(u);
    if (!std::isfinite(f)) return {u, f, FitStatus::max_iterations, 0};
    Mat a;
    Vec g;
    normal_equations(u, a, g);
    double lambda = 1e-3 * std::max(a.diagonal().maxCoeff(), 1e-300);
    double nu = 2.0;

    for (int it = 1; it <= opts_.max_iters; ++it) {
      if (f == 0.0 || g.template lpNorm<Eigen::Infinity>() < opts_.gradient_tolerance)
        return {u, f, FitStatus::converged, it - 1};

      Mat damped = a;
      for (int k = 0; k < K; ++k) damped(k, k) += lambda * std::max(a(k, k), 1e-12);
      const Vec h = damped.ldlt().solve(-g);
      if (!h.allFinite() || h.norm() <= 1e-15 * (u.norm() + 1e-15)) return {u, f, FitStatus::converged, it};

      const Vec u_new = u + h;
      const double f_new = cost(u_new);
      const double predicted = -(g.dot(h) + 0.5 * h.dot(a * h));
      const double rho = predicted > 0.0 ? (f - f_new) / predicted : -1.0;

      if (std::isfinite(f_new) && f_new < f && rho > 0.0) {
        const double rel = (f - f_new) / f;
        u = u_new;
        f = f_new;
        normal_equations(u, a, g);
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        if (rel < opts_.relative_tolerance) return {u, f, FitStatus::converged, it};
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (lambda > 1e300) return {u, f, FitStatus::converged, it};
      }
    }
    return {u, f, FitStatus::max_iterations, opts_.max_iters};
  }

 private:
  const M& model_;
  std::span<const typename M::Input> x_;
  std::span<const double> y_;
  const FitOptions& opts_;
  std::array<ParamTransform, M::kParams> transforms_;
};

}  // namespace detail

/// Minimizes sum_i (model(x_i; theta) - y_i)^2 with a damped Gauss-Newton
/// (Levenberg-Marquardt) iteration in log coordinates, from every multistart
/// point. Returns the run with the lowest residual; ties go to the earliest
/// start.
template <ResidualModel M>
LeastSquaresResult least_squares(const M& model, std::span<const typename M::Input> x, std::span<const double> y,
                                 const FitOptions& opts = {}) {
  constexpr std::size_t K = M::kParams;
  if (x.size() != y.size()) throw ValidationError("input and target lengths differ");
  if (x.size() < K + 1)
    throw ValidationError("under-determined fit: " + std::to_string(x.size()) + " points for " + std::to_string(K) +
                          " parameters (need at least " + std::to_string(K + 1) + ")");
  if (opts.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("non-finite target");

  const auto starts = opts.multistart_grid.empty() ? model.default_starts(x, y) : opts.multistart_grid;
  if (starts.empty()) throw ConfigError("empty multistart grid");

  detail::LevenbergMarquardt<M> lm(model, x, y, opts);
  using Vec = typename detail::LevenbergMarquardt<M>::Vec;

  LeastSquaresResult best;
  best.n_starts = starts.size();
  double best_cost = std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    if (starts[s].size() != K) throw ConfigError("multistart point has wrong dimension");
    Vec u0;
    for (std::size_t k = 0; k < K; ++k) u0[k] = starts[s][k];
    const double c0 = lm.cost(u0);
    best.start_residual_norms.push_back(std::sqrt(2.0 * c0));
    const auto run = lm.solve(u0);
    if (!have || run.cost < best_cost) {
      have = true;
      best_cost = run.cost;
      const auto p = lm.natural(run.u);
      best.params.assign(p.begin(), p.end());
      best.status = run.status;
      best.iterations = run.iterations;
      best.start_index = s;
    }
  }
  if (!std::isfinite(best_cost)) throw NumericError("least squares failed: model overflowed at every start");
  best.residual_norm = std::sqrt(2.0 * best_cost);
  return best;
}

}  // namespace dimscale
