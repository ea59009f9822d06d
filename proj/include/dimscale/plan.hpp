#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dimscale/error.hpp"
#include "dimscale/scaling_law.hpp"

namespace dimscale {

enum class ScoringRegime { exhaustive, ann };

inline const char* to_string(ScoringRegime r) { return r == ScoringRegime::exhaustive ? "exhaustive" : "ann"; }

inline ScoringRegime parse_regime(const std::string& s) {
  if (s == "exhaustive") return ScoringRegime::exhaustive;
  if (s == "ann") return ScoringRegime::ann;
  throw ConfigError("unknown scoring regime '" + s + "' (expected exhaustive or ann)");
}

/// Per-query FLOPs budget and the workload it is spent on.
struct BudgetSpec {
  double total_flops = 0.0;
  double query_tokens = 1.0;
  double corpus_size = 2.0;
  ScoringRegime regime = ScoringRegime::exhaustive;

  void validate() const {
    if (!(total_flops > 0.0) || !std::isfinite(total_flops)) throw ConfigError("budget must be positive");
    if (!(query_tokens >= 1.0)) throw ConfigError("query tokens must be >= 1");
    if (!(corpus_size >= 2.0)) throw ConfigError("corpus size must be >= 2");
  }
};

/// Query encoding cost, 2 N T. Projection-layer FLOPs are not counted.
inline double flops_encode(double n_params, double tokens) {
  if (!(n_params > 0.0)) throw ConfigError("parameter count must be > 0");
  if (!(tokens >= 1.0)) throw ConfigError("query tokens must be >= 1");
  return 2.0 * n_params * tokens;
}

/// Scoring cost: one multiply-add per dimension per scored document. The ANN
/// regime scores ln(M) candidates (natural log).
inline double flops_score(double corpus_size, double dim, ScoringRegime regime) {
  if (!(dim > 0.0)) throw ConfigError("dimension must be > 0");
  if (regime == ScoringRegime::ann) {
    if (!(corpus_size >= 2.0)) throw ConfigError("ann regime needs corpus size >= 2");
    return 2.0 * dim * std::log(corpus_size);
  }
  if (!(corpus_size >= 1.0)) throw ConfigError("corpus size must be >= 1");
  return 2.0 * corpus_size * dim;
}

/// Documents scored per query, i.e. flops_score / (2 D).
inline double scored_documents(const BudgetSpec& b) {
  return b.regime == ScoringRegime::ann ? std::log(b.corpus_size) : b.corpus_size;
}

struct Allocation {
  double n_params = 0.0;
  double dim = 0.0;
};

/// Splits the budget: gamma B to encoding, (1 - gamma) B to scoring.
inline Allocation allocation_from_gamma(double gamma, const BudgetSpec& b) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  b.validate();
  return {gamma * b.total_flops / (2.0 * b.query_tokens), (1.0 - gamma) * b.total_flops / (2.0 * scored_documents(b))};
}

/// Golden-section minimization of a unimodal function on [lo, hi].
inline std::pair<double, double> golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                                                         double tolerance = 1e-14, int max_iters = 200) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < max_iters && (hi - lo) > tolerance * std::max(1.0, std::abs(lo) + std::abs(hi)); ++i) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

inline constexpr int kDefaultGammaGrid = 4096;
inline constexpr double kDimRoundingStep = 8.0;
inline constexpr double kParamRoundingStep = 1e6;

struct AllocationResult {
  double gamma = 0.0;
  double n_hat = 0.0;
  double d_hat = 0.0;
  double predicted_entropy = 0.0;
  double enc_flops = 0.0;
  double score_flops = 0.0;

  // Rounded to the nearest multiple of 8 (>= 8) and the nearest million (>= 1e6).
  long long d_hat_rounded = 0;
  double n_hat_rounded = 0.0;
  double predicted_entropy_rounded = 0.0;
  double rounded_flops = 0.0;
  double rounding_overshoot = 0.0;  // max(0, rounded_flops - B)
  double rounding_slack = 0.0;      // cost of one rounding step on each axis
};

namespace detail {

/// Joint-law value without the D >= 1 precondition; the planner explores
/// real-valued allocations.
inline double joint_objective(const JointLawFit& fit, double dim, double n_params) {
  return fit.a_coeff * std::pow(dim, -fit.alpha) + fit.b_coeff * std::pow(n_params / kParamsPerMillion, -fit.beta) +
         fit.delta;
}

}  // namespace detail

/// Minimizes the predicted entropy over the gamma split: a uniform grid of
/// `grid_points` values strictly inside (0, 1), then golden-section refinement
/// on the two cells around the best grid value. Ties on the grid go to the
/// lowest gamma.
inline AllocationResult optimal_allocation(const JointLawFit& fit, const BudgetSpec& b,
                                           int grid_points = kDefaultGammaGrid) {
  b.validate();
  if (grid_points < 3) throw ConfigError("gamma grid needs at least 3 points");

  const auto loss_at = [&](double gamma) {
    const auto a = allocation_from_gamma(gamma, b);
    return detail::joint_objective(fit, a.dim, a.n_params);
  };
  const double step = 1.0 / static_cast<double>(grid_points + 1);
  int best_i = 1;
  double best = loss_at(step);
  for (int i = 2; i <= grid_points; ++i) {
    const double v = loss_at(step * i);
    if (v < best) {
      best = v;
      best_i = i;
    }
  }
  const double lo = step * std::max(best_i - 1, 1);
  const double hi = step * std::min(best_i + 1, grid_points);
  double gamma = step * best_i;
  const auto [g_refined, v_refined] = golden_section_minimize(loss_at, lo, hi);
  if (v_refined < best) {
    gamma = g_refined;
    best = v_refined;
  }

  AllocationResult r;
  const auto a = allocation_from_gamma(gamma, b);
  r.gamma = gamma;
  r.n_hat = a.n_params;
  r.d_hat = a.dim;
  r.predicted_entropy = best;
  r.enc_flops = flops_encode(a.n_params, b.query_tokens);
  r.score_flops = flops_score(b.corpus_size, a.dim, b.regime);

  r.d_hat_rounded = static_cast<long long>(std::max(kDimRoundingStep, kDimRoundingStep * std::round(a.dim / kDimRoundingStep)));
  r.n_hat_rounded = std::max(kParamRoundingStep, kParamRoundingStep * std::round(a.n_params / kParamRoundingStep));
  r.predicted_entropy_rounded = predict_joint(fit, static_cast<double>(r.d_hat_rounded), r.n_hat_rounded);
  r.rounded_flops = flops_encode(r.n_hat_rounded, b.query_tokens) +
                    flops_score(b.corpus_size, static_cast<double>(r.d_hat_rounded), b.regime);
  r.rounding_overshoot = std::max(0.0, r.rounded_flops - b.total_flops);
  r.rounding_slack = flops_encode(kParamRoundingStep, b.query_tokens) + flops_score(b.corpus_size, kDimRoundingStep, b.regime);
  return r;
}

struct CurvePoint {
  double dim = 0.0;
  double n_params = 0.0;
  double predicted_entropy = 0.0;
};

struct BudgetCurve {
  std::vector<CurvePoint> points;
  std::vector<double> omitted_dims;  // scoring alone exhausts the budget
};

/// For each dimension, spends what scoring leaves on the largest model that
/// fits: N = (B - C_score) / (2 T).
inline BudgetCurve budget_curve(const JointLawFit& fit, const BudgetSpec& b, std::span<const double> dims) {
  b.validate();
  BudgetCurve curve;
  for (double d : dims) {
    const double score = flops_score(b.corpus_size, d, b.regime);
    if (score >= b.total_flops) {
      curve.omitted_dims.push_back(d);
      continue;
    }
    const double n = (b.total_flops - score) / (2.0 * b.query_tokens);
    curve.points.push_back({d, n, predict_joint(fit, d, n)});
  }
  if (curve.points.empty()) throw ConfigError("every dimension exceeds the budget on scoring alone");
  return curve;
}

}  // namespace dimscale
