// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/cli_run.hpp"
#include "../unit/test_util.hpp"
#include "dimscale/io.hpp"
#include "dimscale/metrics.hpp"
#include "dimscale/plan.hpp"
#include "dimscale/scaling_law.hpp"

using namespace dimscale;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
  void within_rel(double got, double want, double tol, const std::string& name) {
    detail << " " << name << "=" << got;
    expect(std::abs(got - want) <= tol * std::abs(want), name + " not within " + std::to_string(tol * 100) + "% of " + std::to_string(want));
  }
  void within_abs(double got, double want, double tol, const std::string& name) {
    detail << " " << name << "=" << got;
    expect(std::abs(got - want) <= tol, name + " not within " + std::to_string(tol) + " of " + std::to_string(want));
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const JointLawFit kBertTrec{85.543, 2.588, 1.316, 0.961, 0.295, {}};

// 1, 2 -------------------------------------------------------------------

DimLawFit small_bert_fit(double* elapsed) {
  const auto table = filter_by(testing::load_observations(), std::string("BERT-L8-H512-A8"), "msmarco");
  const auto t0 = std::chrono::steady_clock::now();
  auto fit = fit_dim_law(table);
  if (elapsed) *elapsed = seconds_since(t0);
  return fit;
}

Check criterion1() {
  Check c;
  double elapsed = 0;
  const auto fit = small_bert_fit(&elapsed);
  c.within_rel(fit.a_coeff, 55.21, 0.10, "A");
  c.within_rel(fit.alpha, 1.76, 0.05, "alpha");
  c.within_abs(fit.delta, 0.024, 0.005, "delta");
  c.detail << " R2=" << fit.diag.r2 << " time=" << elapsed << "s";
  c.expect(fit.diag.r2 >= 0.999, "R2 >= 0.999");
  c.expect(elapsed < 1.0, "runtime < 1 s");
  return c;
}

Check criterion2() {
  Check c;
  const auto fit = small_bert_fit(nullptr);
  c.within_rel(fit.scale_form_coeff(), 9.76707, 0.02, "A^(1/alpha)");
  return c;
}

// 3, 4 -------------------------------------------------------------------

Check joint_row(const std::string& family, std::size_t models, double a, double b, double alpha, double beta,
                double delta, double r2, double r2_tol) {
  Check c;
  const auto table = testing::family_table(testing::load_observations(), family, "msmarco");
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = fit_joint_law(table);
  const double elapsed = seconds_since(t0);
  c.detail << " points=" << table.size() << " models=" << table.models().size();
  c.expect(table.models().size() == models, "model count");
  c.within_rel(fit.a_coeff, a, 0.05, "A");
  c.within_rel(fit.b_coeff, b, 0.05, "B");
  c.within_rel(fit.alpha, alpha, 0.05, "alpha");
  c.within_rel(fit.beta, beta, 0.05, "beta");
  c.within_abs(fit.delta, delta, 0.005, "delta");
  c.within_abs(fit.diag.r2, r2, r2_tol, "R2");
  c.detail << " time=" << elapsed << "s";
  c.expect(elapsed < 5.0, "runtime < 5 s");
  return c;
}

Check criterion3() { return joint_row("BERT", 7, 114.887, 0.800, 1.887, 1.247, 0.013, 0.975, 0.01); }
Check criterion4() { return joint_row("Ettin", 6, 3.135, 1.266, 1.015, 0.805, 0.017, 0.997, 0.005); }

// 5 ----------------------------------------------------------------------

Check criterion5() {
  Check c;
  const auto plan = [](double budget, double corpus) {
    return optimal_allocation(kBertTrec, BudgetSpec{budget, 32.0, corpus, ScoringRegime::exhaustive});
  };
  const auto a = plan(1e9, 1e7);
  c.detail << " [B=1e9 M=1e7] D=" << a.d_hat_rounded << " N=" << a.n_hat;
  c.expect(a.d_hat_rounded >= 24 && a.d_hat_rounded <= 48, "D in [24, 48]");
  c.expect(a.n_hat >= 4e6 && a.n_hat <= 7e6, "N in [4e6, 7e6]");

  const auto b = plan(1e9, 1e5);
  c.detail << " [B=1e9 M=1e5] D=" << b.d_hat_rounded << " N=" << b.n_hat;
  c.expect(b.d_hat_rounded >= 416 && b.d_hat_rounded <= 624, "D in [416, 624]");
  c.expect(b.n_hat >= 11e6 && b.n_hat <= 17e6, "N in [11e6, 17e6]");

  const auto big = plan(3.162e10, 1e5);
  c.detail << " [B=3.162e10 M=1e5]";
  c.within_rel(static_cast<double>(big.d_hat_rounded), 13792.0, 0.10, "D");
  c.within_rel(big.n_hat, 451e6, 0.10, "N");
  return c;
}

// 6 ----------------------------------------------------------------------

Check criterion6() {
  Check c;
  const auto dims = log_spaced(32.0, 16384.0, 200);
  const auto argmin = [](const BudgetCurve& curve) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < curve.points.size(); ++i)
      if (curve.points[i].predicted_entropy < curve.points[arg].predicted_entropy) arg = i;
    return arg;
  };
  for (double budget : {3.162e9, 1e10, 3.162e10, 1e11}) {
    const auto ex = budget_curve(kBertTrec, BudgetSpec{budget, 32.0, 1e7, ScoringRegime::exhaustive}, dims);
    const auto ann = budget_curve(kBertTrec, BudgetSpec{budget, 32.0, 1e7, ScoringRegime::ann}, dims);
    const auto i = argmin(ex);
    bool unimodal = i > 0 && i + 1 < ex.points.size();
    for (std::size_t k = 1; k < ex.points.size(); ++k) {
      const bool down = ex.points[k].predicted_entropy < ex.points[k - 1].predicted_entropy;
      if ((k <= i) != down) unimodal = false;
    }
    const double d_ex = ex.points[i].dim;
    const double d_ann = ann.points[argmin(ann)].dim;
    c.detail << " [B=" << budget << " D*_exh=" << std::lround(d_ex) << " D*_ann=" << std::lround(d_ann) << "]";
    c.expect(unimodal, "exhaustive curve unimodal with interior minimizer at B=" + std::to_string(budget));
    c.expect(d_ann > d_ex, "ANN minimizer exceeds exhaustive at B=" + std::to_string(budget));
  }
  return c;
}

// 7 ----------------------------------------------------------------------

Check criterion7() {
  Check c;
  std::mt19937_64 gen(20240607);
  std::uniform_real_distribution<double> score(-5.0, 5.0), shift(-50.0, 50.0), tau(0.01, 2.0);
  std::uniform_int_distribution<int> count(1, 64);
  const auto draw = [&](int n) {
    std::vector<double> v(n);
    for (auto& x : v) x = score(gen);
    return v;
  };
  double worst_shift = 0, worst_closed = 0;
  int temp_mismatch = 0, non_monotone = 0;
  for (int t = 0; t < 1000; ++t) {
    const double pos = score(gen);
    const auto negs = draw(count(gen));
    const double s = shift(gen);
    std::vector<double> shifted(negs);
    for (auto& x : shifted) x += s;
    worst_shift = std::max(worst_shift, std::abs(contrastive_entropy_single(pos + s, shifted) -
                                                 contrastive_entropy_single(pos, negs)));
  }
  for (int t = 0; t < 1000; ++t) {
    const double pos = score(gen), tt = tau(gen);
    const auto negs = draw(count(gen));
    std::vector<double> scaled(negs);
    for (auto& x : scaled) x /= tt;
    if (contrastive_entropy_single(pos, negs, tt) != contrastive_entropy_single(pos / tt, scaled)) ++temp_mismatch;
  }
  for (int t = 0; t < 1000; ++t) {
    const double pos = score(gen);
    auto negs = draw(count(gen));
    const double before = contrastive_entropy_single(pos, negs);
    negs.push_back(score(gen));
    if (!(contrastive_entropy_single(pos, negs) > before)) ++non_monotone;
  }
  for (int t = 0; t < 1000; ++t) {
    const double v = score(gen);
    const int k = count(gen);
    const std::vector<double> negs(k, v);
    worst_closed = std::max(worst_closed, std::abs(contrastive_entropy_single(v, negs) - std::log(k + 1.0)));
  }
  c.detail << " shift_drift=" << worst_shift << " temp_mismatches=" << temp_mismatch
           << " non_monotone=" << non_monotone << " closed_form_err=" << worst_closed;
  c.expect(worst_shift <= 1e-12, "shift invariance");
  c.expect(temp_mismatch == 0, "temperature equivalence");
  c.expect(non_monotone == 0, "monotonicity");
  c.expect(worst_closed <= 1e-9, "ln(k+1) closed form");
  return c;
}

// 8 ----------------------------------------------------------------------

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

Check criterion8() {
  Check c;
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> score(-2.0, 2.0), tau(0.5, 2.0);
  std::uniform_int_distribution<int> count(1, 16);
  const double h = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double pos = score(gen), tt = tau(gen);
    std::vector<double> negs(count(gen));
    for (auto& x : negs) x = score(gen);
    const auto g = contrastive_loss_gradient(pos, negs, tt);
    const double fd_pos = (contrastive_loss(pos + h, negs, tt) - contrastive_loss(pos - h, negs, tt)) / (2 * h);
    worst = std::max(worst, rel_err(g.d_positive, fd_pos));
    for (std::size_t j = 0; j < negs.size(); ++j) {
      auto up = negs, dn = negs;
      up[j] += h;
      dn[j] -= h;
      worst = std::max(worst, rel_err(g.d_negatives[j], (contrastive_loss(pos, up, tt) - contrastive_loss(pos, dn, tt)) / (2 * h)));
    }
    const TeacherMargin teacher{score(gen) * 4, score(gen) * 4};
    const double sp = score(gen), sn = score(gen);
    const auto mg = margin_mse_gradient(sp, sn, teacher);
    worst = std::max(worst, rel_err(mg.d_student_pos, (margin_mse(sp + h, sn, teacher) - margin_mse(sp - h, sn, teacher)) / (2 * h)));
    worst = std::max(worst, rel_err(mg.d_student_neg, (margin_mse(sp, sn + h, teacher) - margin_mse(sp, sn - h, teacher)) / (2 * h)));
  }
  c.detail << " worst_rel_err=" << worst;
  c.expect(worst < 1e-4, "relative error < 1e-4");
  return c;
}

// 9 ----------------------------------------------------------------------

/// Brute force over a log grid in (A, alpha); delta has a closed-form optimum
/// (clamped at zero) for each cell. The best cell is polished by pattern search.
double grid_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const auto resid = [&](double a, double alpha) {
    double gap = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) gap += y[k] - a * std::pow(x[k], -alpha);
    const double delta = std::max(0.0, gap / static_cast<double>(x.size()));
    double ss = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double r = a * std::pow(x[k], -alpha) + delta - y[k];
      ss += r * r;
    }
    return std::sqrt(ss);
  };
  const int n = 400;
  double best = INFINITY, la = 0, lal = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double a = std::log(1e-1) + (std::log(1e6) - std::log(1e-1)) * i / (n - 1);
      const double al = std::log(0.05) + (std::log(5.0) - std::log(0.05)) * j / (n - 1);
      const double r = resid(std::exp(a), std::exp(al));
      if (r < best) best = r, la = a, lal = al;
    }
  double step = 0.05;
  while (step > 1e-13) {
    bool moved = false;
    for (auto [da, dal] : {std::pair{step, 0.0}, {-step, 0.0}, {0.0, step}, {0.0, -step}, {step, step}, {-step, -step}}) {
      const double r = resid(std::exp(la + da), std::exp(lal + dal));
      if (r < best) best = r, la += da, lal += dal, moved = true;
    }
    if (!moved) step *= 0.5;
  }
  return best;
}

Check criterion9() {
  Check c;
  const std::vector<double> x{32, 64, 128, 256, 512, 768, 1024};
  std::mt19937_64 gen(9);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> y;
  for (double d : x) y.push_back((60.0 * std::pow(d, -1.7) + 0.03) * (1.0 + noise(gen)));
  const auto ls = least_squares(DimLawModel{}, std::span<const double>(x), std::span<const double>(y));
  const double oracle = grid_oracle(x, y);
  c.detail << " engine=" << ls.residual_norm << " oracle=" << oracle;
  c.expect(ls.residual_norm <= oracle * (1.0 + 1e-6), "engine residual <= oracle * (1 + 1e-6)");
  return c;
}

// 10 ---------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> run_pipeline(const std::string& root, bool& ok) {
  const std::string obs = testing::data_path("observations.csv");
  const std::string table2 = testing::data_path("bert_trec_joint_fit.json");
  const std::vector<std::pair<std::string, std::string>> steps{
      {"dim", "fit " + obs + " --law dim --model BERT-L8-H512-A8 --dataset msmarco --seed 7"},
      {"bert", "fit " + obs + " --law joint --family BERT --dataset msmarco --seed 7"},
      {"ettin", "fit " + obs + " --law joint --family Ettin --dataset msmarco --seed 7"},
      {"plan", "plan " + table2 + " --budget 1e9 3.162e10 --corpus 1e7 1e5 --curve 32 64 128 256 512 1024 --seed 7"},
  };
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& [sub, args] : steps) {
    const auto dir = root + "/" + sub;
    if (testing::run_cli(args + " --output-dir " + dir).code != 0) ok = false;
    std::vector<fs::path> paths;
    if (fs::exists(dir))
      for (const auto& e : fs::directory_iterator(dir)) paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) files.emplace_back(sub + "/" + p.filename().string(), read_file(p));
  }
  return files;
}

Check criterion10() {
  Check c;
  bool ok = true;
  const auto a = run_pipeline(testing::fresh_dir("dimscale_accept_run_a"), ok);
  const auto b = run_pipeline(testing::fresh_dir("dimscale_accept_run_b"), ok);
  c.expect(ok, "every CLI run exits 0");
  c.expect(!a.empty() && a.size() == b.size(), "same file set");
  std::size_t same = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (a[i] == b[i]) ++same;
    else c.expect(false, a[i].first + " differs");
  c.detail << " files=" << a.size() << " identical=" << same;
  return c;
}

}  // namespace

int main() {
  const std::vector<std::function<Check()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                     criterion6, criterion7, criterion8, criterion9, criterion10};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i]();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << " exception: " << e.what();
    }
    if (!c.ok) ++failures;
    std::printf("%s criterion %zu:%s\n", c.ok ? "PASS" : "FAIL", i + 1, c.detail.str().c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
