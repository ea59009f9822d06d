// dimscale: fit embedding-dimension scaling laws, evaluate contrastive
// entropy, and plan FLOPs-budgeted (model size, dimension) allocations.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dimscale/core.hpp"
#include "dimscale/error.hpp"
#include "dimscale/io.hpp"
#include "dimscale/metrics.hpp"
#include "dimscale/plan.hpp"
#include "dimscale/scaling_law.hpp"

namespace fs = std::filesystem;
using namespace dimscale;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

/// Everything a command produces, written only after the command succeeds.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  void commit() const {
    if (files_.empty()) return;
    fs::create_directories(dir_);
    for (const auto& [name, content] : files_) write_file_atomic(dir_ / name, content);
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Per-record seed so sampling does not depend on record count or order of
/// evaluation.
std::uint64_t record_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1));
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string scores;
  std::optional<double> tau;
  std::uint64_t seed = 0;
  std::optional<std::size_t> negatives;
  std::string output_dir = ".";
};

int run_eval_ce(const EvalArgs& a) {
  const auto text = read_file(a.scores);
  auto records = parse_score_records(text);

  EvalConfig cfg;
  cfg.temperature = a.tau;
  cfg.rng_seed = a.seed;
  if (a.negatives) {
    cfg.n_negatives = *a.negatives;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto& r = records[i];
      std::vector<std::string> ids;
      for (std::size_t j = 0; j < r.negatives.size(); ++j) ids.push_back(std::to_string(j));
      const auto picked = sample_negatives(ids, {}, cfg.n_negatives, record_seed(a.seed, i));
      std::vector<double> sub;
      for (const auto& id : picked) sub.push_back(r.negatives[std::stoul(id)]);
      r.negatives = std::move(sub);
    }
  }

  Json per_query = Json::array();
  for (const auto& r : records) {
    per_query.push_back({{"query_id", r.query_id},
                         {"contrastive_entropy", contrastive_entropy_query(r, cfg)},
                         {"n_positives", r.positives.size()},
                         {"n_negatives", r.negatives.size()}});
  }
  const double dataset = contrastive_entropy_dataset(records, cfg);

  RunManifest m;
  m.command = "eval-ce";
  m.add_input(a.scores, text);
  m.options = {{"tau", a.tau ? Json(*a.tau) : Json(nullptr)},
               {"negatives", a.negatives ? Json(*a.negatives) : Json(nullptr)},
               {"sampler", Rng::kName}};
  m.seed = a.seed;

  Json report;
  report["kind"] = "eval_ce_report";
  report["contrastive_entropy"] = dataset;
  report["n_queries"] = records.size();
  report["per_query"] = per_query;
  report["manifest"] = m.to_json();

  OutputSet out(a.output_dir);
  out.add("eval_ce_report.json", dump(report));
  out.commit();
  std::cout << "contrastive_entropy " << fixed6(dataset) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string observations;
  std::string law = "dim";
  std::optional<std::string> model;
  std::optional<std::string> family;
  std::string dataset;
  int max_iters = 500;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
};

constexpr std::size_t kCurveSamples = 100;

int run_fit(const FitArgs& a) {
  const auto text = read_file(a.observations);
  const auto all = parse_observations(text);
  auto table = filter_by(all, a.model, a.dataset);
  if (a.family) {
    ObservationTable kept;
    kept.provenance = table.provenance;
    for (const auto& r : table.rows)
      if (r.model_name.rfind(*a.family, 0) == 0) kept.rows.push_back(r);
    if (kept.empty()) throw EmptySelectionError("no models with prefix '" + *a.family + "'");
    table = std::move(kept);
  }

  FitOptions opts;
  opts.max_iters = a.max_iters;
  opts.seed = a.seed;

  RunManifest m;
  m.command = "fit";
  m.add_input(a.observations, text);
  m.options = {{"law", a.law},
               {"model", a.model ? Json(*a.model) : Json(nullptr)},
               {"family", a.family ? Json(*a.family) : Json(nullptr)},
               {"dataset", a.dataset},
               {"fit_options", options_to_json(opts)}};
  m.seed = a.seed;

  double d_lo = static_cast<double>(table.rows.front().embed_dim);
  double d_hi = d_lo;
  for (const auto& r : table.rows) {
    d_lo = std::min(d_lo, static_cast<double>(r.embed_dim));
    d_hi = std::max(d_hi, static_cast<double>(r.embed_dim));
  }
  const auto dims = log_spaced(d_lo, d_hi, kCurveSamples);
  const std::vector<std::string> dat_header{"x = embedding dimension, y = predicted contrastive entropy",
                                            "manifest: fit_report.json"};

  OutputSet out(a.output_dir);
  Json report;
  report["kind"] = "fit_report";
  Json curves = Json::array();

  if (a.law == "dim") {
    const auto fit = fit_dim_law(table, opts);
    const auto body = fit_to_json(fit);
    report.update(body);
    report["parameters"]["A_scale_form"] = fit.scale_form_coeff();
    std::vector<std::pair<double, double>> xy;
    for (double d : dims) xy.emplace_back(d, predict_dim(fit, d));
    out.add("curve.dat", format_dat(xy, dat_header));
    curves.push_back({{"file", "curve.dat"}, {"model", table.rows.front().model_name}});
  } else if (a.law == "joint") {
    const auto fit = fit_joint_law(table, opts);
    report.update(fit_to_json(fit));
    std::map<std::string, double> sizes;
    for (const auto& r : table.rows) sizes.emplace(r.model_name, r.n_params);
    for (const auto& name : table.models()) {
      std::vector<std::pair<double, double>> xy;
      for (double d : dims) xy.emplace_back(d, predict_joint(fit, d, sizes.at(name)));
      const std::string file = "curve_" + name + ".dat";
      out.add(file, format_dat(xy, dat_header));
      curves.push_back({{"file", file}, {"model", name}, {"n_params", sizes.at(name)}});
    }
  } else {
    throw ConfigError("--law must be 'dim' or 'joint'");
  }
  report["selection"] = {{"models", table.models()}, {"dataset", a.dataset}, {"n_points", table.size()}};
  report["curves"] = curves;
  report["manifest"] = m.to_json();
  out.add("fit_report.json", dump(report));
  out.commit();

  const auto& p = report["parameters"];
  std::cout << "law " << a.law << " r2 " << detail::format_double(report["diagnostics"]["r2"].get<double>()) << "\n";
  for (const auto& [k, v] : p.items())
    if (v.is_number()) std::cout << k << " " << detail::format_double(v.get<double>()) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string report;
  double dim = 0.0;
  std::optional<double> params;
};

int run_predict(const PredictArgs& a) {
  const auto fit = fit_from_json(Json::parse(read_file(a.report)));
  double value = 0.0;
  if (fit.dim) {
    value = predict_dim(*fit.dim, a.dim);
  } else {
    if (!a.params) throw ConfigError("--params is required for a joint-law report");
    value = predict_joint(*fit.joint, a.dim, *a.params);
  }
  std::cout << detail::format_double(value) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string report;
  std::vector<double> budgets;
  double tokens = 32;
  std::vector<double> corpus;
  std::string regime = "exhaustive";
  int grid_points = kDefaultGammaGrid;
  std::vector<double> curve_dims;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
};

int run_plan(const PlanArgs& a) {
  const auto text = read_file(a.report);
  const auto loaded = fit_from_json(Json::parse(text));
  if (!loaded.joint) throw ConfigError("planning needs a joint-law fit report");
  const auto& fit = *loaded.joint;
  const auto regime = parse_regime(a.regime);

  RunManifest m;
  m.command = "plan";
  m.add_input(a.report, text);
  m.options = {{"budgets", a.budgets},         {"tokens", a.tokens},
               {"corpus", a.corpus},           {"regime", a.regime},
               {"grid_points", a.grid_points}, {"curve_dims", a.curve_dims},
               {"log_base", "natural"}};
  m.seed = a.seed;

  OutputSet out(a.output_dir);
  Json allocations = Json::array();
  Json curves = Json::array();
  for (double corpus : a.corpus) {
    for (double budget : a.budgets) {
      const BudgetSpec spec{budget, a.tokens, corpus, regime};
      const auto r = optimal_allocation(fit, spec, a.grid_points);
      Json entry = {{"budget", budget}, {"tokens", a.tokens}, {"corpus", corpus}, {"regime", a.regime}};
      entry.update(allocation_to_json(r));
      allocations.push_back(entry);

      if (!a.curve_dims.empty()) {
        const auto curve = budget_curve(fit, spec, a.curve_dims);
        std::vector<std::pair<double, double>> xy;
        for (const auto& p : curve.points) xy.emplace_back(p.dim, p.predicted_entropy);
        const std::string file =
            "curve_B" + detail::format_double(budget) + "_M" + detail::format_double(corpus) + ".dat";
        const std::vector<std::string> header{"x = embedding dimension, y = predicted contrastive entropy",
                                              "budget " + detail::format_double(budget) + " corpus " +
                                                  detail::format_double(corpus) + " regime " + a.regime,
                                              "manifest: plan_report.json"};
        out.add(file, format_dat(xy, header));
        curves.push_back({{"file", file}, {"budget", budget}, {"corpus", corpus}, {"omitted_dims", curve.omitted_dims}});
      }
      std::cout << "B " << detail::format_double(budget) << " M " << detail::format_double(corpus) << " gamma "
                << detail::format_double(r.gamma) << " D " << r.d_hat_rounded << " N "
                << detail::format_double(r.n_hat_rounded) << " L " << detail::format_double(r.predicted_entropy)
                << "\n";
    }
  }
  Json report;
  report["kind"] = "plan_report";
  report["fit"] = fit_to_json(fit)["parameters"];
  report["allocations"] = allocations;
  report["curves"] = curves;
  report["manifest"] = m.to_json();
  out.add("plan_report.json", dump(report));
  out.commit();
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_sweep_dims(std::int64_t hidden, const std::string& multipliers) {
  SweepConfig cfg;
  cfg.base_hidden = hidden;
  for (auto tok : detail::split(multipliers, ','))
    if (!detail::trim(tok).empty()) cfg.multipliers.push_back(Rational::parse(tok));
  const auto dims = expand_sweep(cfg);
  for (std::size_t i = 0; i < dims.size(); ++i) std::cout << (i ? " " : "") << dims[i];
  std::cout << "\n";
  return kExitOk;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return kExitUsage;
    case ErrorKind::data: return kExitData;
    case ErrorKind::numeric: return kExitNumeric;
  }
  return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-dimension scaling laws: evaluate, fit, predict, plan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval-ce", "Contrastive entropy of a JSONL score file");
  eval_cmd->add_option("scores", eval.scores, "JSONL query score records")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tau", eval.tau, "Temperature; scores are divided by it")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval.seed, "Seed for negative subsampling");
  eval_cmd->add_option("--negatives", eval.negatives, "Subsample each query's negatives to this many")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--output-dir", eval.output_dir, "Directory for the report");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the dimension-only or joint scaling law");
  fit_cmd->add_option("observations", fit.observations, "Observation CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--law", fit.law, "dim or joint")->check(CLI::IsMember({"dim", "joint"}));
  fit_cmd->add_option("--model", fit.model, "Restrict to one model");
  fit_cmd->add_option("--family", fit.family, "Restrict to models whose name starts with this prefix");
  fit_cmd->add_option("--dataset", fit.dataset, "Dataset tag")->required();
  fit_cmd->add_option("--max-iters", fit.max_iters, "Iteration cap per multistart run")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.seed, "Recorded in the manifest");
  fit_cmd->add_option("--output-dir", fit.output_dir, "Directory for the report and curve files");

  PredictArgs pred;
  auto* pred_cmd = app.add_subcommand("predict", "Evaluate a fitted law");
  pred_cmd->add_option("report", pred.report, "fit_report.json")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--dim", pred.dim, "Embedding dimension")->required();
  pred_cmd->add_option("--params", pred.params, "Model parameters (raw count), joint law only");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Optimal (N, D) under a per-query FLOPs budget");
  plan_cmd->add_option("report", plan.report, "Joint-law fit_report.json")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--budget", plan.budgets, "FLOPs budget(s) per query")->required();
  plan_cmd->add_option("--tokens", plan.tokens, "Query length T")->check(CLI::Range(1.0, 1e12));
  plan_cmd->add_option("--corpus", plan.corpus, "Corpus size(s) M")->required();
  plan_cmd->add_option("--regime", plan.regime, "exhaustive or ann")->check(CLI::IsMember({"exhaustive", "ann"}));
  plan_cmd->add_option("--grid-points", plan.grid_points, "Gamma grid size");
  plan_cmd->add_option("--curve", plan.curve_dims, "Dimensions for the budget curve file(s)");
  plan_cmd->add_option("--seed", plan.seed, "Recorded in the manifest");
  plan_cmd->add_option("--output-dir", plan.output_dir, "Directory for the report and curve files");

  std::int64_t hidden = 0;
  std::string multipliers;
  auto* sweep_cmd = app.add_subcommand("sweep-dims", "Embedding dimensions for a hidden size and multipliers");
  sweep_cmd->add_option("--hidden", hidden, "Native hidden size")->required();
  sweep_cmd->add_option("--multipliers", multipliers, "Comma-separated, e.g. 1/4,1/2,1,2")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*eval_cmd) return run_eval_ce(eval);
    if (*fit_cmd) return run_fit(fit);
    if (*pred_cmd) return run_predict(pred);
    if (*plan_cmd) return run_plan(plan);
    if (*sweep_cmd) return run_sweep_dims(hidden, multipliers);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
