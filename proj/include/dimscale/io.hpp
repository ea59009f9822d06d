#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dimscale/core.hpp"
#include "dimscale/embed.hpp"
#include "dimscale/error.hpp"
#include "dimscale/metrics.hpp"
#include "dimscale/plan.hpp"
#include "dimscale/scaling_law.hpp"

namespace dimscale {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a sibling temp file and a rename, so readers never see a
/// half-written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::data, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error(ErrorKind::data, "write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

/// FNV-1a 64-bit, rendered as 16 lowercase hex digits.
inline std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Run manifest

struct ManifestInput {
  std::string path;
  std::string fnv1a64;
};

struct RunManifest {
  std::string command;
  std::vector<ManifestInput> inputs;
  Json options = Json::object();
  std::uint64_t seed = 0;

  void add_input(const std::string& path, std::string_view content) { inputs.push_back({path, fnv1a64_hex(content)}); }

  Json to_json() const {
    Json j;
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    j["inputs"] = Json::array();
    for (const auto& in : inputs) j["inputs"].push_back({{"path", in.path}, {"fnv1a64", in.fnv1a64}});
    j["options"] = options;
    j["seed"] = seed;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Query score records (JSONL)

inline QueryScoreRecord record_from_json(const Json& j) {
  QueryScoreRecord r;
  r.query_id = j.at("query_id").get<std::string>();
  r.positives = j.at("positives").get<std::vector<double>>();
  r.negatives = j.at("negatives").get<std::vector<double>>();
  return r;
}

inline Json record_to_json(const QueryScoreRecord& r) {
  return {{"query_id", r.query_id}, {"positives", r.positives}, {"negatives", r.negatives}};
}

/// One `{"query_id", "positives", "negatives"}` object per line. Blank lines
/// are skipped.
inline std::vector<QueryScoreRecord> parse_score_records(std::istream& in) {
  std::vector<QueryScoreRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      auto rec = record_from_json(Json::parse(line));
      if (rec.positives.empty()) throw ParseError(lineno, "record has no positives");
      out.push_back(std::move(rec));
    } catch (const Json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (out.empty()) throw ValidationError("no query records");
  return out;
}

inline std::vector<QueryScoreRecord> parse_score_records(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_score_records(in);
}

inline std::string serialize_score_records(std::span<const QueryScoreRecord> records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Embedding matrix text files: `id v1 v2 ... vd` per line

struct MatrixManifest {
  std::size_t rows = 0;
  std::size_t dim = 0;
};

inline MatrixManifest parse_matrix_manifest(std::string_view text) {
  try {
    const auto j = Json::parse(text);
    return {j.at("rows").get<std::size_t>(), j.at("dim").get<std::size_t>()};
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("bad matrix manifest: ") + e.what());
  }
}

inline EmbeddingMatrix parse_matrix(std::istream& in, const std::optional<MatrixManifest>& manifest = std::nullopt) {
  std::vector<std::string> ids;
  std::vector<double> data;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    std::istringstream fields{std::string(text)};
    std::string id, tok;
    fields >> id;
    std::size_t n = 0;
    while (fields >> tok) {
      const auto v = detail::parse_double(tok);
      if (!v) throw ParseError(lineno, "bad value '" + tok + "'");
      data.push_back(*v);
      ++n;
    }
    if (n == 0) throw ParseError(lineno, "row '" + id + "' has no values");
    if (dim == 0) dim = n;
    if (n != dim) throw ParseError(lineno, "row has " + std::to_string(n) + " values, expected " + std::to_string(dim));
    ids.push_back(std::move(id));
  }
  if (ids.empty()) throw ValidationError("matrix file has no rows");
  if (manifest && (manifest->rows != ids.size() || manifest->dim != dim))
    throw ShapeError("matrix is " + std::to_string(ids.size()) + "x" + std::to_string(dim) + " but manifest says " +
                     std::to_string(manifest->rows) + "x" + std::to_string(manifest->dim));
  const auto rows = ids.size();
  return EmbeddingMatrix(rows, dim, std::move(data), std::move(ids));
}

inline EmbeddingMatrix parse_matrix(std::string_view text, const std::optional<MatrixManifest>& manifest = std::nullopt) {
  std::istringstream in{std::string(text)};
  return parse_matrix(in, manifest);
}

// ---------------------------------------------------------------------------
// Plot data

/// Two whitespace-separated columns, shortest round-trip decimals, with
/// leading `#` comment lines.
inline std::string format_dat(std::span<const std::pair<double, double>> xy, std::span<const std::string> comments = {}) {
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  for (const auto& [x, y] : xy) out += detail::format_double(x) + " " + detail::format_double(y) + "\n";
  return out;
}

/// `n` dimensions log-spaced over [lo, hi], endpoints exact.
inline std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  std::vector<double> out;
  if (n == 1) return {lo};
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) out.push_back(lo);
    else if (i + 1 == n) out.push_back(hi);
    else out.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(i) / static_cast<double>(n - 1)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fit reports

inline Json options_to_json(const FitOptions& o) {
  return {{"max_iters", o.max_iters},
          {"gradient_tolerance", o.gradient_tolerance},
          {"relative_tolerance", o.relative_tolerance},
          {"multistart_grid", o.multistart_grid.empty() ? Json("default") : Json(o.multistart_grid)},
          {"seed", o.seed}};
}

inline Json diagnostics_to_json(const FitDiagnostics& d) {
  return {{"r2", d.r2},
          {"residual_norm", d.residual_norm},
          {"n_points", d.n_points},
          {"status", to_string(d.status)},
          {"iterations", d.iterations},
          {"multistart_index", d.start_index},
          {"multistart_count", d.n_starts},
          {"warnings", d.warnings}};
}

inline Json fit_to_json(const DimLawFit& f) {
  Json j;
  j["law"] = "dim";
  j["parameters"] = {{"A", f.a_coeff}, {"alpha", f.alpha}, {"delta", f.delta}};
  j["diagnostics"] = diagnostics_to_json(f.diag);
  return j;
}

inline Json fit_to_json(const JointLawFit& f) {
  Json j;
  j["law"] = "joint";
  j["parameters"] = {{"A", f.a_coeff},    {"B", f.b_coeff}, {"alpha", f.alpha}, {"beta", f.beta},
                     {"delta", f.delta}, {"param_unit", JointLawFit::kParamUnit}};
  j["diagnostics"] = diagnostics_to_json(f.diag);
  return j;
}

/// A fitted law read back from a report.
struct LoadedFit {
  std::optional<DimLawFit> dim;
  std::optional<JointLawFit> joint;
};

inline LoadedFit fit_from_json(const Json& j) {
  try {
    const auto law = j.at("law").get<std::string>();
    const auto& p = j.at("parameters");
    LoadedFit out;
    if (law == "dim") {
      DimLawFit f;
      f.a_coeff = p.at("A").get<double>();
      f.alpha = p.at("alpha").get<double>();
      f.delta = p.at("delta").get<double>();
      out.dim = f;
    } else if (law == "joint") {
      if (p.contains("param_unit") && p.at("param_unit").get<std::string>() != JointLawFit::kParamUnit)
        throw ValidationError("joint fit must use param_unit 'millions'");
      JointLawFit f;
      f.a_coeff = p.at("A").get<double>();
      f.b_coeff = p.at("B").get<double>();
      f.alpha = p.at("alpha").get<double>();
      f.beta = p.at("beta").get<double>();
      f.delta = p.at("delta").get<double>();
      out.joint = f;
    } else {
      throw ValidationError("unknown law '" + law + "'");
    }
    return out;
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("bad fit report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Plan reports

inline Json allocation_to_json(const AllocationResult& r) {
  return {{"gamma", r.gamma},
          {"n_hat", r.n_hat},
          {"d_hat", r.d_hat},
          {"predicted_entropy", r.predicted_entropy},
          {"enc_flops", r.enc_flops},
          {"score_flops", r.score_flops},
          {"d_hat_rounded", r.d_hat_rounded},
          {"n_hat_rounded", r.n_hat_rounded},
          {"predicted_entropy_rounded", r.predicted_entropy_rounded},
          {"rounded_flops", r.rounded_flops},
          {"rounding_overshoot", r.rounding_overshoot},
          {"rounding_slack", r.rounding_slack}};
}

}  // namespace dimscale
