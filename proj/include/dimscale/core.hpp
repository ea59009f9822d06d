#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "dimscale/error.hpp"

namespace dimscale {

/// One measured point: a model at one embedding dimension on one dataset.
/// `n_params` is in raw parameters; conversion to millions happens inside the
/// joint-law fitter only.
struct Observation {
  std::string model_name;
  double n_params = 0.0;
  std::int64_t embed_dim = 0;
  std::string dataset;
  double entropy = 0.0;  // nats

  auto key() const { return std::tie(model_name, embed_dim, dataset); }
  bool operator==(const Observation&) const = default;
};

struct ObservationTable {
  std::vector<Observation> rows;
  std::string provenance;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }

  std::vector<std::string> models() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (std::find(out.begin(), out.end(), r.model_name) == out.end()) out.push_back(r.model_name);
    return out;
  }
  std::vector<std::string> datasets() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (std::find(out.begin(), out.end(), r.dataset) == out.end()) out.push_back(r.dataset);
    return out;
  }
};

inline constexpr std::string_view kObservationHeader = "model_name,n_params,embed_dim,dataset,entropy";

namespace detail {

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Checks row invariants and key uniqueness. Throws ValidationError.
inline void validate(const ObservationTable& table) {
  if (table.empty()) throw ValidationError("empty table");
  std::set<std::tuple<std::string, std::int64_t, std::string>> seen;
  for (const auto& r : table.rows) {
    if (!(r.n_params > 0.0) || !std::isfinite(r.n_params))
      throw ValidationError("n_params must be positive for model '" + r.model_name + "'");
    if (r.embed_dim < 1) throw ValidationError("embed_dim must be >= 1 for model '" + r.model_name + "'");
    if (!(r.entropy >= 0.0) || !std::isfinite(r.entropy))
      throw ValidationError("entropy must be finite and nonnegative for model '" + r.model_name + "'");
    if (!seen.emplace(r.model_name, r.embed_dim, r.dataset).second)
      throw ValidationError("duplicate key (" + r.model_name + ", " + std::to_string(r.embed_dim) + ", " +
                            r.dataset + ")");
  }
}

/// Parses the observation CSV. Lines starting with '#' are comments and are
/// collected into the table's provenance note.
inline ObservationTable parse_observations(std::istream& in) {
  ObservationTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::set<std::tuple<std::string, std::int64_t, std::string>> seen;

  while (std::getline(in, line)) {
    ++lineno;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      auto note = detail::trim(text.substr(1));
      if (!table.provenance.empty()) table.provenance += '\n';
      table.provenance += note;
      continue;
    }
    if (!have_header) {
      if (text != kObservationHeader)
        throw ParseError(lineno, "expected header '" + std::string(kObservationHeader) + "'");
      have_header = true;
      continue;
    }
    const auto fields = detail::split(text, ',');
    if (fields.size() != 5)
      throw ParseError(lineno, "expected 5 fields, got " + std::to_string(fields.size()));

    Observation obs;
    obs.model_name = std::string(detail::trim(fields[0]));
    if (obs.model_name.empty()) throw ParseError(lineno, "empty model_name");
    const auto n = detail::parse_double(fields[1]);
    if (!n) throw ParseError(lineno, "bad n_params '" + std::string(fields[1]) + "'");
    const auto d = detail::parse_int(fields[2]);
    if (!d) throw ParseError(lineno, "bad embed_dim '" + std::string(fields[2]) + "'");
    obs.dataset = std::string(detail::trim(fields[3]));
    if (obs.dataset.empty()) throw ParseError(lineno, "empty dataset");
    const auto e = detail::parse_double(fields[4]);
    if (!e) throw ParseError(lineno, "bad entropy '" + std::string(fields[4]) + "'");
    obs.n_params = *n;
    obs.embed_dim = *d;
    obs.entropy = *e;

    if (!(obs.n_params > 0.0) || !std::isfinite(obs.n_params)) throw ParseError(lineno, "n_params must be > 0");
    if (obs.embed_dim < 1) throw ParseError(lineno, "embed_dim must be >= 1");
    if (!(obs.entropy >= 0.0) || !std::isfinite(obs.entropy))
      throw ParseError(lineno, "entropy must be finite and >= 0");
    if (!seen.emplace(obs.model_name, obs.embed_dim, obs.dataset).second)
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate key (" + obs.model_name + ", " +
                            std::to_string(obs.embed_dim) + ", " + obs.dataset + ")");
    table.rows.push_back(std::move(obs));
  }
  if (!have_header) throw ParseError(0, "missing header");
  if (table.empty()) throw ValidationError("empty table");
  return table;
}

inline ObservationTable parse_observations(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_observations(in);
}

/// Writes the table back as CSV. Provenance lines come first as comments.
inline std::string serialize(const ObservationTable& table) {
  std::string out;
  if (!table.provenance.empty()) {
    std::istringstream notes(table.provenance);
    std::string note;
    while (std::getline(notes, note)) out += "# " + note + "\n";
  }
  out += kObservationHeader;
  out += '\n';
  for (const auto& r : table.rows) {
    out += r.model_name + ',' + detail::format_double(r.n_params) + ',' + std::to_string(r.embed_dim) + ',' +
           r.dataset + ',' + detail::format_double(r.entropy) + '\n';
  }
  return out;
}

/// Selects rows of `dataset`, optionally restricted to one model.
inline ObservationTable filter_by(const ObservationTable& table, const std::optional<std::string>& model_name,
                                  const std::string& dataset) {
  const auto ds = table.datasets();
  if (std::find(ds.begin(), ds.end(), dataset) == ds.end())
    throw EmptySelectionError("dataset '" + dataset + "' not present in table");
  ObservationTable out;
  out.provenance = table.provenance;
  for (const auto& r : table.rows) {
    if (r.dataset != dataset) continue;
    if (model_name && r.model_name != *model_name) continue;
    out.rows.push_back(r);
  }
  if (out.empty())
    throw EmptySelectionError("no rows for model '" + model_name.value_or("*") + "' on dataset '" + dataset + "'");
  return out;
}

/// Positive rational multiplier of a hidden size.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  static Rational parse(std::string_view s) {
    s = detail::trim(s);
    const auto slash = s.find('/');
    const auto n = detail::parse_int(s.substr(0, slash));
    const auto d = slash == std::string_view::npos ? std::optional<std::int64_t>{1}
                                                    : detail::parse_int(s.substr(slash + 1));
    if (!n || !d || *d == 0) throw ConfigError("bad multiplier '" + std::string(s) + "'");
    return {*n, *d};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct SweepConfig {
  std::int64_t base_hidden = 1;
  std::vector<Rational> multipliers;
};

/// Embedding dimensions {round(phi * d)} for the configured multipliers,
/// sorted and deduplicated. Rounding is half away from zero, done exactly.
inline std::vector<std::int64_t> expand_sweep(const SweepConfig& cfg) {
  if (cfg.base_hidden < 1) throw ConfigError("base hidden size must be >= 1");
  if (cfg.multipliers.empty()) throw ConfigError("multiplier list is empty");
  std::vector<std::int64_t> dims;
  dims.reserve(cfg.multipliers.size());
  for (auto m : cfg.multipliers) {
    if (m.den < 0) m = {-m.num, -m.den};
    if (m.num <= 0) throw ConfigError("multipliers must be positive");
    const std::int64_t scaled = m.num * cfg.base_hidden;
    if (scaled < m.den)
      throw ConfigError("multiplier " + std::to_string(m.num) + "/" + std::to_string(m.den) + " gives dimension < 1");
    dims.push_back((2 * scaled + m.den) / (2 * m.den));
  }
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return dims;
}

}  // namespace dimscale
