#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "dimscale/error.hpp"
#include "dimscale/random.hpp"

namespace dimscale {

/// Similarity scores of one query against its known positives and a shared
/// list of sampled negatives.
struct QueryScoreRecord {
  std::string query_id;
  std::vector<double> positives;
  std::vector<double> negatives;
};

inline constexpr double kEttinTemperature = 0.02;

struct EvalConfig {
  std::optional<double> temperature;  // scores are divided by this before exponentiation
  std::size_t n_negatives = 256;
  std::uint64_t rng_seed = 0;
};

struct TeacherMargin {
  double s_teacher_pos = 0.0;
  double s_teacher_neg = 0.0;

  double delta() const { return s_teacher_pos - s_teacher_neg; }
};

namespace detail {

inline void check_temperature(const std::optional<double>& tau) {
  if (tau && !(*tau > 0.0 && std::isfinite(*tau))) throw ConfigError("temperature must be positive and finite");
}

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

inline double apply_temperature(double s, const std::optional<double>& tau) { return tau ? s / *tau : s; }

}  // namespace detail

/// -log softmax probability of `positive` among {positive} and `negatives`.
///
/// With a temperature every score is divided by it first. The log-sum-exp is
/// shifted by the maximum score; when the positive is that maximum the result
/// is log1p(sum_j exp(neg_j - pos)), otherwise (max - pos) + log(sum_i exp(s_i - max)).
inline double contrastive_entropy_single(double positive, std::span<const double> negatives,
                                         std::optional<double> temperature = std::nullopt) {
  if (negatives.empty()) throw ValidationError("contrastive entropy needs at least one negative");
  detail::check_temperature(temperature);
  detail::check_finite(positive, "positive score");
  for (double n : negatives) detail::check_finite(n, "negative score");

  const double pos = detail::apply_temperature(positive, temperature);
  double top = pos;
  for (double n : negatives) top = std::max(top, detail::apply_temperature(n, temperature));

  double rest = 0.0;
  for (double n : negatives) rest += std::exp(detail::apply_temperature(n, temperature) - top);
  if (top == pos) return std::log1p(rest);
  return (top - pos) + std::log(rest + std::exp(pos - top));
}

/// Mean over the record's positives, each scored against the same negatives.
inline double contrastive_entropy_query(const QueryScoreRecord& rec, const EvalConfig& cfg = {}) {
  if (rec.positives.empty()) throw ValidationError("query '" + rec.query_id + "' has no positives");
  if (rec.negatives.empty()) throw ValidationError("query '" + rec.query_id + "' has no negatives");
  double sum = 0.0;
  for (double p : rec.positives) sum += contrastive_entropy_single(p, rec.negatives, cfg.temperature);
  return sum / static_cast<double>(rec.positives.size());
}

/// Unweighted mean of per-query values, summed serially in record order.
inline double contrastive_entropy_dataset(std::span<const QueryScoreRecord> records, const EvalConfig& cfg = {}) {
  if (records.empty()) throw ValidationError("no query records");
  double sum = 0.0;
  for (const auto& r : records) sum += contrastive_entropy_query(r, cfg);
  return sum / static_cast<double>(records.size());
}

/// Draws `k` distinct ids uniformly without replacement from `corpus_ids`
/// minus `positive_ids`. Partial Fisher-Yates over the eligible pool, kept in
/// corpus order (first occurrence wins for repeated ids), driven by Rng(seed).
inline std::vector<std::string> sample_negatives(std::span<const std::string> corpus_ids,
                                                 const std::unordered_set<std::string>& positive_ids, std::size_t k,
                                                 std::uint64_t seed) {
  std::vector<std::string> pool;
  pool.reserve(corpus_ids.size());
  std::unordered_set<std::string> seen;
  for (const auto& id : corpus_ids) {
    if (positive_ids.contains(id)) continue;
    if (seen.insert(id).second) pool.push_back(id);
  }
  if (pool.size() < k)
    throw ValidationError("negative pool has " + std::to_string(pool.size()) + " ids, need " + std::to_string(k));

  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// ---------------------------------------------------------------------------
// Training losses

/// Same kernel as contrastive_entropy_single. Kept separate because training
/// negatives come from the batch, not from corpus sampling.
inline double contrastive_loss(double positive, std::span<const double> negatives,
                               std::optional<double> temperature = std::nullopt) {
  return contrastive_entropy_single(positive, negatives, temperature);
}

struct ContrastiveGradient {
  double d_positive = 0.0;
  std::vector<double> d_negatives;
};

/// Analytic partials of contrastive_loss with respect to each raw score.
inline ContrastiveGradient contrastive_loss_gradient(double positive, std::span<const double> negatives,
                                                     std::optional<double> temperature = std::nullopt) {
  if (negatives.empty()) throw ValidationError("contrastive loss needs at least one negative");
  detail::check_temperature(temperature);
  const double scale = temperature ? 1.0 / *temperature : 1.0;
  const double pos = detail::apply_temperature(positive, temperature);
  double top = pos;
  for (double n : negatives) top = std::max(top, detail::apply_temperature(n, temperature));
  double z = std::exp(pos - top);
  std::vector<double> w(negatives.size());
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    w[j] = std::exp(detail::apply_temperature(negatives[j], temperature) - top);
    z += w[j];
  }
  ContrastiveGradient g;
  g.d_positive = (std::exp(pos - top) / z - 1.0) * scale;
  g.d_negatives.resize(negatives.size());
  for (std::size_t j = 0; j < negatives.size(); ++j) g.d_negatives[j] = w[j] / z * scale;
  return g;
}

/// (Δ_student − Δ_teacher)² where each Δ is positive minus negative score.
inline double margin_mse(double student_pos, double student_neg, const TeacherMargin& teacher) {
  detail::check_finite(student_pos, "student score");
  detail::check_finite(student_neg, "student score");
  detail::check_finite(teacher.s_teacher_pos, "teacher score");
  detail::check_finite(teacher.s_teacher_neg, "teacher score");
  const double r = (student_pos - student_neg) - teacher.delta();
  return r * r;
}

struct MarginMseGradient {
  double d_student_pos = 0.0;
  double d_student_neg = 0.0;
};

inline MarginMseGradient margin_mse_gradient(double student_pos, double student_neg, const TeacherMargin& teacher) {
  const double r = (student_pos - student_neg) - teacher.delta();
  return {2.0 * r, -2.0 * r};
}

enum class Recipe { bert, ettin };

/// Student scores for one query of a training batch.
///
/// `hard_negatives[j]` pairs with `teacher[j]`. `in_batch_negatives` holds the
/// query's scores against other passages of the batch: for the BERT recipe the
/// other queries' positives, for the Ettin recipe every other in-batch passage.
struct TrainingExample {
  double positive = 0.0;
  std::vector<double> hard_negatives;
  std::vector<TeacherMargin> teacher;
  std::vector<double> in_batch_negatives;
};

/// BERT: mean MarginMSE over (query, hard negative) pairs plus the mean
/// contrastive loss against in-batch positives only.
/// Ettin: mean contrastive loss against the query's hard negatives and the
/// in-batch negatives; a temperature is required.
inline double combined_loss(std::span<const TrainingExample> batch, Recipe recipe,
                            std::optional<double> temperature = std::nullopt) {
  if (batch.empty()) throw ValidationError("empty training batch");
  detail::check_temperature(temperature);

  double contrastive = 0.0;
  if (recipe == Recipe::ettin) {
    if (!temperature) throw ConfigError("ettin recipe requires a temperature");
    for (const auto& ex : batch) {
      std::vector<double> negs = ex.hard_negatives;
      negs.insert(negs.end(), ex.in_batch_negatives.begin(), ex.in_batch_negatives.end());
      contrastive += contrastive_loss(ex.positive, negs, temperature);
    }
    return contrastive / static_cast<double>(batch.size());
  }

  double margin = 0.0;
  std::size_t pairs = 0;
  for (const auto& ex : batch) {
    if (ex.teacher.size() != ex.hard_negatives.size())
      throw ValidationError("bert recipe needs one teacher margin per hard negative");
    for (std::size_t j = 0; j < ex.hard_negatives.size(); ++j) {
      margin += margin_mse(ex.positive, ex.hard_negatives[j], ex.teacher[j]);
      ++pairs;
    }
    contrastive += contrastive_loss(ex.positive, ex.in_batch_negatives, temperature);
  }
  if (pairs == 0) throw ValidationError("bert recipe requires teacher margins");
  return margin / static_cast<double>(pairs) + contrastive / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Ranking metrics

/// 1/rank of the first relevant id within the top k, else 0.
template <class Id, class Set>
double rr_at_k(std::span<const Id> ranked_ids, const Set& relevant_ids, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  const auto limit = std::min(k, ranked_ids.size());
  for (std::size_t i = 0; i < limit; ++i)
    if (relevant_ids.contains(ranked_ids[i])) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

/// Fraction of relevant ids appearing in the top k. Repeated ids count once.
template <class Id, class Set>
double recall_at_k(std::span<const Id> ranked_ids, const Set& relevant_ids, std::size_t k) {
  if (relevant_ids.empty()) throw ValidationError("recall needs a nonempty relevant set");
  const auto limit = std::min(k, ranked_ids.size());
  std::vector<Id> hits;
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& id = ranked_ids[i];
    if (relevant_ids.contains(id) && std::find(hits.begin(), hits.end(), id) == hits.end()) hits.push_back(id);
  }
  return static_cast<double>(hits.size()) / static_cast<double>(relevant_ids.size());
}

}  // namespace dimscale
