#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dimscale/error.hpp"

namespace dimscale {

/// Dense row-major matrix of token hidden states or final embeddings.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                  std::optional<std::vector<std::string>> ids = std::nullopt)
      : rows_(rows), dim_(dim), data_(std::move(data)), ids_(std::move(ids)) {
    if (dim_ < 1) throw ShapeError("embedding dim must be >= 1");
    if (data_.size() != rows_ * dim_)
      throw ShapeError("data length " + std::to_string(data_.size()) + " != rows*dim " + std::to_string(rows_ * dim_));
    if (ids_ && ids_->size() != rows_) throw ShapeError("id count does not match row count");
  }

  static EmbeddingMatrix zeros(std::size_t rows, std::size_t dim) {
    return EmbeddingMatrix(rows, dim, std::vector<double>(rows * dim, 0.0));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::optional<std::vector<std::string>>& ids() const noexcept { return ids_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 1;
  std::vector<double> data_;
  std::optional<std::vector<std::string>> ids_;
};

/// Linear layer h' = W h + b with W of shape out_dim x in_dim.
struct Projection {
  EmbeddingMatrix weight;
  std::vector<double> bias;

  Projection(EmbeddingMatrix w, std::vector<double> b) : weight(std::move(w)), bias(std::move(b)) {
    if (bias.size() != weight.rows()) throw ShapeError("bias length must equal projection output dim");
  }
  std::size_t in_dim() const { return weight.dim(); }
  std::size_t out_dim() const { return weight.rows(); }
};

inline EmbeddingMatrix project(const EmbeddingMatrix& tokens, const Projection& p) {
  if (tokens.dim() != p.in_dim())
    throw ShapeError("token dim " + std::to_string(tokens.dim()) + " != projection input dim " +
                     std::to_string(p.in_dim()));
  auto out = EmbeddingMatrix::zeros(tokens.rows(), p.out_dim());
  for (std::size_t i = 0; i < tokens.rows(); ++i) {
    const auto h = tokens.row(i);
    for (std::size_t r = 0; r < p.out_dim(); ++r) {
      const auto w = p.weight.row(r);
      double acc = p.bias[r];
      for (std::size_t c = 0; c < h.size(); ++c) acc += w[c] * h[c];
      out(i, r) = acc;
    }
  }
  return out;
}

/// Element-wise mean of the rows.
inline std::vector<double> mean_pool(const EmbeddingMatrix& tokens) {
  if (tokens.rows() == 0) throw ShapeError("mean pooling needs at least one row");
  std::vector<double> e(tokens.dim(), 0.0);
  for (std::size_t i = 0; i < tokens.rows(); ++i) {
    const auto h = tokens.row(i);
    for (std::size_t j = 0; j < e.size(); ++j) e[j] += h[j];
  }
  const double n = static_cast<double>(tokens.rows());
  for (auto& v : e) v /= n;
  return e;
}

inline constexpr double kZeroNorm = 1e-12;

inline std::vector<double> l2_normalize(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double norm = std::sqrt(ss);
  if (!(norm > kZeroNorm)) throw NumericError("cannot normalize a (near-)zero embedding");
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= norm;
  return out;
}

inline EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
  auto out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto unit = l2_normalize(m.row(i));
    std::copy(unit.begin(), unit.end(), out.row(i).begin());
  }
  return out;
}

/// S[i][j] = q_i . d_j, rows optionally L2-normalized first. Temperature is a
/// metrics concern and is not applied here.
inline std::vector<std::vector<double>> score_pairs(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs,
                                                    bool normalize) {
  if (queries.dim() != docs.dim())
    throw ShapeError("query dim " + std::to_string(queries.dim()) + " != doc dim " + std::to_string(docs.dim()));
  const auto q = normalize ? l2_normalize_rows(queries) : queries;
  const auto d = normalize ? l2_normalize_rows(docs) : docs;
  std::vector<std::vector<double>> s(q.rows(), std::vector<double>(d.rows(), 0.0));
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < d.rows(); ++j) {
      double acc = 0.0;
      const auto a = q.row(i);
      const auto b = d.row(j);
      for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
      s[i][j] = acc;
    }
  }
  return s;
}

}  // namespace dimscale
