#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dimscale/embed.hpp"

namespace dimscale {
namespace {

EmbeddingMatrix random_matrix(std::size_t rows, std::size_t dim, std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> data(rows * dim);
  for (auto& v : data) v = n(gen);
  return EmbeddingMatrix(rows, dim, data);
}

EmbeddingMatrix identity(std::size_t n) {
  auto m = EmbeddingMatrix::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

TEST(EmbeddingMatrix, ShapeChecks) {
  EXPECT_THROW(EmbeddingMatrix(2, 3, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(EmbeddingMatrix(1, 0, {}), ShapeError);
  EXPECT_THROW(EmbeddingMatrix(2, 1, {1.0, 2.0}, std::vector<std::string>{"a"}), ShapeError);
  EXPECT_THROW(Projection(EmbeddingMatrix::zeros(2, 3), {0.0}), ShapeError);
}

TEST(Project, IdentityAndBiasOnly) {
  std::mt19937_64 gen(1);
  const auto x = random_matrix(5, 4, gen);
  const auto same = project(x, Projection(identity(4), std::vector<double>(4, 0.0)));
  for (std::size_t i = 0; i < x.data().size(); ++i) EXPECT_EQ(same.data()[i], x.data()[i]);

  const std::vector<double> v{1.5, -2.0};
  const auto flat = project(x, Projection(EmbeddingMatrix::zeros(2, 4), v));
  for (std::size_t i = 0; i < flat.rows(); ++i) {
    EXPECT_EQ(flat(i, 0), 1.5);
    EXPECT_EQ(flat(i, 1), -2.0);
  }
}

TEST(Project, MatchesNaiveMultiply) {
  std::mt19937_64 gen(2);
  const auto x = random_matrix(3, 4, gen);
  const auto w = random_matrix(2, 4, gen);
  const std::vector<double> b{0.25, -0.75};
  const auto y = project(x, Projection(w, b));
  ASSERT_EQ(y.rows(), 3u);
  ASSERT_EQ(y.dim(), 2u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t r = 0; r < 2; ++r) {
      double expected = b[r];
      for (std::size_t c = 0; c < 4; ++c) expected += w.data()[r * 4 + c] * x.data()[i * 4 + c];
      EXPECT_NEAR(y(i, r), expected, 1e-14);
    }
}

TEST(Project, ShapeMismatch) {
  std::mt19937_64 gen(3);
  EXPECT_THROW(project(random_matrix(2, 3, gen), Projection(identity(4), std::vector<double>(4))), ShapeError);
}

TEST(MeanPool, Examples) {
  const EmbeddingMatrix one(1, 3, {1.0, 2.0, 3.0});
  EXPECT_EQ(mean_pool(one), (std::vector<double>{1.0, 2.0, 3.0}));
  const EmbeddingMatrix sym(2, 3, {1.0, -2.0, 3.0, -1.0, 2.0, -3.0});
  for (double v : mean_pool(sym)) EXPECT_EQ(v, 0.0);

  std::mt19937_64 gen(4);
  const auto x = random_matrix(3, 5, gen);
  const auto e = mean_pool(x);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(e[j], (x(0, j) + x(1, j) + x(2, j)) / 3.0, 1e-15);
  EXPECT_THROW(mean_pool(EmbeddingMatrix(0, 3, {})), ShapeError);
}

TEST(L2Normalize, Examples) {
  const auto u = l2_normalize(std::vector<double>{3.0, 4.0});
  EXPECT_NEAR(u[0], 0.6, 1e-15);
  EXPECT_NEAR(u[1], 0.8, 1e-15);
  const auto again = l2_normalize(u);
  EXPECT_NEAR(again[0], u[0], 1e-15);
  EXPECT_NEAR(again[1], u[1], 1e-15);

  std::mt19937_64 gen(5);
  std::normal_distribution<double> n;
  std::vector<double> v(17);
  for (auto& x : v) x = n(gen);
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const auto w = l2_normalize(v);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(w[i], v[i] / std::sqrt(ss), 1e-15);
    norm2 += w[i] * w[i];
  }
  EXPECT_NEAR(std::sqrt(norm2), 1.0, 1e-12);
  EXPECT_THROW(l2_normalize(std::vector<double>{0.0, 1e-13}), NumericError);
}

TEST(ScorePairs, Examples) {
  const EmbeddingMatrix q(1, 2, {1.0, 0.0});
  const EmbeddingMatrix d(2, 2, {0.0, 1.0, 1.0, 0.0});
  const auto s = score_pairs(q, d, false);
  EXPECT_EQ(s[0][0], 0.0);
  EXPECT_EQ(s[0][1], 1.0);

  std::mt19937_64 gen(6);
  const auto a = random_matrix(2, 3, gen);
  const auto b = random_matrix(2, 3, gen);
  const auto raw = score_pairs(a, b, false);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(raw[i][j], a(i, 0) * b(j, 0) + a(i, 1) * b(j, 1) + a(i, 2) * b(j, 2), 1e-15);
  EXPECT_THROW(score_pairs(a, random_matrix(2, 4, gen), false), ShapeError);
}

TEST(EmbedProperties, LinearityScaleInvarianceAndBounds) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tokens = random_matrix(1 + trial % 6, 8, gen);
    const Projection p(random_matrix(5, 8, gen), {0.1, -0.2, 0.3, 0.0, 1.0});

    const auto pooled_then_projected = project(EmbeddingMatrix(1, 8, mean_pool(tokens)), p);
    const auto projected_then_pooled = mean_pool(project(tokens, p));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(pooled_then_projected(0, j), projected_then_pooled[j], 1e-10);

    const double c = scale(gen);
    std::vector<double> scaled(tokens.data().begin(), tokens.data().end());
    for (auto& v : scaled) v *= c;
    const auto e1 = l2_normalize(mean_pool(tokens));
    const auto e2 = l2_normalize(mean_pool(EmbeddingMatrix(tokens.rows(), 8, scaled)));
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(e1[j], e2[j], 1e-10);

    const auto s = score_pairs(random_matrix(3, 8, gen), random_matrix(4, 8, gen), true);
    for (const auto& row : s)
      for (double v : row) {
        EXPECT_LE(v, 1.0 + 1e-12);
        EXPECT_GE(v, -1.0 - 1e-12);
      }
  }
}

TEST(ScorePairs, NormalizedSelfScoreIsOne) {
  std::mt19937_64 gen(8);
  const auto a = random_matrix(4, 6, gen);
  const auto s = score_pairs(a, a, true);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s[i][i], 1.0, 1e-12);
}

}  // namespace
}  // namespace dimscale
