#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "ufilter/errors.hpp"

using namespace ufilter;
using namespace testing_util;

TEST(Generator, RejectsBadColumnSums) {
  EXPECT_THROW(Generator(Matrix{{0.8, 0.2}, {0.1, 0.7}}, Matrix{{0.5, 0.5}, {0.5, 0.5}}), ValidationError);
}

TEST(Generator, RejectsBadEmissionRows) {
  EXPECT_THROW(Generator(Matrix::identity(2), Matrix{{0.5, 0.4}, {0.5, 0.5}}), ValidationError);
}

TEST(Generator, RejectsNegativeEntries) {
  EXPECT_THROW(Generator(Matrix{{1.1, 0.0}, {-0.1, 1.0}}, Matrix{{0.5, 0.5}, {0.5, 0.5}}), ValidationError);
}

TEST(FilterState, ValidatesSimplex) {
  EXPECT_THROW(FilterState({0.5, 0.6}), ValidationError);
  EXPECT_THROW(FilterState({-0.1, 1.1}), ValidationError);
  EXPECT_NO_THROW(FilterState({0.25, 0.75}));
}

TEST(FilterStep, UninformativeIdentityIsFixed) {
  auto gen = uninformative(2, 2, Matrix::identity(2));
  for (std::size_t y = 0; y < 2; ++y) {
    auto p = filter_step(FilterState({0.3, 0.7}), gen, ObsSymbol{y});
    EXPECT_NEAR(p[0], 0.3, 1e-15);
    EXPECT_NEAR(p[1], 0.7, 1e-15);
  }
}

TEST(FilterStep, BernoulliChainSingleSuccess) {
  auto p = filter_step(FilterState::uniform(2), bernoulli_chain(), ObsSymbol{0});
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(FilterStep, RevealingObservation) {
  auto p = filter_step(FilterState::uniform(2), bernoulli(1.0, 0.0), ObsSymbol{0});
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(FilterStep, DegenerateObservationThrows) {
  EXPECT_THROW(filter_step(FilterState::vertex(2, 1), bernoulli(1.0, 0.0), ObsSymbol{0}), DegenerateObservation);
  std::vector<double> out(2);
  EXPECT_EQ(filter_update(FilterState::vertex(2, 1).probs(), bernoulli(1.0, 0.0), 0, out), 0.0);
}

TEST(FilterStep, OutputStaysOnSimplex) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix a(3, 3), c(3, 4);
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += a(i, j) = unit_uniform(rng);
      for (std::size_t i = 0; i < 3; ++i) a(i, j) /= s;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t y = 0; y < 4; ++y) s += c(i, y) = unit_uniform(rng);
      for (std::size_t y = 0; y < 4; ++y) c(i, y) /= s;
    }
    Generator gen(a, c);
    auto p = FilterState::normalized({unit_uniform(rng), unit_uniform(rng), unit_uniform(rng)});
    auto q = filter_step(p, gen, ObsSymbol{static_cast<std::size_t>(trial % 4)});
    double sum = 0.0;
    for (double v : q.probs()) {
      EXPECT_GT(v, 0.0);  // positive model, positive prior
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(FilterStep, InvariantToEmissionColumnScale) {
  // rescaling column y by lambda and renormalizing rows elsewhere keeps the y-update
  Generator g1(Matrix{{0.9, 0.2}, {0.1, 0.8}}, Matrix{{0.6, 0.4}, {0.2, 0.8}});
  Generator g2(Matrix{{0.9, 0.2}, {0.1, 0.8}}, Matrix{{0.3, 0.7}, {0.1, 0.9}});
  auto p = FilterState({0.35, 0.65});
  auto a = filter_step(p, g1, ObsSymbol{0});
  auto b = filter_step(p, g2, ObsSymbol{0});
  EXPECT_NEAR(a[0], b[0], 1e-15);
}

TEST(FilterStep, LogOddsCompositionMatchesClosedForm) {
  const double a = 0.75, b = 0.25;
  auto y = obs({0, 1, 1, 0, 0, 0, 1, 0});
  FilterState p({0.4, 0.6});
  double expected = std::log(0.4 / 0.6);
  for (auto s : y) {
    p = filter_step(p, bernoulli(a, b), s);
    expected += s.index == 0 ? std::log(a / b) : std::log((1 - a) / (1 - b));
  }
  EXPECT_NEAR(std::log(p[0] / p[1]), expected, 1e-12);
}

TEST(Predict, Examples) {
  Matrix a{{0.9, 0.2}, {0.1, 0.8}};
  Generator gen(a, Matrix{{0.5, 0.5}, {0.5, 0.5}});
  auto id = predict(FilterState({0.2, 0.8}), Generator(Matrix::identity(2), Matrix{{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_EQ(id[0], 0.2);
  auto e1 = predict(FilterState::vertex(2, 0), gen);
  EXPECT_NEAR(e1[0], 0.9, 1e-15);
  EXPECT_NEAR(e1[1], 0.1, 1e-15);
  auto mid = predict(FilterState::uniform(2), gen);
  EXPECT_NEAR(mid[0], 0.55, 1e-15);
  EXPECT_NEAR(mid[1], 0.45, 1e-15);
}

TEST(ObsPredictive, Examples) {
  auto u = obs_predictive(FilterState({0.3, 0.7}), uninformative(2, 3, Matrix::identity(2)));
  for (double v : u) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto c = obs_predictive(FilterState::uniform(2), bernoulli_chain());
  EXPECT_NEAR(c[0], 0.5, 1e-15);
  EXPECT_NEAR(c[1], 0.5, 1e-15);
  auto r = obs_predictive(FilterState::vertex(2, 0), bernoulli_chain());
  EXPECT_EQ(r[0], 0.75);
  EXPECT_EQ(r[1], 0.25);
}

TEST(Simulate, HorizonZero) {
  std::vector<Generator> seq;
  auto path = simulate_path(seq, FilterState::vertex(2, 1), 0, 9);
  ASSERT_EQ(path.hidden.size(), 1u);
  EXPECT_EQ(path.hidden[0], 1u);
  EXPECT_TRUE(path.observed.empty());
}

TEST(Simulate, ForcedPath) {
  Generator perm(Matrix{{0, 0, 1}, {1, 0, 0}, {0, 1, 0}}, Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  std::vector<Generator> seq(5, perm);
  auto path = simulate_path(seq, FilterState::vertex(3, 0), 5, 123);
  const std::vector<std::size_t> hidden{0, 1, 2, 0, 1, 2};
  EXPECT_EQ(path.hidden, hidden);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(path.observed[t].index, hidden[t + 1]);
}

TEST(Simulate, ReproducibleForSeed) {
  std::vector<Generator> seq(50, bernoulli(0.7, 0.2, Matrix{{0.9, 0.3}, {0.1, 0.7}}));
  auto a = simulate_path(seq, FilterState::uniform(2), 50, 77);
  auto b = simulate_path(seq, FilterState::uniform(2), 50, 77);
  auto c = simulate_path(seq, FilterState::uniform(2), 50, 78);
  EXPECT_EQ(a.hidden, b.hidden);
  EXPECT_EQ(a.observed, b.observed);
  EXPECT_NE(a.observed, c.observed);
}

TEST(Simulate, SymbolFrequenciesMatchPredictive) {
  // i.i.d. hidden states: every column of A is the stationary law
  Generator gen(Matrix{{0.3, 0.3}, {0.7, 0.7}}, Matrix{{0.6, 0.3, 0.1}, {0.2, 0.2, 0.6}});
  const std::size_t n = 100000;
  std::vector<Generator> seq(n, gen);
  auto path = simulate_path(seq, FilterState::uniform(2), n, 2024);
  auto expected = obs_predictive(FilterState({0.3, 0.7}), gen);
  std::vector<double> counts(3, 0.0);
  for (auto y : path.observed) counts[y.index] += 1.0;
  for (std::size_t y = 0; y < 3; ++y) {
    const double freq = counts[y] / n;
    const double se = std::sqrt(expected[y] * (1 - expected[y]) / n);
    EXPECT_LT(std::abs(freq - expected[y]), 3 * se) << "symbol " << y;
  }
}
