#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ufilter/matrix.hpp"

namespace ufilter {

/// Tolerance on row/column sums of stochastic matrices and probability vectors.
inline constexpr double kStochasticTol = 1e-12;

/// One symbol of the finite observation alphabet {0, ..., d-1}.
struct ObsSymbol {
  std::size_t index = 0;
  auto operator<=>(const ObsSymbol&) const = default;
};

using ObsSequence = std::vector<ObsSymbol>;

/// A candidate model (A, C): transition matrix and emission kernel.
///
/// `transition()(i, j)` is P(X_t = e_i | X_{t-1} = e_j), so every column sums
/// to one. `emission()(i, y)` is P(Y_t = y | X_t = e_i), so every row sums to
/// one. Construction validates both and throws ValidationError.
class Generator {
 public:
  Generator(Matrix transition, Matrix emission);

  std::size_t states() const { return transition_.rows(); }
  std::size_t symbols() const { return emission_.cols(); }
  const Matrix& transition() const { return transition_; }
  const Matrix& emission() const { return emission_; }

  bool operator==(const Generator&) const = default;

 private:
  Matrix transition_;
  Matrix emission_;
};

/// Largest entrywise difference between two generators (inf on shape mismatch).
double generator_distance(const Generator& a, const Generator& b);

/// A probability vector over the N hidden states.
class FilterState {
 public:
  /// Validates nonnegativity and unit sum (within kStochasticTol).
  explicit FilterState(std::vector<double> probs);
  /// Rescales a nonnegative vector with positive mass to unit sum.
  static FilterState normalized(std::vector<double> weights);
  static FilterState uniform(std::size_t n);
  static FilterState vertex(std::size_t n, std::size_t i);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  bool operator==(const FilterState&) const = default;

 private:
  struct Unchecked {};
  FilterState(std::vector<double> probs, Unchecked) : probs_(std::move(probs)) {}
  std::vector<double> probs_;
};

/// A sampled trajectory. `hidden` holds X_0..X_T (length T+1), `observed`
/// holds Y_1..Y_T (length T); Y_0 carries no information and is not stored.
struct Path {
  std::vector<std::size_t> hidden;
  ObsSequence observed;
  std::uint64_t seed = 0;
};

/// A p: the one-step prediction of the hidden state.
FilterState predict(const FilterState& p, const Generator& gen);

/// Predictive law of the next symbol: entry y is sum_i (A p)_i C(i, y).
std::vector<double> obs_predictive(const FilterState& p, const Generator& gen);

/// Bayes update p_t ∝ C(y) A p_{t-1}. Throws DegenerateObservation when y has
/// zero predictive probability.
FilterState filter_step(const FilterState& p, const Generator& gen, ObsSymbol y);

/// Span-level kernel behind filter_step. Writes the updated belief to `out`
/// and returns the predictive mass c(y; A p). When that mass is zero, `out`
/// is left unspecified and 0 is returned.
double filter_update(std::span<const double> p, const Generator& gen, std::size_t y,
                     std::span<double> out);

/// Predictive mass c(y; A p) for every symbol, written into `out` (size d).
void predictive_masses(std::span<const double> p, const Generator& gen, std::span<double> out);

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
double unit_uniform(std::mt19937_64& rng);

/// Samples (X, Y) for `horizon` steps. Step t uses gen_seq[t-1]. The result is
/// bit-reproducible for a fixed seed.
Path simulate_path(std::span<const Generator> gen_seq, const FilterState& p0, std::size_t horizon,
                   std::uint64_t seed);

}  // namespace ufilter
