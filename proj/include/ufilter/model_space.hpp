#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ufilter/hmm.hpp"

namespace ufilter {

/// Penalty sentinel for excluded beliefs and models. Absorbing under
/// addition and ignored by min-reductions.
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Uncertain prior (penalty fixed at time 0) or DR-expectation (penalty is the
/// observation-driven divergence).
enum class Framework { UncertainPrior, DivergenceRobust };

/// Static generators are constant through time; dynamic generators are chosen
/// afresh at every step.
enum class GeneratorScope { Static, Dynamic };

std::string_view to_string(Framework f);
std::string_view to_string(GeneratorScope s);

/// Subtracts the smallest finite value from every finite entry and returns it.
/// Returns +inf, leaving the values untouched, when every entry is +inf.
double normalize_min_zero(std::span<double> values);

/// A finite model class over generators with prior penalties gamma.
class GeneratorGrid {
 public:
  /// Per-step penalty override: (t, Y_1..Y_{t-1}, control) -> gamma_t.
  using PenaltyHook = std::function<std::vector<double>(
      std::size_t t, std::span<const ObsSymbol> history, std::optional<std::size_t> control)>;

  /// Prior penalties are shifted to minimum zero; the offset is discarded.
  GeneratorGrid(std::vector<Generator> candidates, std::vector<double> prior_penalty);
  /// A grid with a single candidate and zero penalty.
  explicit GeneratorGrid(Generator only);

  std::size_t size() const { return candidates_.size(); }
  std::size_t states() const { return candidates_.front().states(); }
  std::size_t symbols() const { return candidates_.front().symbols(); }
  const Generator& operator[](std::size_t i) const { return candidates_[i]; }
  std::span<const Generator> candidates() const { return candidates_; }
  std::span<const double> prior_penalty() const { return prior_penalty_; }

  /// One penalty vector per control, each normalized to minimum zero.
  void set_control_penalties(std::vector<std::vector<double>> per_control);
  std::size_t control_count() const { return control_penalties_.size(); }
  std::span<const double> control_penalty(std::size_t u) const { return control_penalties_.at(u); }

  void set_penalty_hook(PenaltyHook hook) { hook_ = std::move(hook); }
  const PenaltyHook& penalty_hook() const { return hook_; }

 private:
  std::vector<Generator> candidates_;
  std::vector<double> prior_penalty_;
  std::vector<std::vector<double>> control_penalties_;
  PenaltyHook hook_;
};

/// Generator penalty gamma_t for step t >= 1, normalized to minimum zero.
/// Resolution order: the grid's hook, then the control table (when a control
/// is given), then the stationary prior penalty.
std::vector<double> gamma_at(const GeneratorGrid& grid, std::size_t t, std::span<const ObsSymbol> history,
                             std::optional<std::size_t> control = std::nullopt);

/// All points x/m of the probability simplex with x integer, sum x = m, stored
/// in lexicographic order of x.
class SimplexGrid {
 public:
  SimplexGrid(std::size_t dimension, std::size_t resolution);

  /// binomial(m + N - 1, N - 1)
  static std::size_t point_count(std::size_t dimension, std::size_t resolution);

  std::size_t dimension() const { return dim_; }
  std::size_t resolution() const { return m_; }
  std::size_t size() const { return count_; }

  std::span<const int> coords(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  std::span<const double> belief(std::size_t i) const { return {beliefs_.data() + i * dim_, dim_}; }
  /// All beliefs, flattened point-major.
  std::span<const double> beliefs() const { return beliefs_; }

  /// Canonical index of integer coordinates (which must sum to m).
  std::size_t index_of(std::span<const int> coords) const;

  /// Euclidean-nearest grid point; equidistant candidates resolve to the
  /// lowest canonical index.
  std::size_t nearest(std::span<const double> q) const;

 private:
  std::size_t dim_;
  std::size_t m_;
  std::size_t count_;
  std::vector<int> coords_;
  std::vector<double> beliefs_;
};

/// Initial belief penalty on a simplex grid plus the framework selection.
struct PriorSpec {
  std::vector<double> initial_penalty;
  GeneratorScope generator_mode = GeneratorScope::Dynamic;
  Framework framework = Framework::DivergenceRobust;
};

/// Initial belief penalty on a finite set of exactly represented beliefs.
struct ExactPrior {
  std::size_t dimension = 0;
  std::vector<double> beliefs;  ///< flattened, one belief per `dimension` entries
  std::vector<double> values;   ///< normalized to minimum zero by `make_exact_prior`

  std::size_t size() const { return values.size(); }
  std::span<const double> belief(std::size_t i) const { return {beliefs.data() + i * dimension, dimension}; }
};

/// Validates the beliefs and shifts the values to minimum zero.
ExactPrior make_exact_prior(std::size_t dimension, std::vector<std::vector<double>> beliefs,
                            std::vector<double> values);

/// A member of the model class: initial grid belief and a generator index
/// per step (a single index when the generator is static).
struct ModelPoint {
  std::size_t p0_index = 0;
  std::vector<std::size_t> gen_indices;
};

/// sum_t log c(y_t; A p_{t-1}) under the model, relative to counting measure
/// on the alphabet. Throws DegenerateObservation if some step is impossible.
double log_likelihood_obs(const ModelPoint& model, std::span<const ObsSymbol> obs, const SimplexGrid& beliefs,
                          const GeneratorGrid& gens);

/// T log d: the offset between log_likelihood_obs and the likelihood relative
/// to the i.i.d. uniform reference law of the observations.
double uniform_reference_offset(std::size_t horizon, std::size_t symbols);

/// Full-filtration log-likelihood of a sampled path relative to the reference
/// measure: log(p0[x_0]) + log N + sum_t [log A(x_t, x_{t-1}) + log C(x_t, y_t)].
/// Returns -inf for a path the model cannot produce.
double log_likelihood_full(const ModelPoint& model, const Path& path, const SimplexGrid& beliefs,
                           const GeneratorGrid& gens);

/// Prior penalty of a model point: pi(p0) plus the generator penalties of the
/// steps covered by `obs` (once for a static generator).
double model_prior_penalty(const ModelPoint& model, std::span<const ObsSymbol> obs, const PriorSpec& prior,
                           const GeneratorGrid& gens);

/// Divergence of every model in the class: -log L(Q|y) + max log L, with
/// log L = log-likelihood - prior penalty. Impossible models get +inf.
std::vector<double> divergences(std::span<const ModelPoint> model_class, std::span<const ObsSymbol> obs,
                                const PriorSpec& prior, const SimplexGrid& beliefs, const GeneratorGrid& gens);

/// Divergence of one model relative to the class.
double divergence(const ModelPoint& model, std::span<const ObsSymbol> obs, std::span<const ModelPoint> model_class,
                  const PriorSpec& prior, const SimplexGrid& beliefs, const GeneratorGrid& gens);

}  // namespace ufilter
