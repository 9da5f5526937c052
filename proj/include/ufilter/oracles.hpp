#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ufilter/model_space.hpp"

namespace ufilter::oracle {

/// How filter images are represented while enumerating models.
struct BeliefTracker {
  enum class Mode { Exact, GridRounding };
  Mode mode = Mode::Exact;
  std::shared_ptr<const SimplexGrid> grid;  ///< GridRounding only
  double match_tol = 1e-12;                 ///< beliefs closer than this are the same point

  static BeliefTracker exact() { return {}; }
  static BeliefTracker rounding(std::shared_ptr<const SimplexGrid> grid) { return {Mode::GridRounding, std::move(grid)}; }
};

/// Terminal belief and accumulated penalty of one (p0, generator path) model.
struct ModelOutcome {
  std::size_t p0 = 0;
  std::vector<std::size_t> path;
  std::vector<double> belief;
  double penalty = 0.0;  ///< prior + generator penalties (+ negative log-likelihood for DR), unnormalized
};

/// Every model consistent with the observations, in enumeration order
/// (p0 ascending, then generator paths in lexicographic order). Models
/// under which the observations are impossible are dropped.
std::vector<ModelOutcome> enumerate_models(const ExactPrior& prior, const GeneratorGrid& gens,
                                           std::span<const ObsSymbol> obs, Framework framework,
                                           GeneratorScope scope, const BeliefTracker& tracker,
                                           std::size_t cap = 1'000'000);

struct PenaltyMap {
  std::size_t dimension = 0;
  std::vector<double> beliefs;  ///< flattened
  std::vector<double> values;   ///< minimum zero

  std::size_t size() const { return values.size(); }
  std::span<const double> belief(std::size_t i) const { return {beliefs.data() + i * dimension, dimension}; }
  long find(std::span<const double> q, double tol) const;
};

/// kappa_T by direct enumeration: minimum accumulated penalty per terminal
/// belief, shifted to minimum zero. Throws CapExceeded past `cap` models.
PenaltyMap oracle_penalty(const ExactPrior& prior, const GeneratorGrid& gens, std::span<const ObsSymbol> obs,
                          Framework framework, GeneratorScope scope, const BeliefTracker& tracker,
                          std::size_t cap = 1'000'000);

/// sup over models Q of { E_Q[phi(X_T)] - (alpha(Q) / k)^k' } with alpha the
/// normalized accumulated penalty.
double oracle_dr_direct(std::span<const double> phi, const ExactPrior& prior, const GeneratorGrid& gens,
                        std::span<const ObsSymbol> obs, Framework framework, GeneratorScope scope, double k,
                        double k_exp, const BeliefTracker& tracker, std::size_t cap = 1'000'000);

/// Root value of the backward recursion over all observation histories of
/// length T, with every node penalty obtained by enumeration. Dynamic scope
/// penalizes generators by gamma_{t+1}; static scope groups by generator.
double oracle_backward_expectation(std::span<const double> phi, const ExactPrior& prior, const GeneratorGrid& gens,
                                   std::size_t horizon, Framework framework, GeneratorScope scope, double k,
                                   double k_exp, const BeliefTracker& tracker);

/// Two-state constant chain with Bernoulli observations: state 1 emits
/// symbol 0 with probability a, state 2 with probability b.
struct BernoulliClosedForms {
  double a = 0.5;
  double b = 0.5;
  std::size_t successes = 0;  ///< count of symbol 0
  std::size_t failures = 0;   ///< count of symbol 1
  std::function<double(double)> kappa0;  ///< penalty as a function of log(p1 / p2)

  /// log(p_t^1/p_t^2) - log(p_0^1/p_0^2).
  double shift() const;
  /// Unnormalized StaticUP penalty at log-odds `ell`.
  double up_raw(double ell) const;
  /// Unnormalized StaticDR penalty at log-odds `ell`.
  double dr_raw(double ell) const;
  /// Both forms evaluated at `ells` and shifted to minimum zero over them.
  std::vector<double> up(std::span<const double> ells) const;
  std::vector<double> dr(std::span<const double> ells) const;
};

BernoulliClosedForms bernoulli_closed_forms(double a, double b, std::span<const ObsSymbol> obs,
                                            std::function<double(double)> kappa0);

struct OracleReport {
  std::string quantity;
  double oracle_value = 0.0;
  double engine_value = 0.0;
  double abs_diff = 0.0;
  std::string instance;
};

OracleReport make_report(std::string quantity, double oracle_value, double engine_value, std::string instance);

/// Header row plus one row per report.
void write_reports_csv(std::ostream& out, std::span<const OracleReport> reports);

}  // namespace ufilter::oracle
