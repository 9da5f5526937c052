#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ufilter/control.hpp"

namespace ufilter {

/// Named initial penalty shapes.
struct PriorShape {
  enum class Kind { Zero, PointMass, AbsLogOdds, Quadratic, Table };
  Kind kind = Kind::Zero;
  std::vector<double> belief;  ///< PointMass location, Quadratic centre
  double scale = 1.0;          ///< AbsLogOdds: scale * max_{i,j} |log(p_i / p_j)|; Quadratic: scale * |p - centre|^2
  std::vector<double> table;   ///< Table: one value per grid point, canonical order

  /// Penalty as a function of the belief; Table has none and throws.
  std::function<double(std::span<const double>)> function() const;
  /// Values on every point of `grid` (PointMass: 0 at the nearest cell).
  std::vector<double> on_grid(const SimplexGrid& grid) const;
};

struct SimulationSpec {
  std::size_t generator = 0;
  std::vector<double> initial_belief;
  std::uint64_t seed = 0;
};

struct FilterSpec {
  std::size_t generator = 0;
  std::vector<double> initial_belief;
};

struct ControlSpec {
  std::size_t controls = 0;
  std::vector<std::vector<double>> generator_penalties;  ///< [u][generator]
  std::vector<std::vector<double>> running_cost;         ///< [t][u], t = 0..T-1
  std::vector<double> terminal_cost;                     ///< one per state
  bool penalize_generators = true;
  TerminalRule terminal_rule = TerminalRule::UpperExpectation;
  std::size_t state_cap = 20000;
};

struct ConvergenceSpec {
  std::vector<std::size_t> resolutions;
  std::size_t exact_support_resolution = 0;
};

struct OracleSpec {
  std::size_t phi_samples = 50;
  std::uint64_t seed = 1;
  double tolerance = 1e-9;
};

struct RunConfig {
  std::size_t states = 0;
  std::size_t symbols = 0;
  std::size_t horizon = 0;
  std::size_t grid_resolution = 10;
  Framework framework = Framework::DivergenceRobust;
  GeneratorScope scope = GeneratorScope::Dynamic;
  UncertaintyParams params;
  std::vector<Generator> generators;
  std::vector<double> generator_penalty;
  PriorShape prior;
  std::optional<ExactPrior> exact_prior;
  std::optional<ObsSequence> observations;
  std::optional<SimulationSpec> simulation;
  std::optional<FilterSpec> filter;
  std::optional<std::vector<double>> phi;
  std::optional<ControlSpec> control;
  std::optional<ConvergenceSpec> convergence;
  OracleSpec oracle;

  GeneratorGrid generator_grid() const;
  PriorSpec prior_spec(const SimplexGrid& grid) const;
};

/// Parses and validates a JSON document. Every problem raises ValidationError
/// naming the offending field.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Control problem described by the config's control block.
ControlProblem make_control_problem(const RunConfig& c);

}  // namespace ufilter
