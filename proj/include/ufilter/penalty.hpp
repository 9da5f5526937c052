#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "ufilter/model_space.hpp"

namespace ufilter {

/// Read-only pairing of beliefs with penalty values, shared by grid surfaces
/// and exactly tracked belief maps.
struct BeliefPenaltyView {
  std::size_t dimension = 0;
  std::span<const double> beliefs;  ///< flattened, point-major
  std::span<const double> values;

  std::size_t size() const { return values.size(); }
  std::span<const double> belief(std::size_t i) const { return beliefs.subspan(i * dimension, dimension); }
};

/// Penalty kappa_t on the points of a simplex grid. The minimum finite value
/// is zero unless the surface is flagged infeasible.
struct PenaltySurface {
  std::shared_ptr<const SimplexGrid> grid;
  std::vector<double> values;
  std::size_t time = 0;
  bool infeasible = false;

  std::size_t size() const { return values.size(); }
  BeliefPenaltyView view() const { return {grid->dimension(), grid->beliefs(), values}; }
};

/// Extended penalty K_t over (grid point, generator) pairs, stored cell-major.
struct ExtendedPenaltySurface {
  std::shared_ptr<const SimplexGrid> grid;
  std::size_t generators = 0;
  std::vector<double> values;
  std::size_t time = 0;
  bool infeasible = false;

  double at(std::size_t cell, std::size_t gen) const { return values[cell * generators + gen]; }
  /// kappa_t(p) = min over generators of K_t(p, A); +inf where every slice is.
  PenaltySurface collapse() const;
};

/// Which (source cell, generator) produced a destination value; -1 if none.
struct Provenance {
  long source = -1;
  long generator = -1;
  bool operator==(const Provenance&) const = default;
};

struct StepReport {
  double m_t = 0.0;                 ///< amount subtracted to restore minimum zero
  std::size_t infeasible_cells = 0; ///< destination cells left at +inf
  /// One entry per destination cell (per (cell, generator) pair for K).
  std::vector<Provenance> argmin_provenance;
};

/// Evaluates kappa0 at every grid point and shifts the result to minimum zero.
PenaltySurface project(const std::function<double(std::span<const double>)>& kappa0,
                       std::shared_ptr<const SimplexGrid> grid);

/// Wraps explicit per-point values (canonical order) as a normalized surface.
PenaltySurface surface_from_values(std::vector<double> values, std::shared_ptr<const SimplexGrid> grid);

/// K_0(p, A) = kappa_0(p) + gamma(A), normalized.
ExtendedPenaltySurface extend(const PenaltySurface& kappa0, std::span<const double> gamma);

/// One step of the dynamic-generator recursion. Every source cell p and
/// generator A with finite penalty is pushed through the filter, rounded to
/// the nearest cell, and offers kappa(p) + gamma(A) (minus log c_A(y; A p) in
/// DR mode). Each destination keeps its smallest offer; the global minimum is
/// then subtracted and reported as m_t. Throws Infeasible if nothing lands.
std::pair<PenaltySurface, StepReport> forward_image_step(const PenaltySurface& src, const GeneratorGrid& gens,
                                                         std::span<const double> gammas, ObsSymbol y,
                                                         Framework mode);

/// Static-generator version: each generator slice of K evolves on its own and
/// the minimum is taken over the whole product.
std::pair<ExtendedPenaltySurface, StepReport> forward_image_step(const ExtendedPenaltySurface& src,
                                                                 const GeneratorGrid& gens, ObsSymbol y,
                                                                 Framework mode);

struct EvolveResult {
  std::vector<PenaltySurface> kappa;             ///< kappa_0..kappa_T (collapsed K for static scope)
  std::vector<ExtendedPenaltySurface> extended;  ///< K_0..K_T, static scope only
  std::vector<StepReport> reports;               ///< one per observation
};

/// Runs the recursion selected by `prior` over the observation sequence.
/// Dynamic scope uses gamma_t = gamma_at(gens, t, y_1..y_{t-1}).
EvolveResult evolve(const PriorSpec& prior, const GeneratorGrid& gens, std::span<const ObsSymbol> obs,
                    std::shared_ptr<const SimplexGrid> grid);

/// Penalty on a finite set of exactly tracked beliefs.
struct ExactPenaltyMap {
  std::size_t dimension = 0;
  std::vector<double> beliefs;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::span<const double> belief(std::size_t i) const { return {beliefs.data() + i * dimension, dimension}; }
  BeliefPenaltyView view() const { return {dimension, beliefs, values}; }
  /// Index of a stored belief within `tol` in max-norm, or -1.
  long find(std::span<const double> q, double tol) const;
};

struct ExactTreeOptions {
  std::size_t cap = 1'000'000;  ///< maximum beliefs generated in one step
  double merge_tol = 1e-12;     ///< beliefs closer than this (max-norm) are identified
};

struct ExactEvolveResult {
  std::vector<ExactPenaltyMap> kappa;                  ///< kappa_0..kappa_T
  std::vector<std::vector<ExactPenaltyMap>> extended;  ///< static scope: [t][generator] slices of K_t
  std::vector<double> m;                               ///< m_1..m_T
};

/// Grid-free recursion over the beliefs reachable from the prior support.
/// Throws CapExceeded when a step would generate more than `options.cap`
/// beliefs, Infeasible when nothing survives a step.
ExactEvolveResult evolve_exact_tree(const ExactPrior& prior, const GeneratorGrid& gens,
                                    std::span<const ObsSymbol> obs, Framework framework, GeneratorScope scope,
                                    const ExactTreeOptions& options = {});

struct GridConvergenceReport {
  std::vector<std::size_t> resolutions;
  /// Per resolution, the max over t and grid cells c reached by the exact
  /// tree of |min{exact kappa_t(b) : b rounds to c} - grid kappa_t(c)|. A
  /// cell left at +inf by the grid is read at its nearest finite cell.
  std::vector<double> sup_errors;
  /// Per resolution, (t, cell) pairs reached exactly but +inf on the grid.
  std::vector<std::size_t> holes;
  bool monotone = false;  ///< errors non-increasing along `resolutions`
};

/// Compares dynamic-generator grid surfaces at each resolution against the
/// exact tree started from `exact_prior`. The grid prior is `kappa0`
/// projected onto each grid.
GridConvergenceReport grid_convergence(const std::function<double(std::span<const double>)>& kappa0,
                                       const ExactPrior& exact_prior, const GeneratorGrid& gens,
                                       std::span<const ObsSymbol> obs, Framework framework,
                                       std::span<const std::size_t> resolutions);

}  // namespace ufilter
