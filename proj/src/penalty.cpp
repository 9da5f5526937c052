#include "ufilter/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "belief_index.hpp"
#include "ufilter/errors.hpp"
#include "ufilter/parallel.hpp"

namespace ufilter {

namespace {

void check_step_inputs(const SimplexGrid& grid, const GeneratorGrid& gens, ObsSymbol y) {
  if (grid.dimension() != gens.states()) throw ValidationError("grid dimension does not match generator states");
  if (y.index >= gens.symbols()) throw ValidationError("observation symbol out of range");
}

// Pushes every active (source cell, generator) pair through the filter.
// dest[s * G + g] receives the destination cell (-1 when inactive or
// degenerate) and log_mass the log predictive probability of y.
template <typename Active>
void push_forward(const SimplexGrid& grid, const GeneratorGrid& gens, ObsSymbol y, Active&& active,
                  std::vector<long>& dest, std::vector<double>& log_mass) {
  const std::size_t cells = grid.size();
  const std::size_t n_gen = gens.size();
  dest.assign(cells * n_gen, -1);
  log_mass.assign(cells * n_gen, 0.0);
  parallel_for(cells, [&](std::size_t begin, std::size_t end) {
    std::vector<double> next(grid.dimension());
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t g = 0; g < n_gen; ++g) {
        if (!active(s, g)) continue;
        const double mass = filter_update(grid.belief(s), gens[g], y.index, next);
        if (mass == 0.0) continue;
        dest[s * n_gen + g] = static_cast<long>(grid.nearest(next));
        log_mass[s * n_gen + g] = std::log(mass);
      }
    }
  });
}

[[noreturn]] void throw_infeasible(std::size_t time, ObsSymbol y) {
  std::ostringstream msg;
  msg << "penalty surface is +inf everywhere after step " << time << " (symbol " << y.index
      << "): the observation is impossible under every admissible model";
  throw Infeasible(msg.str());
}

std::size_t count_inf(std::span<const double> values) {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), kInf));
}

}  // namespace

PenaltySurface ExtendedPenaltySurface::collapse() const {
  PenaltySurface out{grid, std::vector<double>(grid->size(), kInf), time, infeasible};
  for (std::size_t c = 0; c < grid->size(); ++c) {
    for (std::size_t g = 0; g < generators; ++g) out.values[c] = std::min(out.values[c], at(c, g));
  }
  return out;
}

PenaltySurface surface_from_values(std::vector<double> values, std::shared_ptr<const SimplexGrid> grid) {
  if (values.size() != grid->size()) {
    std::ostringstream msg;
    msg << "penalty table has " << values.size() << " values, grid has " << grid->size() << " points";
    throw ValidationError(msg.str());
  }
  for (double v : values) {
    if (std::isnan(v) || v == -kInf) throw ValidationError("penalty values must be real or +inf");
  }
  PenaltySurface out{std::move(grid), std::move(values), 0, false};
  out.infeasible = normalize_min_zero(out.values) == kInf;
  return out;
}

PenaltySurface project(const std::function<double(std::span<const double>)>& kappa0,
                       std::shared_ptr<const SimplexGrid> grid) {
  std::vector<double> values(grid->size());
  for (std::size_t i = 0; i < grid->size(); ++i) values[i] = kappa0(grid->belief(i));
  return surface_from_values(std::move(values), std::move(grid));
}

ExtendedPenaltySurface extend(const PenaltySurface& kappa0, std::span<const double> gamma) {
  ExtendedPenaltySurface out{kappa0.grid, gamma.size(), std::vector<double>(kappa0.size() * gamma.size()), kappa0.time,
                             false};
  for (std::size_t c = 0; c < kappa0.size(); ++c) {
    for (std::size_t g = 0; g < gamma.size(); ++g) out.values[c * gamma.size() + g] = kappa0.values[c] + gamma[g];
  }
  out.infeasible = normalize_min_zero(out.values) == kInf;
  return out;
}

std::pair<PenaltySurface, StepReport> forward_image_step(const PenaltySurface& src, const GeneratorGrid& gens,
                                                         std::span<const double> gammas, ObsSymbol y,
                                                         Framework mode) {
  const SimplexGrid& grid = *src.grid;
  check_step_inputs(grid, gens, y);
  if (gammas.size() != gens.size()) throw ValidationError("gamma vector does not match generator grid");
  const std::size_t n_gen = gens.size();

  std::vector<long> dest;
  std::vector<double> log_mass;
  push_forward(
      grid, gens, y, [&](std::size_t s, std::size_t g) { return src.values[s] != kInf && gammas[g] != kInf; }, dest,
      log_mass);

  PenaltySurface out{src.grid, std::vector<double>(grid.size(), kInf), src.time + 1, false};
  StepReport report;
  report.argmin_provenance.assign(grid.size(), Provenance{});
  for (std::size_t s = 0; s < grid.size(); ++s) {
    for (std::size_t g = 0; g < n_gen; ++g) {
      const long c = dest[s * n_gen + g];
      if (c < 0) continue;
      double offer = src.values[s] + gammas[g];
      if (mode == Framework::DivergenceRobust) offer -= log_mass[s * n_gen + g];
      if (offer < out.values[c]) {
        out.values[c] = offer;
        report.argmin_provenance[c] = Provenance{static_cast<long>(s), static_cast<long>(g)};
      }
    }
  }
  report.m_t = normalize_min_zero(out.values);
  if (report.m_t == kInf) throw_infeasible(out.time, y);
  report.infeasible_cells = count_inf(out.values);
  return {std::move(out), std::move(report)};
}

std::pair<ExtendedPenaltySurface, StepReport> forward_image_step(const ExtendedPenaltySurface& src,
                                                                 const GeneratorGrid& gens, ObsSymbol y,
                                                                 Framework mode) {
  const SimplexGrid& grid = *src.grid;
  check_step_inputs(grid, gens, y);
  if (src.generators != gens.size()) throw ValidationError("extended surface does not match generator grid");
  const std::size_t n_gen = gens.size();

  std::vector<long> dest;
  std::vector<double> log_mass;
  push_forward(
      grid, gens, y, [&](std::size_t s, std::size_t g) { return src.at(s, g) != kInf; }, dest, log_mass);

  ExtendedPenaltySurface out{src.grid, n_gen, std::vector<double>(grid.size() * n_gen, kInf), src.time + 1, false};
  StepReport report;
  report.argmin_provenance.assign(grid.size() * n_gen, Provenance{});
  for (std::size_t s = 0; s < grid.size(); ++s) {
    for (std::size_t g = 0; g < n_gen; ++g) {
      const long c = dest[s * n_gen + g];
      if (c < 0) continue;
      double offer = src.at(s, g);
      if (mode == Framework::DivergenceRobust) offer -= log_mass[s * n_gen + g];
      const std::size_t slot = static_cast<std::size_t>(c) * n_gen + g;
      if (offer < out.values[slot]) {
        out.values[slot] = offer;
        report.argmin_provenance[slot] = Provenance{static_cast<long>(s), static_cast<long>(g)};
      }
    }
  }
  report.m_t = normalize_min_zero(out.values);
  if (report.m_t == kInf) throw_infeasible(out.time, y);
  report.infeasible_cells = count_inf(out.values);
  return {std::move(out), std::move(report)};
}

EvolveResult evolve(const PriorSpec& prior, const GeneratorGrid& gens, std::span<const ObsSymbol> obs,
                    std::shared_ptr<const SimplexGrid> grid) {
  EvolveResult result;
  PenaltySurface kappa0 = surface_from_values(prior.initial_penalty, grid);
  if (kappa0.infeasible) throw Infeasible("initial penalty is +inf everywhere");
  if (prior.generator_mode == GeneratorScope::Dynamic) {
    result.kappa.push_back(std::move(kappa0));
    for (std::size_t t = 1; t <= obs.size(); ++t) {
      const auto gamma = gamma_at(gens, t, obs.first(t - 1));
      auto [next, report] = forward_image_step(result.kappa.back(), gens, gamma, obs[t - 1], prior.framework);
      result.kappa.push_back(std::move(next));
      result.reports.push_back(std::move(report));
    }
    return result;
  }
  result.extended.push_back(extend(kappa0, gens.prior_penalty()));
  result.kappa.push_back(result.extended.back().collapse());
  for (std::size_t t = 1; t <= obs.size(); ++t) {
    auto [next, report] = forward_image_step(result.extended.back(), gens, obs[t - 1], prior.framework);
    result.kappa.push_back(next.collapse());
    result.extended.push_back(std::move(next));
    result.reports.push_back(std::move(report));
  }
  return result;
}

long ExactPenaltyMap::find(std::span<const double> q, double tol) const {
  for (std::size_t i = 0; i < size(); ++i) {
    auto b = belief(i);
    bool close = true;
    for (std::size_t k = 0; k < dimension && close; ++k) close = std::abs(b[k] - q[k]) <= tol;
    if (close) return static_cast<long>(i);
  }
  return -1;
}

namespace {

// Min-accumulates penalty offers on exactly tracked beliefs, identifying
// beliefs closer than the merge tolerance.
class ExactAccumulator {
 public:
  ExactAccumulator(std::size_t dimension, double tol) : index_(dimension, tol) { map_.dimension = dimension; }

  void offer(std::span<const double> b, double value) {
    const long i = index_.find(b, map_.beliefs);
    if (i < 0) {
      index_.insert(b, map_.size());
      map_.beliefs.insert(map_.beliefs.end(), b.begin(), b.end());
      map_.values.push_back(value);
    } else if (value < map_.values[i]) {
      map_.values[i] = value;
    }
  }

  ExactPenaltyMap take() { return std::move(map_); }

 private:
  ExactPenaltyMap map_;
  detail::BeliefIndex index_;
};

// Pushes one penalty map through the filter for the generators allowed by
// gamma (+inf entries are skipped); `gamma` holds the penalty added per step.
ExactPenaltyMap exact_step(const ExactPenaltyMap& src, const GeneratorGrid& gens, std::span<const double> gamma,
                           std::span<const std::size_t> allowed, ObsSymbol y, Framework mode, double tol) {
  ExactAccumulator acc(src.dimension, tol);
  std::vector<double> next(src.dimension);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src.values[i] == kInf) continue;
    for (std::size_t g : allowed) {
      if (gamma[g] == kInf) continue;
      const double mass = filter_update(src.belief(i), gens[g], y.index, next);
      if (mass == 0.0) continue;
      double value = src.values[i] + gamma[g];
      if (mode == Framework::DivergenceRobust) value -= std::log(mass);
      acc.offer(next, value);
    }
  }
  return acc.take();
}

void check_cap(std::size_t produced, const ExactTreeOptions& options, std::size_t t) {
  if (produced > options.cap) {
    std::ostringstream msg;
    msg << "exact tree step " << t << " would track " << produced << " beliefs (cap " << options.cap << ")";
    throw CapExceeded(msg.str());
  }
}

}  // namespace

ExactEvolveResult evolve_exact_tree(const ExactPrior& prior, const GeneratorGrid& gens,
                                    std::span<const ObsSymbol> obs, Framework framework, GeneratorScope scope,
                                    const ExactTreeOptions& options) {
  if (prior.dimension != gens.states()) throw ValidationError("prior dimension does not match generator states");
  for (auto y : obs) {
    if (y.index >= gens.symbols()) throw ValidationError("observation symbol out of range");
  }
  ExactEvolveResult result;
  ExactPenaltyMap kappa0{prior.dimension, prior.beliefs, prior.values};
  check_cap(kappa0.size(), options, 0);
  const std::size_t n_gen = gens.size();

  if (scope == GeneratorScope::Dynamic) {
    std::vector<std::size_t> all(n_gen);
    for (std::size_t g = 0; g < n_gen; ++g) all[g] = g;
    result.kappa.push_back(std::move(kappa0));
    for (std::size_t t = 1; t <= obs.size(); ++t) {
      check_cap(result.kappa.back().size() * n_gen, options, t);
      const auto gamma = gamma_at(gens, t, obs.first(t - 1));
      auto next = exact_step(result.kappa.back(), gens, gamma, all, obs[t - 1], framework, options.merge_tol);
      const double m = normalize_min_zero(next.values);
      if (m == kInf || next.size() == 0) throw Infeasible("exact tree: observation impossible under every model");
      result.m.push_back(m);
      result.kappa.push_back(std::move(next));
    }
    return result;
  }

  // Static scope: slice g of K_0 is kappa_0 + gamma(g); slices never mix.
  std::vector<ExactPenaltyMap> slices;
  const std::vector<double> zero(n_gen, 0.0);
  for (std::size_t g = 0; g < n_gen; ++g) {
    ExactPenaltyMap slice = kappa0;
    for (double& v : slice.values) v += gens.prior_penalty()[g];
    slices.push_back(std::move(slice));
  }
  auto collapse = [&](const std::vector<ExactPenaltyMap>& ks) {
    ExactAccumulator acc(prior.dimension, options.merge_tol);
    for (const auto& slice : ks) {
      for (std::size_t i = 0; i < slice.size(); ++i) {
        if (slice.values[i] != kInf) acc.offer(slice.belief(i), slice.values[i]);
      }
    }
    return acc.take();
  };
  result.kappa.push_back(collapse(slices));
  result.extended.push_back(slices);
  for (std::size_t t = 1; t <= obs.size(); ++t) {
    std::size_t produced = 0;
    for (const auto& s : slices) produced += s.size();
    check_cap(produced, options, t);
    std::vector<ExactPenaltyMap> next(n_gen);
    double lo = kInf;
    for (std::size_t g = 0; g < n_gen; ++g) {
      const std::size_t only[] = {g};
      next[g] = exact_step(slices[g], gens, zero, only, obs[t - 1], framework, options.merge_tol);
      for (double v : next[g].values) lo = std::min(lo, v);
    }
    if (lo == kInf) throw Infeasible("exact tree: observation impossible under every model");
    for (auto& slice : next) {
      for (double& v : slice.values) v -= lo;
    }
    result.m.push_back(lo);
    slices = std::move(next);
    result.kappa.push_back(collapse(slices));
    result.extended.push_back(slices);
  }
  return result;
}

namespace {

// Nearest cell (Euclidean, lowest index on ties) where `values` is finite.
long nearest_finite(const SimplexGrid& grid, std::span<const double> values, std::size_t cell) {
  long best = -1;
  double best_d = kInf;
  const auto b = grid.belief(cell);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    if (values[c] == kInf) continue;
    const auto q = grid.belief(c);
    double d = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) d += (q[i] - b[i]) * (q[i] - b[i]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<long>(c);
    }
  }
  return best;
}

}  // namespace

GridConvergenceReport grid_convergence(const std::function<double(std::span<const double>)>& kappa0,
                                       const ExactPrior& exact_prior, const GeneratorGrid& gens,
                                       std::span<const ObsSymbol> obs, Framework framework,
                                       std::span<const std::size_t> resolutions) {
  const auto exact = evolve_exact_tree(exact_prior, gens, obs, framework, GeneratorScope::Dynamic);
  GridConvergenceReport report;
  report.resolutions.assign(resolutions.begin(), resolutions.end());
  for (std::size_t m : resolutions) {
    auto grid = std::make_shared<const SimplexGrid>(gens.states(), m);
    PriorSpec prior{project(kappa0, grid).values, GeneratorScope::Dynamic, framework};
    const auto run = evolve(prior, gens, obs, grid);
    double worst = 0.0;
    std::size_t holes = 0;
    for (std::size_t t = 0; t < exact.kappa.size(); ++t) {
      const auto& map = exact.kappa[t];
      const auto& surface = run.kappa[t].values;
      std::vector<double> cell_min(grid->size(), kInf);
      for (std::size_t i = 0; i < map.size(); ++i) {
        if (map.values[i] == kInf) continue;
        double& v = cell_min[grid->nearest(map.belief(i))];
        v = std::min(v, map.values[i]);
      }
      for (std::size_t c = 0; c < grid->size(); ++c) {
        if (cell_min[c] == kInf) continue;
        double g = surface[c];
        if (g == kInf) {
          ++holes;
          const long n = nearest_finite(*grid, surface, c);
          g = n < 0 ? kInf : surface[static_cast<std::size_t>(n)];
        }
        worst = std::max(worst, g == kInf ? kInf : std::abs(g - cell_min[c]));
      }
    }
    report.sup_errors.push_back(worst);
    report.holes.push_back(holes);
  }
  report.monotone = std::is_sorted(report.sup_errors.rbegin(), report.sup_errors.rend());
  return report;
}

}  // namespace ufilter
