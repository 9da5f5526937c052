#include "ufilter/model_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ufilter/errors.hpp"

namespace ufilter {

std::string_view to_string(Framework f) {
  return f == Framework::UncertainPrior ? "UP" : "DR";
}

std::string_view to_string(GeneratorScope s) {
  return s == GeneratorScope::Static ? "static" : "dynamic";
}

double normalize_min_zero(std::span<double> values) {
  double lo = kInf;
  for (double v : values) lo = std::min(lo, v);
  if (lo == kInf) return kInf;
  for (double& v : values) {
    if (v != kInf) v -= lo;
  }
  return lo;
}

namespace {

std::vector<double> checked_penalty(std::vector<double> values, std::size_t expected, const char* what) {
  if (values.size() != expected) {
    std::ostringstream msg;
    msg << what << " has " << values.size() << " entries, expected " << expected;
    throw ValidationError(msg.str());
  }
  for (double v : values) {
    if (std::isnan(v) || v == -kInf) throw ValidationError(std::string(what) + " has a NaN or -inf entry");
  }
  if (normalize_min_zero(values) == kInf) throw ValidationError(std::string(what) + " is +inf everywhere");
  return values;
}

}  // namespace

GeneratorGrid::GeneratorGrid(std::vector<Generator> candidates, std::vector<double> prior_penalty)
    : candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw ValidationError("generator grid is empty");
  const std::size_t n = candidates_.front().states();
  const std::size_t d = candidates_.front().symbols();
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (candidates_[i].states() != n || candidates_[i].symbols() != d) {
      throw ValidationError("generator candidates disagree on state or alphabet size");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (generator_distance(candidates_[i], candidates_[j]) <= 1e-12) {
        std::ostringstream msg;
        msg << "generator candidates " << j << " and " << i << " are duplicates";
        throw ValidationError(msg.str());
      }
    }
  }
  prior_penalty_ = checked_penalty(std::move(prior_penalty), candidates_.size(), "generator prior penalty");
}

GeneratorGrid::GeneratorGrid(Generator only) : GeneratorGrid(std::vector<Generator>{std::move(only)}, {0.0}) {}

void GeneratorGrid::set_control_penalties(std::vector<std::vector<double>> per_control) {
  std::vector<std::vector<double>> out;
  out.reserve(per_control.size());
  for (auto& table : per_control) {
    out.push_back(checked_penalty(std::move(table), candidates_.size(), "control generator penalty"));
  }
  control_penalties_ = std::move(out);
}

std::vector<double> gamma_at(const GeneratorGrid& grid, std::size_t t, std::span<const ObsSymbol> history,
                             std::optional<std::size_t> control) {
  if (t < 1) throw std::invalid_argument("gamma_at: t must be >= 1");
  if (grid.penalty_hook()) {
    return checked_penalty(grid.penalty_hook()(t, history, control), grid.size(), "hooked generator penalty");
  }
  if (control && grid.control_count() > 0) {
    if (*control >= grid.control_count()) throw ValidationError("control index out of range");
    auto table = grid.control_penalty(*control);
    return {table.begin(), table.end()};
  }
  auto prior = grid.prior_penalty();
  return {prior.begin(), prior.end()};
}

namespace {

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Number of ways to write s as an ordered sum of k nonnegative integers.
std::size_t compositions(std::size_t s, std::size_t k) {
  if (k == 0) return s == 0 ? 1 : 0;
  return binomial(s + k - 1, k - 1);
}

}  // namespace

std::size_t SimplexGrid::point_count(std::size_t dimension, std::size_t resolution) {
  return compositions(resolution, dimension);
}

SimplexGrid::SimplexGrid(std::size_t dimension, std::size_t resolution)
    : dim_(dimension), m_(resolution), count_(point_count(dimension, resolution)) {
  if (dim_ == 0) throw ValidationError("simplex dimension must be positive");
  if (m_ == 0) throw ValidationError("simplex resolution must be positive");
  coords_.reserve(count_ * dim_);
  beliefs_.reserve(count_ * dim_);
  std::vector<int> x(dim_, 0);
  const double scale = static_cast<double>(m_);
  // Lexicographic enumeration: position i ranges over 0..remaining, the last
  // position takes whatever is left.
  auto emit = [&](auto&& self, std::size_t pos, int remaining) -> void {
    if (pos + 1 == dim_) {
      x[pos] = remaining;
      coords_.insert(coords_.end(), x.begin(), x.end());
      for (int v : x) beliefs_.push_back(static_cast<double>(v) / scale);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      x[pos] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  emit(emit, 0, static_cast<int>(m_));
}

std::size_t SimplexGrid::index_of(std::span<const int> coords) const {
  if (coords.size() != dim_) throw ValidationError("coordinate dimension mismatch");
  std::size_t index = 0;
  std::size_t remaining = m_;
  for (std::size_t i = 0; i + 1 < dim_; ++i) {
    if (coords[i] < 0 || static_cast<std::size_t>(coords[i]) > remaining) {
      throw ValidationError("coordinates do not lie on the grid");
    }
    for (int v = 0; v < coords[i]; ++v) index += compositions(remaining - v, dim_ - i - 1);
    remaining -= static_cast<std::size_t>(coords[i]);
  }
  if (static_cast<std::size_t>(coords[dim_ - 1]) != remaining) throw ValidationError("coordinates do not sum to m");
  return index;
}

std::size_t SimplexGrid::nearest(std::span<const double> q) const {
  if (q.size() != dim_) throw ValidationError("belief dimension mismatch");
  // The nearest lattice point has every coordinate at floor or ceil of m q_i;
  // the units left over go to the largest fractional parts. Among equal
  // fractional parts the later coordinate wins, which gives the
  // lexicographically smaller (lower canonical index) point.
  std::vector<int> x(dim_);
  std::vector<double> frac(dim_);
  long assigned = 0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double y = std::max(0.0, q[i]) * static_cast<double>(m_);
    const double f = std::floor(y);
    x[i] = static_cast<int>(f);
    frac[i] = y - f;
    assigned += x[i];
  }
  long left = static_cast<long>(m_) - assigned;
  std::vector<std::size_t> order(dim_);
  for (std::size_t i = 0; i < dim_; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return a > b;
  });
  for (std::size_t k = 0; left > 0 && k < dim_; ++k, --left) ++x[order[k]];
  // Overshoot can only come from inputs that do not sum to one.
  for (std::size_t k = dim_; left < 0 && k > 0; --k) {
    const std::size_t i = order[k - 1];
    const long take = std::min<long>(x[i], -left);
    x[i] -= static_cast<int>(take);
    left += take;
  }
  return index_of(x);
}

ExactPrior make_exact_prior(std::size_t dimension, std::vector<std::vector<double>> beliefs,
                            std::vector<double> values) {
  if (beliefs.empty() || beliefs.size() != values.size()) {
    throw ValidationError("exact prior needs one value per belief and at least one belief");
  }
  ExactPrior prior;
  prior.dimension = dimension;
  for (auto& b : beliefs) {
    if (b.size() != dimension) throw ValidationError("exact prior belief has the wrong dimension");
    FilterState checked(b);
    prior.beliefs.insert(prior.beliefs.end(), checked.probs().begin(), checked.probs().end());
  }
  prior.values = checked_penalty(std::move(values), beliefs.size(), "exact prior penalty");
  return prior;
}

namespace {

const Generator& generator_for_step(const ModelPoint& model, const GeneratorGrid& gens, std::size_t t) {
  if (model.gen_indices.empty()) throw ValidationError("model point has no generator");
  const std::size_t k = model.gen_indices.size() == 1 ? model.gen_indices[0] : model.gen_indices.at(t - 1);
  if (k >= gens.size()) throw ValidationError("generator index out of range");
  return gens[k];
}

}  // namespace

double log_likelihood_obs(const ModelPoint& model, std::span<const ObsSymbol> obs, const SimplexGrid& beliefs,
                          const GeneratorGrid& gens) {
  if (model.p0_index >= beliefs.size()) throw ValidationError("initial belief index out of range");
  const std::size_t n = beliefs.dimension();
  std::vector<double> p(beliefs.belief(model.p0_index).begin(), beliefs.belief(model.p0_index).end());
  std::vector<double> next(n);
  double total = 0.0;
  for (std::size_t t = 1; t <= obs.size(); ++t) {
    const Generator& gen = generator_for_step(model, gens, t);
    if (obs[t - 1].index >= gen.symbols()) throw ValidationError("observation symbol out of range");
    const double mass = filter_update(p, gen, obs[t - 1].index, next);
    if (mass == 0.0) {
      std::ostringstream msg;
      msg << "observation at step " << t << " is impossible under the model";
      throw DegenerateObservation(msg.str());
    }
    total += std::log(mass);
    p.swap(next);
  }
  return total;
}

double uniform_reference_offset(std::size_t horizon, std::size_t symbols) {
  return static_cast<double>(horizon) * std::log(static_cast<double>(symbols));
}

double log_likelihood_full(const ModelPoint& model, const Path& path, const SimplexGrid& beliefs,
                           const GeneratorGrid& gens) {
  if (path.hidden.size() != path.observed.size() + 1) {
    throw ValidationError("path must hold one more hidden state than observations");
  }
  const std::size_t n = beliefs.dimension();
  auto p0 = beliefs.belief(model.p0_index);
  double total = std::log(p0[path.hidden[0]]) + std::log(static_cast<double>(n));
  for (std::size_t t = 1; t < path.hidden.size(); ++t) {
    const Generator& gen = generator_for_step(model, gens, t);
    total += std::log(gen.transition()(path.hidden[t], path.hidden[t - 1]));
    total += std::log(gen.emission()(path.hidden[t], path.observed[t - 1].index));
  }
  return total;
}

double model_prior_penalty(const ModelPoint& model, std::span<const ObsSymbol> obs, const PriorSpec& prior,
                           const GeneratorGrid& gens) {
  double total = prior.initial_penalty.at(model.p0_index);
  if (prior.generator_mode == GeneratorScope::Static) {
    return total + gens.prior_penalty()[model.gen_indices.at(0)];
  }
  for (std::size_t t = 1; t <= obs.size(); ++t) {
    const auto gamma = gamma_at(gens, t, obs.first(t - 1));
    const std::size_t k = model.gen_indices.size() == 1 ? model.gen_indices[0] : model.gen_indices.at(t - 1);
    total += gamma.at(k);
  }
  return total;
}

std::vector<double> divergences(std::span<const ModelPoint> model_class, std::span<const ObsSymbol> obs,
                                const PriorSpec& prior, const SimplexGrid& beliefs, const GeneratorGrid& gens) {
  if (model_class.empty()) throw ValidationError("model class is empty");
  std::vector<double> log_post(model_class.size(), -kInf);
  double best = -kInf;
  for (std::size_t i = 0; i < model_class.size(); ++i) {
    const double penalty = model_prior_penalty(model_class[i], obs, prior, gens);
    if (penalty == kInf) continue;
    try {
      log_post[i] = log_likelihood_obs(model_class[i], obs, beliefs, gens) - penalty;
    } catch (const DegenerateObservation&) {
      continue;
    }
    best = std::max(best, log_post[i]);
  }
  std::vector<double> out(model_class.size(), kInf);
  if (best == -kInf) return out;
  for (std::size_t i = 0; i < model_class.size(); ++i) {
    if (log_post[i] != -kInf) out[i] = best - log_post[i];
  }
  return out;
}

double divergence(const ModelPoint& model, std::span<const ObsSymbol> obs, std::span<const ModelPoint> model_class,
                  const PriorSpec& prior, const SimplexGrid& beliefs, const GeneratorGrid& gens) {
  std::vector<ModelPoint> all(model_class.begin(), model_class.end());
  all.push_back(model);
  return divergences(all, obs, prior, beliefs, gens).back();
}

}  // namespace ufilter
