#include "ufilter/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ufilter/errors.hpp"
#include "ufilter/io.hpp"

namespace ufilter::oracle {

namespace {

double rho(double alpha, double k, double k_exp) {
  if (alpha == kInf) return kInf;
  if (k_exp == kInf) return alpha <= k ? 0.0 : kInf;
  return std::pow(alpha / k, k_exp);
}

bool close(std::span<const double> a, std::span<const double> b, double tol) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

// c_A(y; A p) for every y, straight from the matrices.
std::vector<double> predictive(std::span<const double> p, const Generator& g) {
  const std::size_t n = g.states();
  std::vector<double> ap(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) ap[i] += g.transition()(i, j) * p[j];
  std::vector<double> c(g.symbols(), 0.0);
  for (std::size_t y = 0; y < g.symbols(); ++y)
    for (std::size_t i = 0; i < n; ++i) c[y] += g.emission()(i, y) * ap[i];
  return c;
}

// Bayes update; returns false when y has zero probability.
bool bayes(std::vector<double>& p, const Generator& g, std::size_t y, double& mass) {
  const std::size_t n = g.states();
  std::vector<double> q(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double ap = 0.0;
    for (std::size_t j = 0; j < n; ++j) ap += g.transition()(i, j) * p[j];
    q[i] = g.emission()(i, y) * ap;
  }
  mass = 0.0;
  for (double v : q) mass += v;
  if (!(mass > 0.0)) return false;
  for (double& v : q) v /= mass;
  p = std::move(q);
  return true;
}

struct Group {
  std::vector<double> belief;
  std::size_t gen = 0;
  double value = kInf;
};

// Minimum penalty per terminal belief (per belief and generator when
// `by_generator`), normalized to minimum zero.
std::vector<Group> group_outcomes(const std::vector<ModelOutcome>& models, bool by_generator, double tol) {
  std::vector<Group> groups;
  for (const auto& m : models) {
    const std::size_t gen = by_generator ? m.path.front() : 0;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.gen == gen && close(g.belief, m.belief, tol); });
    if (it == groups.end()) {
      groups.push_back({m.belief, gen, m.penalty});
    } else {
      it->value = std::min(it->value, m.penalty);
    }
  }
  if (groups.empty()) throw Infeasible("no model is consistent with the observations");
  double lo = kInf;
  for (const auto& g : groups) lo = std::min(lo, g.value);
  for (auto& g : groups) g.value -= lo;
  return groups;
}

}  // namespace

std::vector<ModelOutcome> enumerate_models(const ExactPrior& prior, const GeneratorGrid& gens,
                                           std::span<const ObsSymbol> obs, Framework framework,
                                           GeneratorScope scope, const BeliefTracker& tracker, std::size_t cap) {
  const std::size_t T = obs.size();
  const std::size_t G = gens.size();
  const bool is_static = scope == GeneratorScope::Static;
  double paths = is_static ? static_cast<double>(G) : std::pow(static_cast<double>(G), static_cast<double>(T));
  if (paths * static_cast<double>(prior.size()) > static_cast<double>(cap)) {
    std::ostringstream msg;
    msg << "oracle enumeration exceeds the cap of " << cap << " models";
    throw CapExceeded(msg.str());
  }
  if (tracker.mode == BeliefTracker::Mode::GridRounding && !tracker.grid)
    throw ValidationError("grid rounding tracker needs a grid");

  std::vector<std::vector<double>> gammas;
  for (std::size_t t = 1; t <= T; ++t) gammas.push_back(gamma_at(gens, t, obs.first(t - 1)));

  std::vector<ModelOutcome> out;
  const std::size_t path_len = is_static ? 1 : T;
  std::vector<std::size_t> path(path_len, 0);
  for (std::size_t i = 0; i < prior.size(); ++i) {
    if (prior.values[i] == kInf) continue;
    std::fill(path.begin(), path.end(), 0);
    while (true) {
      ModelOutcome m;
      m.p0 = i;
      m.path = path;
      const auto b0 = prior.belief(i);
      m.belief.assign(b0.begin(), b0.end());
      m.penalty = prior.values[i];
      if (is_static) m.penalty += gens.prior_penalty()[path[0]];
      bool possible = true;
      for (std::size_t t = 1; t <= T && possible; ++t) {
        const std::size_t g = is_static ? path[0] : path[t - 1];
        if (!is_static) m.penalty += gammas[t - 1][g];
        double mass = 0.0;
        possible = bayes(m.belief, gens[g], obs[t - 1].index, mass);
        if (!possible) break;
        if (framework == Framework::DivergenceRobust) m.penalty -= std::log(mass);
        if (tracker.mode == BeliefTracker::Mode::GridRounding) {
          const auto cell = tracker.grid->belief(tracker.grid->nearest(m.belief));
          m.belief.assign(cell.begin(), cell.end());
        }
      }
      if (possible && m.penalty < kInf) out.push_back(std::move(m));
      std::size_t k = path_len;
      while (k > 0 && ++path[k - 1] == G) path[--k] = 0;
      if (k == 0) break;
    }
  }
  return out;
}

long PenaltyMap::find(std::span<const double> q, double tol) const {
  for (std::size_t i = 0; i < size(); ++i)
    if (close(belief(i), q, tol)) return static_cast<long>(i);
  return -1;
}

PenaltyMap oracle_penalty(const ExactPrior& prior, const GeneratorGrid& gens, std::span<const ObsSymbol> obs,
                          Framework framework, GeneratorScope scope, const BeliefTracker& tracker, std::size_t cap) {
  const auto models = enumerate_models(prior, gens, obs, framework, scope, tracker, cap);
  const auto groups = group_outcomes(models, false, tracker.match_tol);
  PenaltyMap map;
  map.dimension = prior.dimension;
  for (const auto& g : groups) {
    map.beliefs.insert(map.beliefs.end(), g.belief.begin(), g.belief.end());
    map.values.push_back(g.value);
  }
  return map;
}

double oracle_dr_direct(std::span<const double> phi, const ExactPrior& prior, const GeneratorGrid& gens,
                        std::span<const ObsSymbol> obs, Framework framework, GeneratorScope scope, double k,
                        double k_exp, const BeliefTracker& tracker, std::size_t cap) {
  const auto models = enumerate_models(prior, gens, obs, framework, scope, tracker, cap);
  if (models.empty()) throw Infeasible("no model is consistent with the observations");
  double lo = kInf;
  for (const auto& m : models) lo = std::min(lo, m.penalty);
  double best = -kInf;
  for (const auto& m : models) {
    const double r = rho(m.penalty - lo, k, k_exp);
    if (r == kInf) continue;
    double e = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) e += m.belief[i] * phi[i];
    best = std::max(best, e - r);
  }
  return best;
}

namespace {

struct BackwardOracle {
  std::span<const double> phi;
  const ExactPrior& prior;
  const GeneratorGrid& gens;
  std::size_t horizon;
  Framework framework;
  GeneratorScope scope;
  double k, k_exp;
  const BeliefTracker& tracker;

  double value(ObsSequence& history) const {
    const bool is_static = scope == GeneratorScope::Static;
    const auto models = enumerate_models(prior, gens, history, framework, scope, tracker);
    const auto groups = group_outcomes(models, is_static, tracker.match_tol);
    double best = -kInf;
    if (history.size() == horizon) {
      for (const auto& g : groups) {
        const double r = rho(g.value, k, k_exp);
        if (r == kInf) continue;
        double e = 0.0;
        for (std::size_t i = 0; i < phi.size(); ++i) e += g.belief[i] * phi[i];
        best = std::max(best, e - r);
      }
      return best;
    }
    std::vector<double> next(gens.symbols());
    for (std::size_t y = 0; y < next.size(); ++y) {
      history.push_back(ObsSymbol{y});
      next[y] = value(history);
      history.pop_back();
    }
    const auto gamma = gamma_at(gens, history.size() + 1, history);
    for (const auto& g : groups) {
      const std::size_t lo = is_static ? g.gen : 0;
      const std::size_t hi = is_static ? g.gen + 1 : gens.size();
      for (std::size_t a = lo; a < hi; ++a) {
        const double r = rho(is_static ? g.value : g.value + gamma[a], k, k_exp);
        if (r == kInf) continue;
        const auto c = predictive(g.belief, gens[a]);
        double e = 0.0;
        for (std::size_t y = 0; y < c.size(); ++y) e += next[y] * c[y];
        best = std::max(best, e - r);
      }
    }
    return best;
  }
};

}  // namespace

double oracle_backward_expectation(std::span<const double> phi, const ExactPrior& prior, const GeneratorGrid& gens,
                                   std::size_t horizon, Framework framework, GeneratorScope scope, double k,
                                   double k_exp, const BeliefTracker& tracker) {
  BackwardOracle o{phi, prior, gens, horizon, framework, scope, k, k_exp, tracker};
  ObsSequence history;
  return o.value(history);
}

double BernoulliClosedForms::shift() const {
  return static_cast<double>(successes) * std::log(a / b) +
         static_cast<double>(failures) * std::log((1.0 - a) / (1.0 - b));
}

double BernoulliClosedForms::up_raw(double ell) const { return kappa0(ell - shift()); }

double BernoulliClosedForms::dr_raw(double ell) const {
  const double ell0 = ell - shift();
  // p0^1 = 1 / (1 + e^{-ell0}), p0^2 = 1 - p0^1
  const double p1 = 1.0 / (1.0 + std::exp(-ell0));
  const double p2 = 1.0 / (1.0 + std::exp(ell0));
  const double s = static_cast<double>(successes), f = static_cast<double>(failures);
  const double mix = p1 * std::pow(a, s) * std::pow(1.0 - a, f) + p2 * std::pow(b, s) * std::pow(1.0 - b, f);
  return kappa0(ell0) - std::log(mix);
}

namespace {

std::vector<double> normalized(std::vector<double> v) {
  double lo = kInf;
  for (double x : v) lo = std::min(lo, x);
  if (lo < kInf)
    for (double& x : v) x -= lo;
  return v;
}

}  // namespace

std::vector<double> BernoulliClosedForms::up(std::span<const double> ells) const {
  std::vector<double> v;
  for (double e : ells) v.push_back(up_raw(e));
  return normalized(std::move(v));
}

std::vector<double> BernoulliClosedForms::dr(std::span<const double> ells) const {
  std::vector<double> v;
  for (double e : ells) v.push_back(dr_raw(e));
  return normalized(std::move(v));
}

BernoulliClosedForms bernoulli_closed_forms(double a, double b, std::span<const ObsSymbol> obs,
                                            std::function<double(double)> kappa0) {
  if (!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0)) throw ValidationError("a and b must lie in (0, 1)");
  BernoulliClosedForms f;
  f.a = a;
  f.b = b;
  f.kappa0 = std::move(kappa0);
  for (const auto& y : obs) {
    if (y.index > 1) throw ValidationError("Bernoulli observations must be 0 or 1");
    (y.index == 0 ? f.successes : f.failures)++;
  }
  return f;
}

OracleReport make_report(std::string quantity, double oracle_value, double engine_value, std::string instance) {
  double diff;
  if (oracle_value == engine_value) {
    diff = 0.0;
  } else {
    diff = std::abs(oracle_value - engine_value);
    if (std::isnan(diff)) diff = kInf;
  }
  return {std::move(quantity), oracle_value, engine_value, diff, std::move(instance)};
}

void write_reports_csv(std::ostream& out, std::span<const OracleReport> reports) {
  out << "quantity,oracle_value,engine_value,abs_diff,instance\n";
  for (const auto& r : reports)
    out << r.quantity << ',' << io::format_double(r.oracle_value) << ',' << io::format_double(r.engine_value) << ','
        << io::format_double(r.abs_diff) << ',' << r.instance << '\n';
}

}  // namespace ufilter::oracle
