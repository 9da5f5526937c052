#include "ufilter/hmm.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ufilter/errors.hpp"

namespace ufilter {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

namespace {

void check_entries(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError(std::string(what) + " has a negative or non-finite entry");
    }
  }
}

std::size_t sample_index(std::mt19937_64& rng, std::span<const double> probs) {
  const double u = unit_uniform(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace

Generator::Generator(Matrix transition, Matrix emission)
    : transition_(std::move(transition)), emission_(std::move(emission)) {
  const std::size_t n = transition_.rows();
  if (n == 0 || transition_.cols() != n) throw ValidationError("transition matrix must be square and nonempty");
  if (emission_.rows() != n || emission_.cols() == 0) {
    throw ValidationError("emission matrix must have one row per hidden state");
  }
  check_entries(transition_, "transition matrix");
  check_entries(emission_, "emission matrix");
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += transition_(i, j);
    if (std::abs(sum - 1.0) > kStochasticTol) {
      std::ostringstream msg;
      msg << "transition column " << j << " sums to " << sum << ", expected 1";
      throw ValidationError(msg.str());
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double v : emission_.row(i)) sum += v;
    if (std::abs(sum - 1.0) > kStochasticTol) {
      std::ostringstream msg;
      msg << "emission row " << i << " sums to " << sum << ", expected 1";
      throw ValidationError(msg.str());
    }
  }
}

double generator_distance(const Generator& a, const Generator& b) {
  return std::max(max_abs_diff(a.transition(), b.transition()), max_abs_diff(a.emission(), b.emission()));
}

FilterState::FilterState(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ValidationError("filter state must be nonempty");
  double sum = 0.0;
  for (double v : probs_) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("filter state has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kStochasticTol) throw ValidationError("filter state does not sum to 1");
}

FilterState FilterState::normalized(std::vector<double> weights) {
  double sum = 0.0;
  for (double v : weights) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("weights must be finite and nonnegative");
    sum += v;
  }
  if (!(sum > 0.0)) throw ValidationError("weights have zero total mass");
  for (double& v : weights) v /= sum;
  return FilterState(std::move(weights), Unchecked{});
}

FilterState FilterState::uniform(std::size_t n) {
  return FilterState(std::vector<double>(n, 1.0 / static_cast<double>(n)), Unchecked{});
}

FilterState FilterState::vertex(std::size_t n, std::size_t i) {
  std::vector<double> v(n, 0.0);
  v.at(i) = 1.0;
  return FilterState(std::move(v), Unchecked{});
}

FilterState predict(const FilterState& p, const Generator& gen) {
  const std::size_t n = gen.states();
  if (p.size() != n) throw ValidationError("belief dimension does not match generator");
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += gen.transition()(i, j) * p[j];
    out[i] = acc;
  }
  return FilterState::normalized(std::move(out));
}

void predictive_masses(std::span<const double> p, const Generator& gen, std::span<double> out) {
  const std::size_t n = gen.states();
  const std::size_t d = gen.symbols();
  for (std::size_t y = 0; y < d; ++y) out[y] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < n; ++j) pred += gen.transition()(i, j) * p[j];
    for (std::size_t y = 0; y < d; ++y) out[y] += pred * gen.emission()(i, y);
  }
}

std::vector<double> obs_predictive(const FilterState& p, const Generator& gen) {
  if (p.size() != gen.states()) throw ValidationError("belief dimension does not match generator");
  std::vector<double> out(gen.symbols());
  predictive_masses(p.probs(), gen, out);
  return out;
}

double filter_update(std::span<const double> p, const Generator& gen, std::size_t y, std::span<double> out) {
  const std::size_t n = gen.states();
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < n; ++j) pred += gen.transition()(i, j) * p[j];
    out[i] = gen.emission()(i, y) * pred;
    mass += out[i];
  }
  if (!(mass > 0.0)) return 0.0;
  for (std::size_t i = 0; i < n; ++i) out[i] /= mass;
  return mass;
}

FilterState filter_step(const FilterState& p, const Generator& gen, ObsSymbol y) {
  if (p.size() != gen.states()) throw ValidationError("belief dimension does not match generator");
  if (y.index >= gen.symbols()) throw ValidationError("observation symbol out of range");
  std::vector<double> out(gen.states());
  if (filter_update(p.probs(), gen, y.index, out) == 0.0) {
    std::ostringstream msg;
    msg << "symbol " << y.index << " has zero predictive probability";
    throw DegenerateObservation(msg.str());
  }
  return FilterState::normalized(std::move(out));
}

Path simulate_path(std::span<const Generator> gen_seq, const FilterState& p0, std::size_t horizon,
                   std::uint64_t seed) {
  if (gen_seq.size() < horizon) throw ValidationError("generator sequence shorter than horizon");
  std::mt19937_64 rng(seed);
  Path path;
  path.seed = seed;
  path.hidden.reserve(horizon + 1);
  path.observed.reserve(horizon);
  path.hidden.push_back(sample_index(rng, p0.probs()));
  for (std::size_t t = 1; t <= horizon; ++t) {
    const Generator& gen = gen_seq[t - 1];
    if (gen.states() != p0.size()) throw ValidationError("generator dimension does not match initial belief");
    const auto column = gen.transition().column(path.hidden.back());
    const std::size_t x = sample_index(rng, column);
    path.hidden.push_back(x);
    path.observed.push_back(ObsSymbol{sample_index(rng, gen.emission().row(x))});
  }
  return path;
}

}  // namespace ufilter
