#include "ufilter/expectation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ufilter/errors.hpp"
#include "ufilter/parallel.hpp"

namespace ufilter {

UncertaintyParams UncertaintyParams::make(double k, double k_exp) {
  if (!(k > 0.0) || !std::isfinite(k)) throw ValidationError("uncertainty aversion k must be positive and finite");
  if (!(k_exp >= 1.0)) throw ValidationError("exponent k' must be at least 1");
  return {k, k_exp};
}

double penalty_to_rho(double alpha, const UncertaintyParams& params) {
  if (alpha == kInf) return kInf;
  const double ratio = std::max(alpha, 0.0) / params.k;
  if (params.k_exp == kInf) return ratio <= 1.0 ? 0.0 : kInf;
  return std::pow(ratio, params.k_exp);
}

SupResult dr_expectation(std::span<const double> phi, const BeliefPenaltyView& kappa,
                         const UncertaintyParams& params) {
  if (phi.size() != kappa.dimension) throw ValidationError("functional length does not match state count");
  SupResult best{-kInf, -1};
  for (std::size_t i = 0; i < kappa.size(); ++i) {
    const double rho = penalty_to_rho(kappa.values[i], params);
    if (rho == kInf) continue;
    const auto q = kappa.belief(i);
    double v = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) v += q[j] * phi[j];
    v -= rho;
    if (v > best.value) best = {v, static_cast<long>(i)};
  }
  if (best.argmax < 0) throw Infeasible("penalty admits no belief");
  return best;
}

SupResult dr_expectation(std::span<const double> phi, const PenaltySurface& kappa, const UncertaintyParams& params) {
  if (kappa.infeasible) throw Infeasible("penalty surface is infeasible");
  return dr_expectation(phi, kappa.view(), params);
}

JointPenalty JointPenalty::dynamic(const BeliefPenaltyView& kappa, std::span<const double> gamma) {
  JointPenalty out;
  out.dimension = kappa.dimension;
  out.generators = gamma.size();
  out.beliefs.assign(kappa.beliefs.begin(), kappa.beliefs.end());
  out.values.resize(kappa.size() * gamma.size());
  for (std::size_t i = 0; i < kappa.size(); ++i)
    for (std::size_t g = 0; g < gamma.size(); ++g) out.values[i * gamma.size() + g] = kappa.values[i] + gamma[g];
  return out;
}

JointPenalty JointPenalty::fixed(const ExtendedPenaltySurface& extended) {
  JointPenalty out;
  out.dimension = extended.grid->dimension();
  out.generators = extended.generators;
  const auto b = extended.grid->beliefs();
  out.beliefs.assign(b.begin(), b.end());
  out.values = extended.values;
  return out;
}

OneStepExpectation::OneStepExpectation(const JointPenalty& penalty, const GeneratorGrid& gens,
                                       const UncertaintyParams& params)
    : symbols_(gens.symbols()) {
  if (penalty.generators != gens.size()) throw ValidationError("joint penalty does not match generator count");
  if (penalty.dimension != gens.states()) throw ValidationError("joint penalty dimension does not match states");
  const std::size_t n = penalty.belief_count();
  std::vector<double> c(symbols_);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> p(penalty.beliefs.data() + i * penalty.dimension, penalty.dimension);
    for (std::size_t g = 0; g < penalty.generators; ++g) {
      const std::size_t slot = i * penalty.generators + g;
      const double rho = penalty_to_rho(penalty.values[slot], params);
      if (rho == kInf) continue;
      predictive_masses(p, gens[g], c);
      pair_.push_back(static_cast<long>(slot));
      masses_.insert(masses_.end(), c.begin(), c.end());
      rho_.push_back(rho);
    }
  }
  if (pair_.empty()) throw Infeasible("joint penalty admits no (belief, generator) pair");
}

SupResult OneStepExpectation::operator()(std::span<const double> next_values) const {
  if (next_values.size() != symbols_) throw ValidationError("one value per observation symbol expected");
  SupResult best{-kInf, -1};
  for (std::size_t a = 0; a < pair_.size(); ++a) {
    const double* c = masses_.data() + a * symbols_;
    double v = 0.0;
    for (std::size_t y = 0; y < symbols_; ++y) v += next_values[y] * c[y];
    v -= rho_[a];
    if (v > best.value) best = {v, pair_[a]};
  }
  return best;
}

double OneStepExpectation::driver(std::span<const double> z) const {
  if (z.size() != symbols_) throw ValidationError("one value per observation symbol expected");
  const double inv_d = 1.0 / static_cast<double>(symbols_);
  double best = -kInf;
  for (std::size_t a = 0; a < pair_.size(); ++a) {
    const double* c = masses_.data() + a * symbols_;
    double v = 0.0;
    for (std::size_t y = 0; y < symbols_; ++y) v += z[y] * (c[y] - inv_d);
    best = std::max(best, v - rho_[a]);
  }
  return best;
}

double one_step_expectation(std::span<const double> next_values, const PenaltySurface& kappa,
                            const GeneratorGrid& gens, std::span<const double> gammas,
                            const UncertaintyParams& params) {
  if (kappa.infeasible) throw Infeasible("penalty surface is infeasible");
  return OneStepExpectation(JointPenalty::dynamic(kappa.view(), gammas), gens, params)(next_values).value;
}

TerminalFunctional constant_in_history(std::vector<double> phi) {
  return [phi = std::move(phi)](std::span<const ObsSymbol>) { return phi; };
}

ObservationTree::ObservationTree(std::size_t symbols, std::size_t horizon) : d_(symbols), horizon_(horizon) {
  if (symbols == 0) throw ValidationError("observation alphabet is empty");
  level_offset_.push_back(0);
  std::size_t width = 1;
  for (std::size_t t = 0; t <= horizon; ++t) {
    level_offset_.push_back(level_offset_.back() + width);
    width *= symbols;
  }
  nodes_.resize(level_offset_.back());
  for (std::size_t t = 1; t <= horizon; ++t) {
    for (std::size_t i = level_begin(t); i < level_end(t); ++i) {
      std::size_t pos = i - level_begin(t);
      ObsSequence h(t);
      for (std::size_t s = t; s-- > 0;) {
        h[s] = ObsSymbol{pos % d_};
        pos /= d_;
      }
      nodes_[i].history = std::move(h);
    }
  }
}

std::size_t ObservationTree::node_count(std::size_t symbols, std::size_t horizon) {
  std::size_t total = 0, width = 1;
  for (std::size_t t = 0; t <= horizon; ++t) {
    total += width;
    width *= symbols;
  }
  return total;
}

std::size_t ObservationTree::depth(std::size_t node) const {
  const auto it = std::upper_bound(level_offset_.begin(), level_offset_.end(), node);
  return static_cast<std::size_t>(it - level_offset_.begin()) - 1;
}

std::size_t ObservationTree::child(std::size_t node, std::size_t y) const {
  const std::size_t t = depth(node);
  return level_begin(t + 1) + (node - level_begin(t)) * d_ + y;
}

std::size_t ObservationTree::index_of(std::span<const ObsSymbol> history) const {
  if (history.size() > horizon_) throw ValidationError("history longer than the tree");
  std::size_t pos = 0;
  for (const auto& y : history) {
    if (y.index >= d_) throw ValidationError("observation symbol out of range");
    pos = pos * d_ + y.index;
  }
  return level_begin(history.size()) + pos;
}

ObservationTree build_observation_tree(const ExpectationSetup& setup) {
  if (!setup.grid || !setup.gens) throw ValidationError("expectation setup needs a grid and generators");
  const std::size_t d = setup.gens->symbols();
  std::size_t leaves = 1;
  for (std::size_t t = 0; t < setup.horizon; ++t) {
    leaves *= d;
    if (leaves > setup.leaf_cap) {
      std::ostringstream msg;
      msg << "observation tree with d=" << d << " and T=" << setup.horizon << " exceeds the leaf cap "
          << setup.leaf_cap;
      throw CapExceeded(msg.str());
    }
  }
  ObservationTree tree(d, setup.horizon);
  const GeneratorGrid& gens = *setup.gens;
  PenaltySurface kappa0 = surface_from_values(setup.prior.initial_penalty, setup.grid);
  if (kappa0.infeasible) throw Infeasible("initial penalty is +inf everywhere");
  const bool is_static = setup.prior.generator_mode == GeneratorScope::Static;
  if (is_static) {
    tree[0].extended = extend(kappa0, gens.prior_penalty());
    tree[0].kappa = tree[0].extended->collapse();
  } else {
    tree[0].kappa = std::move(kappa0);
  }
  for (std::size_t t = 0; t < setup.horizon; ++t) {
    for (std::size_t node = tree.level_begin(t); node < tree.level_end(t); ++node) {
      for (std::size_t y = 0; y < d; ++y) {
        TreeNode& ch = tree[tree.child(node, y)];
        if (is_static) {
          auto [next, report] = forward_image_step(*tree[node].extended, gens, ObsSymbol{y}, setup.prior.framework);
          ch.kappa = next.collapse();
          ch.extended = std::move(next);
          ch.m_t = report.m_t;
        } else {
          const auto gamma = gamma_at(gens, t + 1, tree[node].history);
          auto [next, report] = forward_image_step(tree[node].kappa, gens, gamma, ObsSymbol{y}, setup.prior.framework);
          ch.kappa = std::move(next);
          ch.m_t = report.m_t;
        }
      }
    }
  }
  return tree;
}

JointPenalty node_joint_penalty(const ObservationTree& tree, std::size_t node, const ExpectationSetup& setup) {
  const TreeNode& n = tree[node];
  if (n.extended) return JointPenalty::fixed(*n.extended);
  const auto gamma = gamma_at(*setup.gens, n.history.size() + 1, n.history);
  return JointPenalty::dynamic(n.kappa.view(), gamma);
}

namespace {

void backward_levels(const ObservationTree& tree, std::size_t depth, std::vector<double>& xi,
                     const ExpectationSetup& setup) {
  const std::size_t d = tree.symbols();
  for (std::size_t t = depth; t-- > 0;) {
    const std::size_t begin = tree.level_begin(t);
    parallel_for(tree.level_end(t) - begin, [&](std::size_t lo, std::size_t hi) {
      std::vector<double> next(d);
      for (std::size_t node = begin + lo; node < begin + hi; ++node) {
        for (std::size_t y = 0; y < d; ++y) next[y] = xi[tree.child(node, y)];
        OneStepExpectation op(node_joint_penalty(tree, node, setup), *setup.gens, setup.params);
        xi[node] = op(next).value;
      }
    });
  }
}

}  // namespace

void backward_expectation(ObservationTree& tree, const TerminalFunctional& phi, const ExpectationSetup& setup) {
  const std::size_t T = tree.horizon();
  std::vector<double> xi(tree.size(), 0.0);
  const std::size_t begin = tree.level_begin(T);
  std::vector<std::vector<double>> phis(tree.level_end(T) - begin);
  for (std::size_t i = 0; i < phis.size(); ++i) phis[i] = phi(tree[begin + i].history);
  parallel_for(phis.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) xi[begin + i] = dr_expectation(phis[i], tree[begin + i].kappa, setup.params).value;
  });
  backward_levels(tree, T, xi, setup);
  for (std::size_t i = 0; i < tree.size(); ++i) tree[i].xi = xi[i];
}

ObservationTree backward_expectation(const TerminalFunctional& phi, const ExpectationSetup& setup) {
  ObservationTree tree = build_observation_tree(setup);
  backward_expectation(tree, phi, setup);
  return tree;
}

std::vector<double> backward_from_level(const ObservationTree& tree, std::size_t depth,
                                        std::span<const double> level_values, const ExpectationSetup& setup) {
  if (depth > tree.horizon()) throw ValidationError("level deeper than the tree");
  const std::size_t begin = tree.level_begin(depth);
  if (level_values.size() != tree.level_end(depth) - begin) throw ValidationError("one value per node expected");
  std::vector<double> xi(tree.level_end(depth), 0.0);
  std::copy(level_values.begin(), level_values.end(), xi.begin() + static_cast<std::ptrdiff_t>(begin));
  backward_levels(tree, depth, xi, setup);
  return xi;
}

double bsde_decompose(ObservationTree& tree, const ExpectationSetup& setup) {
  const std::size_t d = tree.symbols();
  if (tree.horizon() == 0) return 0.0;
  const std::size_t interior = tree.level_begin(tree.horizon());
  std::vector<double> residual(interior, 0.0);
  parallel_for(interior, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t node = lo; node < hi; ++node) {
      TreeNode& n = tree[node];
      n.z.assign(d, 0.0);
      double mean = 0.0;
      for (std::size_t y = 0; y < d; ++y) mean += tree[tree.child(node, y)].xi;
      mean /= static_cast<double>(d);
      for (std::size_t y = 0; y < d; ++y) n.z[y] = tree[tree.child(node, y)].xi - mean;
      OneStepExpectation op(node_joint_penalty(tree, node, setup), *setup.gens, setup.params);
      n.driver = op.driver(n.z);
      residual[node] = std::abs(n.xi - mean - n.driver);
    }
  });
  return residual.empty() ? 0.0 : *std::max_element(residual.begin(), residual.end());
}

}  // namespace ufilter
