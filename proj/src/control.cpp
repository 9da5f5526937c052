#include "ufilter/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "ufilter/errors.hpp"
#include "ufilter/parallel.hpp"

namespace ufilter {

namespace {

constexpr double kStateQuantum = 1e-12;
// Q-values this close count as tied; the lowest control wins
constexpr double kTieTolerance = 1e-12;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> state_key(std::span<const double> values) {
  std::vector<double> key(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    key[i] = values[i] == kInf ? kInf : std::round(values[i] / kStateQuantum);
  return key;
}

void validate(const ControlProblem& p) {
  if (!p.grid || !p.gens) throw ValidationError("control problem needs a grid and generators");
  if (p.controls == 0) throw ValidationError("control set is empty");
  if (!p.gens->penalty_hook() && p.gens->control_count() != p.controls)
    throw ValidationError("one generator penalty table per control expected");
  if (p.grid->dimension() != p.gens->states()) throw ValidationError("grid dimension does not match states");
  if (p.initial_penalty.size() != p.grid->size()) throw ValidationError("initial penalty size does not match grid");
  if (p.start_time > p.horizon) throw ValidationError("start time beyond horizon");
  if (p.history_prefix.size() != p.start_time) throw ValidationError("history prefix length must equal start time");
  if (!p.running_cost || !p.terminal_cost) throw ValidationError("control problem needs running and terminal costs");
}

double running(const ControlProblem& p, std::size_t t, std::span<const ObsSymbol> h, std::size_t u) {
  const double c = p.running_cost(t, h, u);
  if (!std::isfinite(c)) throw ValidationError("running cost must be finite");
  return c;
}

}  // namespace

ControlGraph::ControlGraph(std::size_t symbols, std::size_t controls, std::size_t start_time, std::size_t horizon)
    : d_(symbols), controls_(controls), start_(start_time), horizon_(horizon) {
  node_offset_.push_back(0);
  std::size_t width = 1;
  for (std::size_t l = 0; l <= depth(); ++l) {
    node_offset_.push_back(node_offset_.back() + width);
    width *= d_;
  }
  nodes.resize(node_offset_.back());
}

std::size_t ControlGraph::level_of(std::size_t node) const {
  const auto it = std::upper_bound(node_offset_.begin(), node_offset_.end(), node);
  return static_cast<std::size_t>(it - node_offset_.begin()) - 1;
}

std::size_t ControlGraph::child(std::size_t node, std::size_t y) const {
  const std::size_t l = level_of(node);
  return node_offset_[l + 1] + (node - node_offset_[l]) * d_ + y;
}

std::size_t ControlGraph::node_of(std::span<const ObsSymbol> history) const {
  if (history.size() < start_ || history.size() > horizon_) throw ValidationError("history outside the graph");
  std::size_t pos = 0;
  for (std::size_t i = start_; i < history.size(); ++i) pos = pos * d_ + history[i].index;
  return node_offset_[history.size() - start_] + pos;
}

long ControlGraph::find_state(std::size_t node, std::span<const double> values) const {
  const auto key = state_key(values);
  for (std::size_t s : nodes[node].states)
    if (state_key(states[s].kappa.values) == key) return static_cast<long>(s);
  return -1;
}

ControlGraph build_control_graph(const ControlProblem& problem) {
  validate(problem);
  const GeneratorGrid& gens = *problem.gens;
  const std::size_t d = gens.symbols();
  const std::size_t U = problem.controls;
  ControlGraph g(d, U, problem.start_time, problem.horizon);

  g.nodes[0].history = problem.history_prefix;
  for (std::size_t l = 0; l < g.depth(); ++l)
    for (std::size_t n = g.node_level_begin(l); n < g.node_level_end(l); ++n)
      for (std::size_t y = 0; y < d; ++y) {
        auto h = g.nodes[n].history;
        h.push_back(ObsSymbol{y});
        g.nodes[g.child(n, y)].history = std::move(h);
      }

  KappaState root;
  root.kappa = surface_from_values(problem.initial_penalty, problem.grid);
  root.kappa.time = problem.start_time;
  if (root.kappa.infeasible) throw Infeasible("root penalty is +inf everywhere");
  g.states.push_back(std::move(root));
  g.nodes[0].states.push_back(0);
  g.state_level_offset = {0, 1};

  for (std::size_t l = 0; l < g.depth(); ++l) {
    const std::size_t t = problem.start_time + l;
    const std::size_t begin = g.state_level_offset[l];
    const std::size_t end = g.state_level_offset[l + 1];
    const std::size_t per_state = U * d;
    std::vector<std::optional<std::pair<PenaltySurface, StepReport>>> next((end - begin) * per_state);
    parallel_for(next.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const KappaState& s = g.states[begin + i / per_state];
        const std::size_t u = (i % per_state) / d;
        const std::size_t y = i % d;
        const auto gamma = gamma_at(gens, t + 1, g.nodes[s.node].history, u);
        next[i] = forward_image_step(s.kappa, gens, gamma, ObsSymbol{y}, problem.framework);
      }
    });
    std::vector<std::map<std::vector<double>, std::size_t>> seen(g.node_level_end(l + 1) - g.node_level_begin(l + 1));
    for (std::size_t i = 0; i < next.size(); ++i) {
      const std::size_t sid = begin + i / per_state;
      const std::size_t y = i % d;
      const std::size_t child = g.child(g.states[sid].node, y);
      auto& bucket = seen[child - g.node_level_begin(l + 1)];
      auto key = state_key(next[i]->first.values);
      auto it = bucket.find(key);
      std::size_t target;
      if (it == bucket.end()) {
        target = g.states.size();
        if (target >= problem.state_cap) {
          std::ostringstream msg;
          msg << "control problem exceeds the cap of " << problem.state_cap << " kappa-states";
          throw CapExceeded(msg.str());
        }
        KappaState ks;
        ks.node = child;
        ks.kappa = std::move(next[i]->first);
        g.states.push_back(std::move(ks));
        g.nodes[child].states.push_back(target);
        bucket.emplace(std::move(key), target);
      } else {
        target = it->second;
      }
      KappaState& src = g.states[sid];
      src.successors.push_back(static_cast<long>(target));
      src.m_t.push_back(next[i]->second.m_t);
    }
    g.state_level_offset.push_back(g.states.size());
  }
  return g;
}

PolicyTree PolicyTree::from_history_policy(const ControlGraph& graph, std::span<const std::size_t> per_node) {
  PolicyTree p;
  p.control.assign(graph.states.size(), -1);
  for (std::size_t s = 0; s < graph.states.size(); ++s)
    if (!graph.is_leaf_state(s)) p.control[s] = static_cast<long>(per_node[graph.states[s].node]);
  return p;
}

double terminal_value(const ControlProblem& problem, const ControlGraph& graph, std::size_t state) {
  const KappaState& s = graph.states[state];
  const auto cost = problem.terminal_cost(graph.nodes[s.node].history);
  for (double c : cost)
    if (!std::isfinite(c)) throw ValidationError("terminal cost must be finite");
  if (problem.terminal_rule == TerminalRule::UpperExpectation)
    return dr_expectation(cost, s.kappa, problem.params).value;
  const auto view = s.kappa.view();
  if (cost.size() != view.dimension) throw ValidationError("terminal cost length does not match state count");
  double best = kInf;
  for (std::size_t i = 0; i < view.size(); ++i) {
    const double rho = penalty_to_rho(view.values[i], problem.params);
    if (rho == kInf) continue;
    const auto q = view.belief(i);
    double v = 0.0;
    for (std::size_t j = 0; j < cost.size(); ++j) v += q[j] * cost[j];
    best = std::min(best, v - rho);
  }
  if (best == kInf) throw Infeasible("terminal penalty admits no belief");
  return best;
}

OneStepExpectation control_step_operator(const ControlProblem& problem, const ControlGraph& graph,
                                         std::size_t state, std::size_t u) {
  const KappaState& s = graph.states[state];
  const auto& history = graph.nodes[s.node].history;
  std::vector<double> gamma(problem.gens->size(), 0.0);
  if (problem.penalize_generators) gamma = gamma_at(*problem.gens, history.size() + 1, history, u);
  return OneStepExpectation(JointPenalty::dynamic(s.kappa.view(), gamma), *problem.gens, problem.params);
}

namespace {

std::vector<double> successor_values(const ControlGraph& g, std::size_t state, std::size_t u,
                                     const std::vector<StateValue>& values) {
  const std::size_t d = g.symbols();
  std::vector<double> next(d);
  for (std::size_t y = 0; y < d; ++y)
    next[y] = values[static_cast<std::size_t>(g.states[state].successors[u * d + y])].value;
  return next;
}

void fill_leaves(const ControlProblem& problem, const ControlGraph& g, std::vector<StateValue>& values,
                 const std::vector<char>* mask) {
  const std::size_t begin = g.state_level_offset[g.depth()];
  const std::size_t end = g.state_level_offset[g.depth() + 1];
  parallel_for(end - begin, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t s = begin + lo; s < begin + hi; ++s)
      if (!mask || (*mask)[s]) values[s].value = terminal_value(problem, g, s);
  });
}

}  // namespace

ControlSolution solve(const ControlProblem& problem) {
  ControlSolution sol{build_control_graph(problem), {}, {}};
  const ControlGraph& g = sol.graph;
  auto& values = sol.values.states;
  values.assign(g.states.size(), StateValue{kNaN, -1, {}});
  fill_leaves(problem, g, values, nullptr);
  for (std::size_t l = g.depth(); l-- > 0;) {
    const std::size_t begin = g.state_level_offset[l];
    const std::size_t end = g.state_level_offset[l + 1];
    const std::size_t t = problem.start_time + l;
    parallel_for(end - begin, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t s = begin + lo; s < begin + hi; ++s) {
        const auto& history = g.nodes[g.states[s].node].history;
        StateValue& out = values[s];
        out.q_values.assign(g.controls(), kNaN);
        for (std::size_t u = 0; u < g.controls(); ++u) {
          const auto op = control_step_operator(problem, g, s, u);
          out.q_values[u] = running(problem, t, history, u) + op(successor_values(g, s, u, values)).value;
        }
        out.value = *std::min_element(out.q_values.begin(), out.q_values.end());
        for (std::size_t u = 0; out.control < 0; ++u)
          if (out.q_values[u] <= out.value + kTieTolerance) out.control = static_cast<long>(u);
      }
    });
  }
  sol.policy.control.resize(values.size());
  for (std::size_t s = 0; s < values.size(); ++s) sol.policy.control[s] = values[s].control;
  return sol;
}

ValueRecord evaluate_policy(const ControlProblem& problem, const ControlGraph& g, const PolicyTree& policy) {
  if (policy.control.size() != g.states.size()) throw ValidationError("policy does not match the state graph");
  std::vector<char> reached(g.states.size(), 0);
  reached[0] = 1;
  for (std::size_t s = 0; s < g.states.size(); ++s) {
    if (!reached[s] || g.is_leaf_state(s)) continue;
    const long u = policy.control[s];
    if (u < 0 || static_cast<std::size_t>(u) >= g.controls()) {
      std::ostringstream msg;
      msg << "policy undefined at state " << s;
      throw ValidationError(msg.str());
    }
    for (std::size_t y = 0; y < g.symbols(); ++y)
      reached[static_cast<std::size_t>(g.states[s].successors[static_cast<std::size_t>(u) * g.symbols() + y])] = 1;
  }
  ValueRecord rec;
  rec.states.assign(g.states.size(), StateValue{kNaN, -1, {}});
  fill_leaves(problem, g, rec.states, &reached);
  for (std::size_t l = g.depth(); l-- > 0;) {
    const std::size_t begin = g.state_level_offset[l];
    const std::size_t end = g.state_level_offset[l + 1];
    const std::size_t t = problem.start_time + l;
    parallel_for(end - begin, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t s = begin + lo; s < begin + hi; ++s) {
        if (!reached[s]) continue;
        const auto u = static_cast<std::size_t>(policy.control[s]);
        const auto op = control_step_operator(problem, g, s, u);
        rec.states[s].control = static_cast<long>(u);
        rec.states[s].value = running(problem, t, g.nodes[g.states[s].node].history, u) +
                              op(successor_values(g, s, u, rec.states)).value;
      }
    });
  }
  return rec;
}

double brute_force(const ControlProblem& problem, const ControlGraph& g) {
  const std::size_t decision_nodes = g.node_level_begin(g.depth());
  double count = std::pow(static_cast<double>(g.controls()), static_cast<double>(decision_nodes));
  if (count > static_cast<double>(problem.policy_cap)) {
    std::ostringstream msg;
    msg << "brute force would enumerate " << count << " policies, cap is " << problem.policy_cap;
    throw CapExceeded(msg.str());
  }
  const std::size_t d = g.symbols();
  const std::size_t U = g.controls();
  std::vector<double> leaf(g.states.size(), kNaN);
  for (std::size_t s = g.state_level_offset[g.depth()]; s < g.states.size(); ++s)
    leaf[s] = terminal_value(problem, g, s);
  std::vector<std::optional<OneStepExpectation>> ops(g.states.size() * U);
  std::vector<double> cost(g.states.size() * U, kNaN);

  std::vector<std::size_t> policy(decision_nodes, 0);
  std::function<double(std::size_t)> J = [&](std::size_t s) -> double {
    if (g.is_leaf_state(s)) return leaf[s];
    const std::size_t u = policy[g.states[s].node];
    const std::size_t slot = s * U + u;
    if (!ops[slot]) {
      ops[slot] = control_step_operator(problem, g, s, u);
      const std::size_t t = problem.start_time + g.level_of(g.states[s].node);
      cost[slot] = running(problem, t, g.nodes[g.states[s].node].history, u);
    }
    std::vector<double> next(d);
    for (std::size_t y = 0; y < d; ++y) next[y] = J(static_cast<std::size_t>(g.states[s].successors[u * d + y]));
    return cost[slot] + (*ops[slot])(next).value;
  };

  double best = kInf;
  while (true) {
    best = std::min(best, J(0));
    std::size_t i = 0;
    while (i < decision_nodes && ++policy[i] == U) policy[i++] = 0;
    if (i == decision_nodes) break;
  }
  return best;
}

double brute_force(const ControlProblem& problem) { return brute_force(problem, build_control_graph(problem)); }

double bellman_isaacs_residual(const ControlProblem& problem, const ControlSolution& solution) {
  const ControlGraph& g = solution.graph;
  const auto& values = solution.values.states;
  const std::size_t d = g.symbols();
  double worst = 0.0;
  for (std::size_t s = 0; s < g.states.size(); ++s) {
    if (g.is_leaf_state(s)) continue;
    const std::size_t t = problem.start_time + g.level_of(g.states[s].node);
    const auto& history = g.nodes[g.states[s].node].history;
    double inf_u = kInf;
    for (std::size_t u = 0; u < g.controls(); ++u) {
      auto next = successor_values(g, s, u, values);
      double mean = 0.0;
      for (double v : next) mean += v;
      mean /= static_cast<double>(d);
      for (double& v : next) v -= mean;
      const auto op = control_step_operator(problem, g, s, u);
      inf_u = std::min(inf_u, running(problem, t, history, u) + mean + op.driver(next));
    }
    worst = std::max(worst, std::abs(values[s].value - inf_u));
  }
  return worst;
}

double dp_identity_residual(const ControlProblem& problem, const ControlSolution& solution) {
  const ControlGraph& g = solution.graph;
  const auto& values = solution.values.states;
  std::vector<char> reached(g.states.size(), 0);
  reached[0] = 1;
  double worst = 0.0;
  for (std::size_t s = 0; s < g.states.size(); ++s) {
    if (!reached[s] || g.is_leaf_state(s)) continue;
    const auto u = static_cast<std::size_t>(solution.policy.control[s]);
    const std::size_t t = problem.start_time + g.level_of(g.states[s].node);
    const auto op = control_step_operator(problem, g, s, u);
    const double rhs =
        running(problem, t, g.nodes[g.states[s].node].history, u) + op(successor_values(g, s, u, values)).value;
    worst = std::max(worst, std::abs(values[s].value - rhs));
    for (std::size_t y = 0; y < g.symbols(); ++y)
      reached[static_cast<std::size_t>(g.states[s].successors[u * g.symbols() + y])] = 1;
  }
  return worst;
}

}  // namespace ufilter
