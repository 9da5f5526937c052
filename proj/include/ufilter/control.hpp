#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ufilter/expectation.hpp"

namespace ufilter {

/// Leaf valuation Xi_T(kappa_T). `UpperExpectation` is the DR expectation
/// sup_p { c . p - rho(kappa_T(p)) }; `PrintedInfimum` is
/// inf_p { c . p - rho(kappa_T(p)) } over beliefs of finite penalty.
enum class TerminalRule { UpperExpectation, PrintedInfimum };

/// Running cost L_t(Y_1..Y_t, u), paid at time t for the control u_{t+1}.
using RunningCost = std::function<double(std::size_t t, std::span<const ObsSymbol> history, std::size_t u)>;

struct ControlProblem {
  std::shared_ptr<const SimplexGrid> grid;
  /// Per-control penalties come from the control table or the penalty hook.
  std::shared_ptr<const GeneratorGrid> gens;
  std::size_t controls = 0;
  std::vector<double> initial_penalty;  ///< kappa at the root, on `grid`
  Framework framework = Framework::DivergenceRobust;
  UncertaintyParams params;
  std::size_t horizon = 0;
  RunningCost running_cost;
  TerminalFunctional terminal_cost;
  /// Include gamma(A; u) next to kappa(p) inside the one-step sup.
  bool penalize_generators = true;
  TerminalRule terminal_rule = TerminalRule::UpperExpectation;
  std::size_t state_cap = 20000;
  std::size_t policy_cap = 10'000'000;
  /// Subproblems start at time `start_time` after `history_prefix`.
  std::size_t start_time = 0;
  ObsSequence history_prefix;
};

struct ControlNode {
  ObsSequence history;  ///< full history, prefix included
  std::vector<std::size_t> states;
};

struct KappaState {
  std::size_t node = 0;
  PenaltySurface kappa;
  std::vector<long> successors;  ///< [u * d + y], empty at leaves
  std::vector<double> m_t;       ///< normalizer of each successor step
};

/// Reachable (history, kappa) pairs. Nodes are stored level by level like an
/// ObservationTree rooted at the problem's start; states are stored level by
/// level and, within a node, in order of first discovery.
class ControlGraph {
 public:
  ControlGraph(std::size_t symbols, std::size_t controls, std::size_t start_time, std::size_t horizon);

  std::size_t symbols() const { return d_; }
  std::size_t controls() const { return controls_; }
  std::size_t start_time() const { return start_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t depth() const { return horizon_ - start_; }

  std::size_t node_level_begin(std::size_t level) const { return node_offset_[level]; }
  std::size_t node_level_end(std::size_t level) const { return node_offset_[level + 1]; }
  std::size_t level_of(std::size_t node) const;
  std::size_t child(std::size_t node, std::size_t y) const;
  /// Node of a full history (prefix included).
  std::size_t node_of(std::span<const ObsSymbol> history) const;

  bool is_leaf_state(std::size_t s) const { return level_of(states[s].node) == depth(); }
  /// State at `node` whose penalty matches `values` after 1e-12 rounding, or -1.
  long find_state(std::size_t node, std::span<const double> values) const;

  std::vector<ControlNode> nodes;
  std::vector<KappaState> states;
  std::vector<std::size_t> state_level_offset;

 private:
  std::size_t d_, controls_, start_, horizon_;
  std::vector<std::size_t> node_offset_;
};

ControlGraph build_control_graph(const ControlProblem& problem);

struct StateValue {
  double value = 0.0;
  long control = -1;              ///< -1 at leaves
  std::vector<double> q_values;   ///< per control, interior states of solve only
};

struct ValueRecord {
  std::vector<StateValue> states;  ///< indexed by state id; NaN where not evaluated
};

struct PolicyTree {
  std::vector<long> control;  ///< per state id, -1 where undefined

  /// The policy choosing `per_node[node]` at every state of that node.
  static PolicyTree from_history_policy(const ControlGraph& graph, std::span<const std::size_t> per_node);
};

struct ControlSolution {
  ControlGraph graph;
  PolicyTree policy;
  ValueRecord values;

  double root_value() const { return values.states.front().value; }
};

/// Backward value recursion with the argmin control (lowest index on ties).
ControlSolution solve(const ControlProblem& problem);

/// J for a fixed policy on every state it reaches from the root. Throws
/// ValidationError when a reached interior state has no control.
ValueRecord evaluate_policy(const ControlProblem& problem, const ControlGraph& graph, const PolicyTree& policy);

/// Minimum root J over every policy that chooses the control from the
/// observation history. Throws CapExceeded above `policy_cap` policies.
double brute_force(const ControlProblem& problem, const ControlGraph& graph);
double brute_force(const ControlProblem& problem);

/// Leaf value Xi_T of one state under the problem's terminal rule.
double terminal_value(const ControlProblem& problem, const ControlGraph& graph, std::size_t state);

/// One-step operator used for control u at an interior state.
OneStepExpectation control_step_operator(const ControlProblem& problem, const ControlGraph& graph,
                                         std::size_t state, std::size_t u);

/// Largest |V - min_u { L(u) + mean_u + f_u(Z_u) }| over interior states,
/// where mean_u and Z_u are the mean and centred successor values under u and
/// f_u the BSDE driver of the control-u step.
double bellman_isaacs_residual(const ControlProblem& problem, const ControlSolution& solution);

/// Largest |V - L(u*) - E_{u*}(V_next)| over interior states reached by the
/// optimal policy.
double dp_identity_residual(const ControlProblem& problem, const ControlSolution& solution);

}  // namespace ufilter
