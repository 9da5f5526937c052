#include <gtest/gtest.h>

#include <cmath>

#include "common.hpp"
#include "ufilter/control.hpp"
#include "ufilter/errors.hpp"

using namespace ufilter;
using namespace testing_util;

namespace {

ControlProblem small_problem(std::size_t horizon, std::vector<std::vector<double>> table,
                             std::vector<std::vector<double>> costs) {
  ControlProblem p;
  p.grid = grid(2, 10);
  GeneratorGrid g({Generator(Matrix{{0.9, 0.1}, {0.1, 0.9}}, Matrix{{0.75, 0.25}, {0.25, 0.75}}),
                   Generator(Matrix{{0.9, 0.1}, {0.1, 0.9}}, Matrix{{0.55, 0.45}, {0.45, 0.55}})},
                  {0.0, 0.0});
  g.set_control_penalties(std::move(table));
  p.gens = std::make_shared<const GeneratorGrid>(std::move(g));
  p.controls = p.gens->control_count();
  for (std::size_t i = 0; i < p.grid->size(); ++i) {
    const double q = p.grid->belief(i)[0];
    p.initial_penalty.push_back(3.0 * (q - 0.5) * (q - 0.5));
  }
  p.params = UncertaintyParams::make(1.0, 1.0);
  p.horizon = horizon;
  p.running_cost = [costs](std::size_t t, std::span<const ObsSymbol>, std::size_t u) { return costs[t][u]; };
  p.terminal_cost = constant_in_history({1.0, 0.0});
  return p;
}

std::vector<std::vector<double>> flat_costs(std::size_t horizon, std::vector<double> per_control) {
  return std::vector<std::vector<double>>(horizon, per_control);
}

}  // namespace

TEST(Control, ConstantCosts) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.0, 0.0}));
  p.terminal_cost = constant_in_history({0.4, 0.4});
  auto sol = solve(p);
  for (std::size_t s = 0; s < sol.graph.states.size(); ++s) {
    EXPECT_NEAR(sol.values.states[s].value, 0.4, 1e-15);
    if (!sol.graph.is_leaf_state(s)) EXPECT_EQ(sol.values.states[s].control, 0);
  }
}

TEST(Control, DominatedControl) {
  const std::size_t T = 3;
  auto p = small_problem(T, {{0.0, 0.8}, {0.0, 0.8}}, flat_costs(T, {0.0, 1.0}));
  auto sol = solve(p);
  for (std::size_t s = 0; s < sol.graph.states.size(); ++s)
    if (!sol.graph.is_leaf_state(s)) EXPECT_EQ(sol.policy.control[s], 0);
  std::vector<std::size_t> always_one(sol.graph.nodes.size(), 1);
  auto j = evaluate_policy(p, sol.graph, PolicyTree::from_history_policy(sol.graph, always_one));
  for (std::size_t s = 0; s < sol.graph.states.size(); ++s) {
    if (std::isnan(j.states[s].value)) continue;
    const double remaining = static_cast<double>(T - sol.graph.level_of(sol.graph.states[s].node));
    EXPECT_NEAR(j.states[s].value, sol.values.states[s].value + remaining, 1e-9);
  }
}

TEST(Control, OptimalPolicyEvaluatesToValue) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  auto sol = solve(p);
  auto j = evaluate_policy(p, sol.graph, sol.policy);
  EXPECT_NEAR(j.states[0].value, sol.root_value(), 1e-12);
  for (std::size_t s = 0; s < j.states.size(); ++s)
    if (!std::isnan(j.states[s].value)) EXPECT_NEAR(j.states[s].value, sol.values.states[s].value, 1e-12);
}

TEST(Control, AnyPolicyIsNoBetter) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  auto sol = solve(p);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> per_node(sol.graph.nodes.size());
    for (auto& u : per_node) u = unit_uniform(rng) < 0.5 ? 0 : 1;
    auto j = evaluate_policy(p, sol.graph, PolicyTree::from_history_policy(sol.graph, per_node));
    for (std::size_t s = 0; s < j.states.size(); ++s)
      if (!std::isnan(j.states[s].value)) EXPECT_GE(j.states[s].value, sol.values.states[s].value - 1e-9);
  }
}

TEST(Control, UndefinedPolicyEntry) {
  auto p = small_problem(2, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(2, {0.05, 0.0}));
  auto sol = solve(p);
  auto policy = sol.policy;
  policy.control[0] = -1;
  EXPECT_THROW(evaluate_policy(p, sol.graph, policy), ValidationError);
}

TEST(Control, BruteForceMatchesSolve) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  auto sol = solve(p);
  EXPECT_NEAR(brute_force(p, sol.graph), sol.root_value(), 1e-9);
  p.framework = Framework::UncertainPrior;
  EXPECT_NEAR(brute_force(p), solve(p).root_value(), 1e-9);
}

TEST(Control, HorizonOneDirectScan) {
  auto p = small_problem(1, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(1, {0.05, 0.0}));
  auto sol = solve(p);
  double best = kInf;
  for (std::size_t u = 0; u < 2; ++u) {
    std::vector<std::size_t> per_node(sol.graph.nodes.size(), u);
    best = std::min(best, evaluate_policy(p, sol.graph, PolicyTree::from_history_policy(sol.graph, per_node)).states[0].value);
  }
  EXPECT_EQ(brute_force(p), best);
  EXPECT_EQ(sol.root_value(), best);
}

TEST(Control, SingleControl) {
  auto p = small_problem(3, {{0.0, 0.6}}, flat_costs(3, {0.1}));
  auto sol = solve(p);
  std::vector<std::size_t> zero(sol.graph.nodes.size(), 0);
  auto j = evaluate_policy(p, sol.graph, PolicyTree::from_history_policy(sol.graph, zero));
  EXPECT_EQ(brute_force(p), j.states[0].value);
}

TEST(Control, PolicyCap) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  p.policy_cap = 100;
  EXPECT_THROW(brute_force(p), CapExceeded);
  p.policy_cap = 10'000'000;
  p.state_cap = 5;
  EXPECT_THROW(build_control_graph(p), CapExceeded);
}

TEST(Control, Residuals) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  auto sol = solve(p);
  EXPECT_LE(dp_identity_residual(p, sol), 1e-9);
  EXPECT_LE(bellman_isaacs_residual(p, sol), 1e-12);
}

TEST(Control, MarkovInKappa) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  auto sol = solve(p);
  const auto& g = sol.graph;
  for (std::size_t a = 0; a < g.states.size(); ++a) {
    for (std::size_t b = a + 1; b < g.states.size(); ++b) {
      if (g.level_of(g.states[a].node) != g.level_of(g.states[b].node)) continue;
      if (g.find_state(g.states[a].node, g.states[b].kappa.values) != static_cast<long>(a)) continue;
      EXPECT_EQ(sol.values.states[a].value, sol.values.states[b].value);
    }
  }
}

TEST(Control, TimeConsistency) {
  auto p = small_problem(3, {{0.0, 1.5}, {1.5, 0.0}}, flat_costs(3, {0.05, 0.0}));
  auto sol = solve(p);
  const auto& g = sol.graph;
  std::vector<bool> reached(g.states.size(), false);
  reached[0] = true;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < g.states.size(); ++s) {
    if (!reached[s] || g.is_leaf_state(s)) continue;
    const auto u = static_cast<std::size_t>(sol.policy.control[s]);
    for (std::size_t y = 0; y < g.symbols(); ++y) reached[g.states[s].successors[u * g.symbols() + y]] = true;
    const std::size_t node = g.states[s].node;
    if (g.level_of(node) == 0) continue;

    auto sub = p;
    sub.start_time = g.level_of(node);
    sub.history_prefix = g.nodes[node].history;
    sub.initial_penalty = g.states[s].kappa.values;
    auto sub_sol = solve(sub);
    EXPECT_EQ(sub_sol.root_value(), sol.values.states[s].value);
    for (std::size_t t = 0; t < sub_sol.graph.states.size(); ++t) {
      const auto& st = sub_sol.graph.states[t];
      const std::size_t orig_node = g.node_of(sub_sol.graph.nodes[st.node].history);
      const long orig = g.find_state(orig_node, st.kappa.values);
      ASSERT_GE(orig, 0);
      EXPECT_EQ(sub_sol.policy.control[t], sol.policy.control[orig]);
      EXPECT_EQ(sub_sol.values.states[t].value, sol.values.states[orig].value);
    }
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(Control, ShippedInstance) {
  auto p = make_control_problem(load("control_instance.json"));
  auto sol = solve(p);
  EXPECT_NEAR(brute_force(p, sol.graph), sol.root_value(), 1e-9);
  EXPECT_LE(dp_identity_residual(p, sol), 1e-9);
}
