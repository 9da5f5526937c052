#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ufilter/penalty.hpp"

namespace ufilter {

/// Uncertainty aversion k > 0 and exponent k' in [1, inf].
struct UncertaintyParams {
  double k = 1.0;
  double k_exp = 1.0;

  /// Throws ValidationError unless k > 0 and k_exp >= 1 (k_exp may be +inf).
  static UncertaintyParams make(double k, double k_exp);
};

/// (alpha / k)^k'. With k' = inf the result is 0 for alpha <= k and +inf
/// otherwise; +inf maps to +inf.
double penalty_to_rho(double alpha, const UncertaintyParams& params);

/// Value of a sup over a finite candidate set and the first maximizing index.
struct SupResult {
  double value = 0.0;
  long argmax = -1;
};

/// sup over beliefs q of { sum_i q_i phi_i - rho(kappa(q)) }, scanned over
/// every point of the view. Throws Infeasible when every penalty is +inf.
SupResult dr_expectation(std::span<const double> phi, const BeliefPenaltyView& kappa,
                         const UncertaintyParams& params);
SupResult dr_expectation(std::span<const double> phi, const PenaltySurface& kappa, const UncertaintyParams& params);

/// Penalty over (belief, generator) pairs as seen by a one-step expectation:
/// kappa_t(p) + gamma_{t+1}(A) for dynamic generators, K_t(p, A) for static.
struct JointPenalty {
  std::size_t dimension = 0;
  std::size_t generators = 0;
  std::vector<double> beliefs;  ///< flattened, belief-major
  std::vector<double> values;   ///< [belief * generators + generator]

  std::size_t belief_count() const { return dimension == 0 ? 0 : beliefs.size() / dimension; }

  static JointPenalty dynamic(const BeliefPenaltyView& kappa, std::span<const double> gamma);
  static JointPenalty fixed(const ExtendedPenaltySurface& extended);
};

/// The one-step expectation E(xi_{t+1} | Y_t) for a fixed joint penalty:
///   sup_{p, A} { sum_y xi(y) c_A(y; A p) - rho(penalty(p, A)) }.
/// Predictive masses and rho values are computed once on construction, so
/// one operator can be applied to many next-step value vectors.
class OneStepExpectation {
 public:
  OneStepExpectation(const JointPenalty& penalty, const GeneratorGrid& gens, const UncertaintyParams& params);

  std::size_t symbols() const { return symbols_; }

  /// `next_values[y]` is the value of xi_{t+1} after symbol y. The argmax is
  /// reported as belief * generators + generator.
  SupResult operator()(std::span<const double> next_values) const;

  /// BSDE driver f(z) = sup_{p, A} { sum_i z_i (c_A(e_i; A p) - 1/d) - rho(penalty(p, A)) }.
  double driver(std::span<const double> z) const;

 private:
  std::size_t symbols_ = 0;
  std::vector<long> pair_;       ///< flattened (belief, generator) index of each admissible pair
  std::vector<double> masses_;   ///< d predictive masses per admissible pair
  std::vector<double> rho_;      ///< rho(penalty) per admissible pair
};

/// Convenience form for a dynamic-generator surface.
double one_step_expectation(std::span<const double> next_values, const PenaltySurface& kappa,
                            const GeneratorGrid& gens, std::span<const double> gammas,
                            const UncertaintyParams& params);

/// Terminal functional phi(e_i, Y_1..Y_T): N values for a given history.
using TerminalFunctional = std::function<std::vector<double>(std::span<const ObsSymbol> history)>;

/// A terminal functional that ignores the observation history.
TerminalFunctional constant_in_history(std::vector<double> phi);

struct ExpectationSetup {
  std::shared_ptr<const SimplexGrid> grid;
  std::shared_ptr<const GeneratorGrid> gens;
  PriorSpec prior;
  UncertaintyParams params;
  std::size_t horizon = 0;
  std::size_t leaf_cap = 4096;  ///< maximum d^T
};

struct TreeNode {
  ObsSequence history;
  PenaltySurface kappa;                            ///< kappa_t after `history`
  std::optional<ExtendedPenaltySurface> extended;  ///< K_t, static scope only
  double m_t = 0.0;                                ///< normalizer of the step into this node
  double xi = 0.0;
  std::vector<double> z;                           ///< martingale integrand, interior nodes only
  double driver = 0.0;                             ///< f(Z_t; kappa_t), interior nodes only
};

/// All observation histories of length <= T, stored level by level; within a
/// level histories are ordered as base-d numbers (first symbol most significant).
class ObservationTree {
 public:
  ObservationTree(std::size_t symbols, std::size_t horizon);

  static std::size_t node_count(std::size_t symbols, std::size_t horizon);

  std::size_t symbols() const { return d_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t size() const { return nodes_.size(); }

  std::size_t level_begin(std::size_t depth) const { return level_offset_[depth]; }
  std::size_t level_end(std::size_t depth) const { return level_offset_[depth + 1]; }
  std::size_t depth(std::size_t node) const;
  std::size_t child(std::size_t node, std::size_t y) const;
  std::size_t index_of(std::span<const ObsSymbol> history) const;

  TreeNode& operator[](std::size_t i) { return nodes_[i]; }
  const TreeNode& operator[](std::size_t i) const { return nodes_[i]; }

 private:
  std::size_t d_;
  std::size_t horizon_;
  std::vector<std::size_t> level_offset_;
  std::vector<TreeNode> nodes_;
};

/// Builds the tree and propagates penalty surfaces to every node.
ObservationTree build_observation_tree(const ExpectationSetup& setup);

/// Joint penalty used by the one-step expectation at an interior node.
JointPenalty node_joint_penalty(const ObservationTree& tree, std::size_t node, const ExpectationSetup& setup);

/// Fills xi at every node: leaves take the DR expectation of phi against
/// their kappa_T, interior nodes the one-step expectation of their children.
void backward_expectation(ObservationTree& tree, const TerminalFunctional& phi, const ExpectationSetup& setup);

/// Builds the tree and runs the backward recursion.
ObservationTree backward_expectation(const TerminalFunctional& phi, const ExpectationSetup& setup);

/// Runs the backward recursion from a level-`depth` random variable given by
/// `level_values` (one per node of that level, in level order). Returns xi
/// for every node of depth <= `depth`.
std::vector<double> backward_from_level(const ObservationTree& tree, std::size_t depth,
                                        std::span<const double> level_values, const ExpectationSetup& setup);

/// Fills Z (children values minus their mean) and the driver f at every
/// interior node. Returns the largest reconstruction residual
/// |xi_t - mean(children) - f(Z_t)| over the tree.
double bsde_decompose(ObservationTree& tree, const ExpectationSetup& setup);

}  // namespace ufilter
