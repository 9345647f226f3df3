#pragma once

#include <vector>

#include "stmpc/policy.hpp"

namespace stmpc {

/**
 * @brief Scenario tree over the admissible loss words: one decision node per
 *        (stage, loss-prefix) pair on the free horizon, so inputs are
 *        non-anticipative in the acknowledged history.
 */
struct ScenarioTree {
    int N = 0;
    int horizon = 0;                         ///< N + P
    std::vector<int> node_stage;             ///< per node
    std::vector<int> node_decision;          ///< decision slot, free-stage nodes only
    std::vector<std::vector<int>> paths;     ///< scenario -> node id per free stage
    int decisions = 0;

    int dim(int m) const { return m * decisions; }
    int size() const { return static_cast<int>(node_stage.size()); }
};

ScenarioTree build_tree(const std::vector<LossSequence>& admissible, int N);

/**
 * @brief Convex relaxation of the min-max problem for one fixed interval word:
 *        per-scenario cost is an explicit quadratic in the stacked node inputs.
 *
 * Relaxes the shared-gain policy class (inputs per node are free), so the
 * optimum lower-bounds the gain-class optimum and seeds the gain fit.
 */
struct TreeProblem {
    ScenarioTree tree;
    int n = 0, m = 0;
    std::vector<Matrix> C;        ///< per scenario, (1+dim)^2, value = [1;z]'C[1;z]
    std::vector<Matrix> node_Tx;  ///< per node, n x (1+dim): x at node = Tx [1;z]
};

TreeProblem build_tree_problem(const std::vector<int>& word,
                               const std::vector<LossSequence>& admissible,
                               const OverallState& xi0,
                               const TerminalIngredients& terminal, LiftTable& lifts,
                               const TokenBucketSpec& bucket);

struct TreeSolution {
    Vector z;
    double value = 0.0;   ///< exact max over scenarios at z
    int iterations = 0;
};

/// Smoothed min-max over the scenario quadratics: Newton on log-sum-exp with a
/// decreasing temperature ladder.
TreeSolution solve_tree(const TreeProblem& problem, const SolverOptions& options);

/// Least-squares projection of a tree solution onto per-stage shared gains.
std::vector<Matrix> fit_gains(const TreeProblem& problem, const Vector& z);

}  // namespace stmpc
