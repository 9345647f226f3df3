#pragma once

#include <vector>

#include "stmpc/lifted.hpp"
#include "stmpc/network.hpp"
#include "stmpc/terminal.hpp"
#include "stmpc/types.hpp"

namespace stmpc {

/// Iteration caps and tolerances of the min-max solver.
struct SolverOptions {
    int exhaustive_cap = 20000;   ///< full word enumeration when Δ̄^N fits
    int beam_width = 256;         ///< beam kept per stage beyond the cap
    int refine_top = 4;           ///< screened words given a full gain solve
    int tree_newton_iters = 40;   ///< Newton steps per smoothing level (tree)
    int descent_iters = 50;       ///< gradient steps per smoothing level (gains)
    double temperature_factor = 0.1;
    double temperature_floor = 1e-7;  ///< relative to the value scale
    double penalty_initial = 1e2;
    double penalty_growth = 10.0;
    int penalty_rounds = 3;
    double fd_step = 1e-6;        ///< central-difference probe, relative
    double tolerance = 1e-11;     ///< relative improvement stop
    int threads = 0;              ///< 0 = STMPC_THREADS or hardware count
};

/// Horizon, loss bound, interval cap, constraint sets, solver knobs.
struct MpcConfig {
    int N = 1;
    int P = 0;
    int delta_max = 1;
    Polytope X;
    Polytope U;
    SolverOptions solver;

    void validate(long M) const {
        if (N < 1) throw std::invalid_argument("mpc: N must be >= 1");
        if (P < 0) throw std::invalid_argument("mpc: P must be >= 0");
        if (delta_max < M)
            throw std::invalid_argument("mpc: delta_max must be >= base period M");
    }
};

/// N feedback gains plus the N sampling intervals they are paired with.
struct FeedbackPolicy {
    std::vector<Matrix> gains;
    std::vector<int> intervals;

    int horizon() const { return static_cast<int>(gains.size()); }
};

/// Rollout of one policy under one loss scenario.
struct PolicyEval {
    double value = 0.0;
    bool feasible = true;
    bool state_ok = true;        ///< x(i) in X at every predicted instant
    bool input_ok = true;        ///< v(i) in U, terminal w in U
    bool intersample_ok = true;  ///< inter-sample states in X
    bool bucket_ok = true;       ///< bucket never depletes, terminal window holds
    bool terminal_ok = true;     ///< x in X_f over the terminal instants
    double violation = 0.0;      ///< summed squared halfspace excess
    std::vector<OverallState> trajectory;  ///< xi(0..N+P)
};

/**
 * @brief Rolls the policy against one loss word of length N+P and accumulates
 *        the worst-case objective: stage costs over the N free instants, then
 *        P instants of the terminal law, then the terminal cost.
 */
PolicyEval evaluate_policy(const FeedbackPolicy& policy, const OverallState& xi0,
                           const LossSequence& sequence,
                           const TerminalIngredients& terminal, LiftTable& lifts,
                           const TokenBucketSpec& bucket, const MpcConfig& config);

/// Worst case of evaluate_policy over an admissible scenario set.
struct InnerMaxResult {
    double value = 0.0;
    int argmax = 0;              ///< index into the admissible list (lex order)
    bool feasible = true;        ///< feasible for every scenario
    double violation = 0.0;      ///< max violation across scenarios
};

InnerMaxResult inner_max(const FeedbackPolicy& policy, const OverallState& xi0,
                         const std::vector<LossSequence>& admissible,
                         const TerminalIngredients& terminal, LiftTable& lifts,
                         const TokenBucketSpec& bucket, const MpcConfig& config);

enum class Provenance { Optimized, FallbackCandidate };

inline const char* provenance_name(Provenance p) {
    return p == Provenance::Optimized ? "optimized" : "fallback-candidate";
}

/// Adopted policy with its certificate and per-scenario trajectories.
struct Solution {
    FeedbackPolicy policy;
    double worst_value = 0.0;
    LossSequence worst_sequence;
    std::vector<std::vector<OverallState>> scenario_states;
    bool feasible = false;
    Provenance provenance = Provenance::Optimized;
    long words_explored = 0;
};

}  // namespace stmpc
