#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stmpc/policy.hpp"

namespace stmpc {

/// Per-instant solver telemetry for the diagnostics stream.
struct SolveDiagnostics {
    long words_feasible = 0;  ///< interval words surviving bucket pruning
    long words_refined = 0;   ///< words given a full gain optimization
    int admissible_count = 0;
};

/// Bucket-admissible interval words from level beta0: the level stays at or
/// above c - g at every predicted sampling instant, so every transmission
/// keeps beta >= 0 and the terminal phase at spacing M remains sustainable.
std::vector<std::vector<int>> enumerate_feasible_words(long beta0, int N,
                                                       int delta_max,
                                                       const TokenBucketSpec& bucket,
                                                       long cap);

/// The harshest admissible scenario for run length r: first success as late as
/// the bound allows, successes spaced P+1 apart afterwards.
LossSequence sparse_scenario(int r, int P, int length);

/**
 * @brief Full min-max solve at one sampling instant.
 *
 * Enumerates bucket-feasible interval words (exhaustive up to a budget, beam
 * search beyond it), ranks them by fixed-scenario lower bounds, and refines
 * the most promising words: scenario-tree relaxation, least-squares gain fit,
 * then smoothed worst-case descent. A warm policy (the shifted candidate) is
 * always refined alongside and serves as the pruning incumbent.
 */
Solution outer_min(const OverallState& xi0, int r,
                   const TerminalIngredients& terminal, LiftTable& lifts,
                   const TokenBucketSpec& bucket, const MpcConfig& config,
                   const FeedbackPolicy* warm = nullptr,
                   SolveDiagnostics* diagnostics = nullptr);

/// Previous optimum with the first element dropped and the terminal law
/// appended; feasible at the successor state whenever the previous was.
FeedbackPolicy shifted_candidate(const Solution& previous,
                                 const TerminalIngredients& terminal);

/// Controller memory carried between sampling instants.
struct ControllerState {
    int k = 0;
    long t = 0;
    LossHistory history;
    std::optional<Solution> previous;
    bool nominal = false;
};

struct StepResult {
    ControlPacket packet;
    Solution adopted;
    SolveDiagnostics diagnostics;
    int r = 0;
};

/// Raised when the problem is infeasible at the initial instant.
struct InfeasibleProblem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/**
 * @brief One controller activation: ingest the acknowledgment, update the
 *        loss counter, solve, and fall back to the shifted candidate whenever
 *        the optimizer fails to match its certified value.
 */
StepResult control_step(const OverallState& xi, int ack, ControllerState& state,
                        const TerminalIngredients& terminal, LiftTable& lifts,
                        const TokenBucketSpec& bucket, const MpcConfig& config);

/// Worker count: options value, else STMPC_THREADS, else hardware.
int worker_count(const SolverOptions& options);

}  // namespace stmpc
