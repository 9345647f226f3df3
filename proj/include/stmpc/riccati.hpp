#pragma once

#include <vector>

#include "stmpc/lifted.hpp"
#include "stmpc/network.hpp"

namespace stmpc {

/**
 * @brief One backward dynamic-programming step with cross-weighted cost.
 *
 * Given the value matrix Pnext and the stage (Aj, Bj, Qj, Sj, Rj), returns
 * the cost-to-go matrix and the minimizing gain K with u = K x.
 */
struct RiccatiStep {
    Matrix P;
    Matrix K;
};

RiccatiStep lqr_step(const Matrix& Pnext, const LiftedMatrices& stage);

/**
 * @brief Backward sweep over an interval word with terminal weight Pf.
 *
 * Returns the per-stage gains (loss-free optimal) and the horizon-start
 * value matrix. Exact for the all-success scenario.
 */
struct WordRiccati {
    std::vector<Matrix> gains;
    Matrix P0;
};

WordRiccati riccati_over_word(const std::vector<int>& word, const Matrix& Pf,
                              LiftTable& lifts);

/// Fixed point of lqr_step on a single stage; iterative, for warm starts.
struct DareResult {
    Matrix P;
    Matrix K;
    bool converged = false;
};

DareResult solve_dare(const LiftedMatrices& stage, int max_iter = 2000,
                      double tol = 1e-12);

/**
 * @brief Exact optimal cost for one fixed loss scenario.
 *
 * Inputs on successful stages are free; lost stages hold the previous applied
 * input. Dynamic programming over the augmented state (x, w). Terminal stages
 * (index >= N) apply the fixed terminal gain instead of optimizing.
 * The result lower-bounds any shared-gain policy's worst-case value.
 */
double fixed_scenario_value(const std::vector<int>& word, int N,
                            const LossSequence& scenario, const Matrix& Pf,
                            const Matrix& Kf, int M, const OverallState& xi,
                            LiftTable& lifts);

}  // namespace stmpc
