#pragma once

#include <vector>

#include "stmpc/policy.hpp"

namespace stmpc {

struct DescentResult {
    std::vector<Matrix> gains;
    double value = 0.0;      ///< exact worst-case value of the returned gains
    int gradient_steps = 0;
};

/**
 * @brief Smoothed worst-case descent over the shared feedback gains of one
 *        interval word.
 *
 * The max over admissible scenarios is replaced by a log-sum-exp with a
 * decreasing temperature ladder; gradients are central differences; state and
 * input constraints enter as an escalating quadratic penalty. The returned
 * gains are the best iterate under the exact (unsmoothed) worst case.
 */
DescentResult descend_gains(const std::vector<int>& word,
                            const std::vector<Matrix>& seed_gains,
                            const OverallState& xi0,
                            const std::vector<LossSequence>& admissible,
                            const TerminalIngredients& terminal, LiftTable& lifts,
                            const TokenBucketSpec& bucket, const MpcConfig& config);

}  // namespace stmpc
