#pragma once

#include <memory>
#include <vector>

#include "stmpc/types.hpp"

namespace stmpc {

/**
 * @brief j-step lifted dynamics and cost blocks for an interval of length j
 *        driven by a single held input.
 *
 * A_j = A^j, B_j = sum_{i=0}^{j-1} A^i B, and the quadratic interval cost of
 * holding input u from state x for j steps is [x;u]' [Q_j S_j; S_j' R_j] [x;u].
 * The tilde blocks are the blocks of the inverse of that cost matrix.
 */
struct LiftedMatrices {
    int j = 0;
    Matrix Aj, Bj;
    Matrix Qj, Sj, Rj;
    Matrix Qt, St, Rt;

    Matrix cost_block() const {
        const int n = static_cast<int>(Qj.rows()), m = static_cast<int>(Rj.rows());
        Matrix W(n + m, n + m);
        W.topLeftCorner(n, n) = Qj;
        W.topRightCorner(n, m) = Sj;
        W.bottomLeftCorner(m, n) = Sj.transpose();
        W.bottomRightCorner(m, m) = Rj;
        return W;
    }
};

/// Computes the lifted matrices for hold length j >= 1.
LiftedMatrices lift(const PlantModel& plant, int j);

/// Cache of lift(plant, j) for j in [1, jmax]; extends on demand. Entries
/// have stable addresses, so references stay valid while the table grows.
class LiftTable {
  public:
    explicit LiftTable(const PlantModel& plant) : plant_(plant) {}

    const LiftedMatrices& at(int j);
    const PlantModel& plant() const { return plant_; }

  private:
    PlantModel plant_;
    std::vector<std::unique_ptr<LiftedMatrices>> table_;
};

/// Running cost of one prediction step: x'Qx + (1-sigma) w'Rw + sigma v'Rv.
double stage_cost(const OverallState& xi, const ControlPacket& packet, int sigma,
                  const PlantModel& plant);

/**
 * @brief Transition of the overall state over a hold interval of length j.
 *
 * Plant part advances j steps under the applied input sigma*v + (1-sigma)*w,
 * the held input becomes that applied input, and the bucket pays one
 * transmission: beta' = min(beta + j*g - c, b).
 */
OverallState ncs_step(const OverallState& xi, const Vector& v, int j, int sigma,
                      LiftTable& lifts, const TokenBucketSpec& bucket);

/**
 * @brief Cost accumulated over one full sampling interval.
 *
 * Equals the sum of stage costs over the interval and, identically, the
 * closed form [x;u]' [Q_d S_d; S_d' R_d] [x;u] with u the applied input.
 */
double interval_cost(const OverallState& xi, const ControlPacket& packet, int sigma,
                     LiftTable& lifts, const TokenBucketSpec& bucket);

struct TerminalIngredients;

/**
 * @brief Rolls the overall state forward p sampling instants under the
 *        terminal law (gain K_f, interval M) with loss word {1, 0, ..., 0}.
 */
OverallState terminal_rollout(const OverallState& xi, int p,
                              const TerminalIngredients& terminal, LiftTable& lifts,
                              const TokenBucketSpec& bucket);

}  // namespace stmpc
