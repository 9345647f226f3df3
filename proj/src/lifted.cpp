#include "stmpc/lifted.hpp"

#include <Eigen/Cholesky>

#include "stmpc/terminal.hpp"

namespace stmpc {

LiftedMatrices lift(const PlantModel& plant, int j) {
    if (j < 1) throw std::invalid_argument("lift requires j >= 1");
    const int n = plant.n(), m = plant.m();
    LiftedMatrices out;
    out.j = j;

    Matrix Ai = Matrix::Identity(n, n);
    Matrix Bi = Matrix::Zero(n, m);
    Matrix Qa = Matrix::Zero(n, n);
    Matrix Sa = Matrix::Zero(n, m);
    Matrix Ra = Matrix::Zero(m, m);
    for (int i = 0; i < j; ++i) {
        Qa += Ai.transpose() * plant.Q * Ai;
        Sa += Ai.transpose() * plant.Q * Bi;
        Ra += plant.R + Bi.transpose() * plant.Q * Bi;
        Bi = plant.A * Bi + plant.B;
        Ai = plant.A * Ai;
    }
    out.Aj = Ai;
    out.Bj = Bi;
    out.Qj = 0.5 * (Qa + Qa.transpose());
    out.Sj = Sa;
    out.Rj = 0.5 * (Ra + Ra.transpose());

    Matrix W = out.cost_block();
    Eigen::LDLT<Matrix> ldlt(W);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("lifted cost block is not positive definite");
    Matrix Winv = ldlt.solve(Matrix::Identity(n + m, n + m));
    out.Qt = Winv.topLeftCorner(n, n);
    out.St = Winv.topRightCorner(n, m);
    out.Rt = Winv.bottomRightCorner(m, m);
    return out;
}

const LiftedMatrices& LiftTable::at(int j) {
    if (j < 1) throw std::invalid_argument("lift table index must be >= 1");
    while (static_cast<int>(table_.size()) < j)
        table_.push_back(std::make_unique<LiftedMatrices>(
            lift(plant_, static_cast<int>(table_.size()) + 1)));
    return *table_[j - 1];
}

double stage_cost(const OverallState& xi, const ControlPacket& packet, int sigma,
                  const PlantModel& plant) {
    const double state_part = xi.x.dot(plant.Q * xi.x);
    if (sigma)
        return state_part + packet.v.dot(plant.R * packet.v);
    return state_part + xi.w.dot(plant.R * xi.w);
}

OverallState ncs_step(const OverallState& xi, const Vector& v, int j, int sigma,
                      LiftTable& lifts, const TokenBucketSpec& bucket) {
    const LiftedMatrices& L = lifts.at(j);
    OverallState out;
    const Vector applied = sigma ? v : xi.w;
    out.x = L.Aj * xi.x + L.Bj * applied;
    out.w = applied;
    out.beta = std::min(xi.beta + j * bucket.g - bucket.c, bucket.b);
    return out;
}

double interval_cost(const OverallState& xi, const ControlPacket& packet, int sigma,
                     LiftTable& lifts, const TokenBucketSpec& bucket) {
    const LiftedMatrices& L = lifts.at(static_cast<int>(packet.delta));
    const Vector applied = sigma ? packet.v : xi.w;
    double value = xi.x.dot(L.Qj * xi.x) + 2.0 * xi.x.dot(L.Sj * applied) +
                   applied.dot(L.Rj * applied);
#ifndef NDEBUG
    // cross-check against the explicit step sum
    double sum = stage_cost(xi, packet, sigma, lifts.plant());
    OverallState mid = xi;
    Vector u = applied;
    for (int j = 1; j < packet.delta; ++j) {
        mid.x = lifts.plant().A * mid.x + lifts.plant().B * u;
        mid.w = u;
        sum += stage_cost(mid, packet, sigma, lifts.plant());
    }
    (void)bucket;
    if (std::abs(sum - value) > 1e-6 * std::max(1.0, std::abs(value)))
        throw std::logic_error("interval cost closed form disagrees with step sum");
#endif
    return value;
}

OverallState terminal_rollout(const OverallState& xi, int p,
                              const TerminalIngredients& terminal, LiftTable& lifts,
                              const TokenBucketSpec& bucket) {
    if (p < 1) throw std::invalid_argument("terminal rollout requires p >= 1");
    const int M = static_cast<int>(terminal.M);
    OverallState cur = ncs_step(xi, terminal.Kf * xi.x, M, 1, lifts, bucket);
    for (int i = 1; i < p; ++i)
        cur = ncs_step(cur, terminal.Kf * cur.x, M, 0, lifts, bucket);
    return cur;
}

}  // namespace stmpc
