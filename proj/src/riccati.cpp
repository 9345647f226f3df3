#include "stmpc/riccati.hpp"

#include <Eigen/Cholesky>

namespace stmpc {

RiccatiStep lqr_step(const Matrix& Pnext, const LiftedMatrices& stage) {
    const Matrix BtP = stage.Bj.transpose() * Pnext;
    Matrix G = stage.Rj + BtP * stage.Bj;
    G = 0.5 * (G + G.transpose());
    Eigen::LDLT<Matrix> ldlt(G);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("riccati step: input Hessian factorization failed");
    RiccatiStep out;
    out.K = -ldlt.solve(stage.Sj.transpose() + BtP * stage.Aj);
    Matrix P = stage.Qj + stage.Aj.transpose() * Pnext * stage.Aj +
               (stage.Sj + stage.Aj.transpose() * Pnext * stage.Bj) * out.K;
    out.P = 0.5 * (P + P.transpose());
    return out;
}

WordRiccati riccati_over_word(const std::vector<int>& word, const Matrix& Pf,
                              LiftTable& lifts) {
    WordRiccati out;
    out.gains.resize(word.size());
    Matrix P = Pf;
    for (int i = static_cast<int>(word.size()) - 1; i >= 0; --i) {
        RiccatiStep step = lqr_step(P, lifts.at(word[i]));
        out.gains[i] = step.K;
        P = step.P;
    }
    out.P0 = P;
    return out;
}

DareResult solve_dare(const LiftedMatrices& stage, int max_iter, double tol) {
    DareResult out;
    Matrix P = stage.Qj;
    for (int it = 0; it < max_iter; ++it) {
        RiccatiStep step = lqr_step(P, stage);
        const double diff = (step.P - P).cwiseAbs().maxCoeff();
        P = step.P;
        out.K = step.K;
        if (diff <= tol * std::max(1.0, P.cwiseAbs().maxCoeff())) {
            out.converged = true;
            break;
        }
    }
    out.P = P;
    return out;
}

double fixed_scenario_value(const std::vector<int>& word, int N,
                            const LossSequence& scenario, const Matrix& Pf,
                            const Matrix& Kf, int M, const OverallState& xi,
                            LiftTable& lifts) {
    const int n = static_cast<int>(Pf.rows());
    const int m = static_cast<int>(Kf.rows());
    const int H = static_cast<int>(scenario.bits.size());
    Matrix Pt = Matrix::Zero(n + m, n + m);
    Pt.topLeftCorner(n, n) = Pf;

    for (int i = H - 1; i >= 0; --i) {
        const int d = i < N ? word[i] : M;
        const LiftedMatrices& L = lifts.at(d);
        const int sigma = scenario.bits[i];
        if (sigma == 0) {
            Matrix F = Matrix::Zero(n + m, n + m);
            F.topLeftCorner(n, n) = L.Aj;
            F.topRightCorner(n, m) = L.Bj;
            F.bottomRightCorner(m, m) = Matrix::Identity(m, m);
            Matrix C = Matrix::Zero(n + m, n + m);
            C.topLeftCorner(n, n) = L.Qj;
            C.topRightCorner(n, m) = L.Sj;
            C.bottomLeftCorner(m, n) = L.Sj.transpose();
            C.bottomRightCorner(m, m) = L.Rj;
            Pt = C + F.transpose() * Pt * F;
        } else if (i >= N) {
            Matrix F = Matrix::Zero(n + m, n + m);
            F.topLeftCorner(n, n) = L.Aj + L.Bj * Kf;
            F.bottomLeftCorner(m, n) = Kf;
            Matrix C = Matrix::Zero(n + m, n + m);
            C.topLeftCorner(n, n) = L.Qj + L.Sj * Kf + Kf.transpose() * L.Sj.transpose() +
                                    Kf.transpose() * L.Rj * Kf;
            Pt = C + F.transpose() * Pt * F;
        } else {
            const Matrix P11 = Pt.topLeftCorner(n, n);
            const Matrix P12 = Pt.topRightCorner(n, m);
            const Matrix P22 = Pt.bottomRightCorner(m, m);
            const Matrix Hxx = L.Qj + L.Aj.transpose() * P11 * L.Aj;
            const Matrix Hxu = L.Sj + L.Aj.transpose() * P11 * L.Bj + L.Aj.transpose() * P12;
            Matrix Huu = L.Rj + L.Bj.transpose() * P11 * L.Bj + L.Bj.transpose() * P12 +
                         P12.transpose() * L.Bj + P22;
            Huu = 0.5 * (Huu + Huu.transpose());
            Eigen::LDLT<Matrix> ldlt(Huu);
            const Matrix Kst = -ldlt.solve(Hxu.transpose());
            Matrix Px = Hxx + Hxu * Kst;
            Pt.setZero();
            Pt.topLeftCorner(n, n) = 0.5 * (Px + Px.transpose());
        }
        Pt = 0.5 * (Pt + Pt.transpose());
    }
    Vector xw(n + m);
    xw << xi.x, xi.w;
    return xw.dot(Pt * xw);
}

}  // namespace stmpc
