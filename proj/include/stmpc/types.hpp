#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace stmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/**
 * @brief Discrete-time LTI plant x(t+1) = A x(t) + B u(t) with quadratic
 *        stage weights Q (state) and R (input).
 */
struct PlantModel {
    Matrix A;
    Matrix B;
    Matrix Q;
    Matrix R;

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }

    void validate() const;
};

/**
 * @brief Token bucket traffic specification: tokens accrue at rate g up to
 *        capacity b, each transmission spends c. Base period M = ceil(c/g)
 *        is the smallest spacing that is always sustainable.
 */
struct TokenBucketSpec {
    long g = 1;
    long c = 1;
    long b = 1;

    long base_period() const { return (c + g - 1) / g; }

    void validate() const {
        if (g < 1 || c < g || b < c)
            throw std::invalid_argument("token bucket requires 1 <= g <= c <= b");
    }
};

/// Overall state of the networked loop: plant state, held input, bucket level.
struct OverallState {
    Vector x;
    Vector w;
    long beta = 0;
};

/// Controller output at a sampling instant: update v and next interval delta.
struct ControlPacket {
    Vector v;
    long delta = 1;
};

inline void PlantModel::validate() const {
    if (A.rows() != A.cols()) throw std::invalid_argument("A must be square");
    if (B.rows() != A.rows()) throw std::invalid_argument("A/B row mismatch");
    if (Q.rows() != A.rows() || Q.cols() != A.cols())
        throw std::invalid_argument("Q must be n x n");
    if (R.rows() != B.cols() || R.cols() != B.cols())
        throw std::invalid_argument("R must be m x m");
    const double tol = 1e-12;
    Eigen::SelfAdjointEigenSolver<Matrix> eq(Q), er(R);
    if (eq.eigenvalues().minCoeff() <= tol || er.eigenvalues().minCoeff() <= tol)
        throw std::invalid_argument("Q and R must be symmetric positive definite");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-9 ||
        (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("Q and R must be symmetric");
}

/// Polytopic set { z : H z <= h }, or unconstrained when H has zero rows.
struct Polytope {
    Matrix H;
    Vector h;

    bool unconstrained() const { return H.rows() == 0; }

    bool contains(const Vector& z, double tol = 1e-8) const {
        if (unconstrained()) return true;
        return ((H * z - h).array() <= tol).all();
    }
};

}  // namespace stmpc
