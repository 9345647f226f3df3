#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stmpc/lifted.hpp"
#include "stmpc/types.hpp"

namespace stmpc {

/// Terminal plant-state set X_f.
struct TerminalSet {
    enum class Kind { Unconstrained, Ellipsoid, Polytope };
    Kind kind = Kind::Unconstrained;
    // Ellipsoid: { x : x' Pf x <= level }.
    double level = 0.0;
    // Polytope variant (extension point).
    Polytope poly;

    bool contains(const Vector& x, const Matrix& Pf, double tol = 1e-8) const {
        switch (kind) {
            case Kind::Unconstrained: return true;
            case Kind::Ellipsoid: return x.dot(Pf * x) <= level + tol;
            case Kind::Polytope: return poly.contains(x, tol);
        }
        return false;
    }
};

/**
 * @brief Terminal law and cost: v = K_f x at fixed interval M, V_f = x' P_f x,
 *        certified against up to P consecutive losses.
 */
struct TerminalIngredients {
    Matrix Kf;
    Matrix Pf;
    long M = 1;
    int P = 0;
    TerminalSet set;
};

/// Per-p maximum eigenvalue of the closed-loop decrease matrix inequality.
struct QmiReport {
    std::vector<double> residuals;  // index p-1, p in [1, P+1]
    double tolerance = 1e-8;

    bool pass() const {
        for (double r : residuals)
            if (!(r <= tolerance)) return false;
        return true;
    }
    double worst() const {
        double w = -std::numeric_limits<double>::infinity();
        for (double r : residuals) w = std::max(w, r);
        return w;
    }
    int worst_p() const {
        int idx = 0;
        for (int i = 1; i < static_cast<int>(residuals.size()); ++i)
            if (residuals[i] > residuals[idx]) idx = i;
        return idx + 1;
    }
};

QmiReport verify_qmi(const Matrix& Kf, const Matrix& Pf, LiftTable& lifts, long M,
                     int P, double tolerance = 1e-8);

struct SynthesisOptions {
    int max_iterations = 60000;
    int check_every = 250;
    double cone_margin = 1e-6;      // strict-feasibility target on the block LMIs
    double target_residual = -1e-8; // certified bound required from verify_qmi
};

struct SynthesisResult {
    Matrix Kf;
    Matrix Pf;
    QmiReport report;
    int iterations = 0;
    bool feasible = false;
    int most_violated_p = 0;
};

/**
 * @brief Solves the coupled linear matrix inequalities for (K_f, P_f) by
 *        alternating projections between the positive-semidefinite cones and
 *        the affine family parameterized by (X, Y), warm-started from the
 *        M-step LQR solution. The returned pair always passes verify_qmi.
 */
SynthesisResult synthesize(const PlantModel& plant, const TokenBucketSpec& bucket,
                           int P, const SynthesisOptions& options = {});

struct DecreaseWitness {
    Vector x;
    int p = 0;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct DecreaseReport {
    int samples = 0;
    uint64_t seed = 0;
    double tolerance = 1e-7;
    double worst_margin = std::numeric_limits<double>::infinity();  // min(rhs - lhs)
    std::vector<DecreaseWitness> violations;
    bool containment_pass = true;

    bool pass() const { return violations.empty() && containment_pass; }
};

/**
 * @brief Samples terminal-set states and asserts the multi-instant cost
 *        decrease of the terminal law for each p in [1, P+1], plus the
 *        invariance and inter-sample containments when X_f is bounded.
 */
DecreaseReport verify_decrease(const TerminalIngredients& terminal,
                               const PlantModel& plant, const TokenBucketSpec& bucket,
                               int samples = 1000, uint64_t seed = 20260815);

/**
 * @brief Ellipsoid terminal set: largest sublevel set of x' P_f x whose
 *        control image fits in U, shrunk so the set and all its inter-sample
 *        images under the terminal law stay inside X.
 */
TerminalSet construct_terminal_set(const Matrix& Kf, const Matrix& Pf,
                                   const Polytope& X, const Polytope& U,
                                   LiftTable& lifts, long M, int P,
                                   bool* degenerate = nullptr);

/// Plain-text round trip for synthesized ingredients.
std::string format_ingredients(const TerminalIngredients& terminal,
                               const QmiReport& report);
TerminalIngredients parse_ingredients(const std::string& text);

}  // namespace stmpc
