#include "stmpc/tree.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <map>

namespace stmpc {

ScenarioTree build_tree(const std::vector<LossSequence>& admissible, int N) {
    ScenarioTree tree;
    tree.N = N;
    tree.horizon = admissible.empty() ? N : static_cast<int>(admissible[0].bits.size());
    std::vector<std::map<uint32_t, int>> stage_nodes(N);
    tree.paths.resize(admissible.size());
    for (size_t s = 0; s < admissible.size(); ++s) {
        uint32_t prefix = 0;
        tree.paths[s].resize(N);
        for (int i = 0; i < N; ++i) {
            auto [it, inserted] = stage_nodes[i].try_emplace(
                prefix, static_cast<int>(tree.node_stage.size()));
            if (inserted) {
                tree.node_stage.push_back(i);
                tree.node_decision.push_back(tree.decisions++);
            }
            tree.paths[s][i] = it->second;
            prefix = (prefix << 1) | admissible[s].bits[i];
        }
    }
    return tree;
}

TreeProblem build_tree_problem(const std::vector<int>& word,
                               const std::vector<LossSequence>& admissible,
                               const OverallState& xi0,
                               const TerminalIngredients& terminal, LiftTable& lifts,
                               const TokenBucketSpec& bucket) {
    (void)bucket;
    const int N = static_cast<int>(word.size());
    TreeProblem prob;
    prob.tree = build_tree(admissible, N);
    prob.n = static_cast<int>(xi0.x.size());
    prob.m = static_cast<int>(xi0.w.size());
    const int n = prob.n, m = prob.m;
    const int cols = 1 + prob.tree.dim(m);
    const int horizon = prob.tree.horizon;

    prob.node_Tx.assign(prob.tree.size(), Matrix());
    prob.C.reserve(admissible.size());

    for (size_t s = 0; s < admissible.size(); ++s) {
        Matrix Tx = Matrix::Zero(n, cols);
        Tx.col(0) = xi0.x;
        Matrix Tw = Matrix::Zero(m, cols);
        Tw.col(0) = xi0.w;
        Matrix C = Matrix::Zero(cols, cols);
        for (int i = 0; i < horizon; ++i) {
            const int sigma = admissible[s].bits[i];
            Matrix Vrow;
            int delta;
            if (i < N) {
                const int node = prob.tree.paths[s][i];
                if (prob.node_Tx[node].size() == 0) prob.node_Tx[node] = Tx;
                Vrow = Matrix::Zero(m, cols);
                Vrow.block(0, 1 + m * prob.tree.node_decision[node], m, m) =
                    Matrix::Identity(m, m);
                delta = word[i];
            } else {
                Vrow = terminal.Kf * Tx;
                delta = static_cast<int>(terminal.M);
            }
            const Matrix& Urow = sigma ? Vrow : Tw;
            const LiftedMatrices& L = lifts.at(delta);
            C.noalias() += Tx.transpose() * (L.Qj * Tx) +
                           Tx.transpose() * (L.Sj * Urow) +
                           Urow.transpose() * (L.Sj.transpose() * Tx) +
                           Urow.transpose() * (L.Rj * Urow);
            Matrix Tx_next = L.Aj * Tx;
            Tx_next.noalias() += L.Bj * Urow;
            Tw = Urow;
            Tx = std::move(Tx_next);
        }
        C.noalias() += Tx.transpose() * (terminal.Pf * Tx);
        prob.C.push_back(0.5 * (C + C.transpose()));
    }
    return prob;
}

namespace {

struct ScenarioQuad {
    double c0;
    Vector b;
    Matrix H;
};

double true_max(const std::vector<ScenarioQuad>& quads, const Vector& z) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& q : quads)
        best = std::max(best, q.c0 + 2.0 * q.b.dot(z) + z.dot(q.H * z));
    return best;
}

}  // namespace

TreeSolution solve_tree(const TreeProblem& problem, const SolverOptions& options) {
    const int dim = problem.tree.dim(problem.m);
    const int S = static_cast<int>(problem.C.size());
    std::vector<ScenarioQuad> quads(S);
    for (int s = 0; s < S; ++s) {
        quads[s].c0 = problem.C[s](0, 0);
        quads[s].b = problem.C[s].block(1, 0, dim, 1);
        quads[s].H = problem.C[s].block(1, 1, dim, dim);
    }

    TreeSolution sol;
    sol.z = Vector::Zero(dim);
    Vector z = sol.z;
    Vector values(S), weights(S);
    Vector grad(dim);
    Matrix hess(dim, dim);
    std::vector<Vector> grads(S, Vector(dim));

    auto eval_values = [&](const Vector& zz) {
        for (int s = 0; s < S; ++s)
            values[s] = quads[s].c0 + 2.0 * quads[s].b.dot(zz) +
                        zz.dot(quads[s].H * zz);
    };

    eval_values(z);
    const double vmax0 = values.maxCoeff();
    const double vmin0 = values.minCoeff();
    const double scale = std::max(std::abs(vmax0), 1e-30);
    double tau = std::max((vmax0 - vmin0) / 10.0, 1e-3 * scale);
    const double tau_floor = options.temperature_floor * scale;

    auto lse = [&](const Vector& vals, double t) {
        const double vm = vals.maxCoeff();
        double acc = 0.0;
        for (int s = 0; s < S; ++s) acc += std::exp((vals[s] - vm) / t);
        return vm + t * std::log(acc);
    };

    while (true) {
        double F = lse(values, tau);
        for (int it = 0; it < options.tree_newton_iters; ++it) {
            const double vm = values.maxCoeff();
            double wsum = 0.0;
            for (int s = 0; s < S; ++s) {
                weights[s] = std::exp((values[s] - vm) / tau);
                wsum += weights[s];
            }
            weights /= wsum;
            grad.setZero();
            hess.setZero();
            for (int s = 0; s < S; ++s) {
                grads[s] = 2.0 * (quads[s].b + quads[s].H * z);
                grad.noalias() += weights[s] * grads[s];
                hess.noalias() += (2.0 * weights[s]) * quads[s].H;
            }
            for (int s = 0; s < S; ++s) {
                const Vector d = grads[s] - grad;
                hess.noalias() += (weights[s] / tau) * (d * d.transpose());
            }
            hess.diagonal().array() += 1e-12 * std::max(1.0, hess.norm());
            Eigen::LDLT<Matrix> ldlt(hess);
            Vector step = -ldlt.solve(grad);
            if (!step.allFinite()) break;

            double alpha = 1.0;
            const double slope = grad.dot(step);
            bool moved = false;
            for (int bt = 0; bt < 30; ++bt) {
                const Vector zt = z + alpha * step;
                eval_values(zt);
                const double Ft = lse(values, tau);
                if (Ft <= F + 1e-4 * alpha * slope) {
                    z = zt;
                    moved = true;
                    const bool converged =
                        std::abs(F - Ft) <= options.tolerance * std::max(1.0, std::abs(F));
                    F = Ft;
                    if (converged) it = options.tree_newton_iters;
                    break;
                }
                alpha *= 0.5;
            }
            ++sol.iterations;
            if (!moved) {
                eval_values(z);
                break;
            }
        }
        if (tau <= tau_floor) break;
        tau = std::max(tau * options.temperature_factor, tau_floor * 0.999);
        eval_values(z);
    }

    sol.z = z;
    sol.value = true_max(quads, z);
    return sol;
}

std::vector<Matrix> fit_gains(const TreeProblem& problem, const Vector& z) {
    const int N = problem.tree.N;
    const int n = problem.n, m = problem.m;
    Vector aug(1 + z.size());
    aug[0] = 1.0;
    aug.tail(z.size()) = z;

    std::vector<Matrix> gains(N);
    for (int i = 0; i < N; ++i) {
        Matrix xx = Matrix::Zero(n, n);
        Matrix vx = Matrix::Zero(m, n);
        for (int node = 0; node < problem.tree.size(); ++node) {
            if (problem.tree.node_stage[node] != i) continue;
            const Vector x = problem.node_Tx[node] * aug;
            const Vector v = z.segment(m * problem.tree.node_decision[node], m);
            xx.noalias() += x * x.transpose();
            vx.noalias() += v * x.transpose();
        }
        const double ridge = 1e-10 * std::max(1.0, xx.trace() / n);
        xx.diagonal().array() += ridge;
        gains[i] = xx.ldlt().solve(vx.transpose()).transpose();
    }
    return gains;
}

}  // namespace stmpc
