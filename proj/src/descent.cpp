#include "stmpc/descent.hpp"

#include <cmath>

namespace stmpc {

namespace {

using GainMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Allocation-free scenario sweep over a packed gain vector, used inside the
/// finite-difference loop.
class SweepEvaluator {
  public:
    SweepEvaluator(const std::vector<int>& word,
                   const std::vector<LossSequence>& admissible,
                   const OverallState& xi0, const TerminalIngredients& terminal,
                   LiftTable& lifts, const MpcConfig& config)
        : word_(word),
          admissible_(admissible),
          xi0_(xi0),
          terminal_(terminal),
          config_(config),
          n_(static_cast<int>(xi0.x.size())),
          m_(static_cast<int>(xi0.w.size())) {
        for (int i = 0; i < static_cast<int>(word.size()); ++i)
            stages_.push_back(&lifts.at(word[i]));
        terminal_stage_ = &lifts.at(static_cast<int>(terminal.M));
        single_ = &lifts.at(1);
        constrained_ = !config.X.unconstrained() || !config.U.unconstrained();
        x_.resize(n_);
        w_.resize(m_);
        v_.resize(m_);
        xn_.resize(n_);
    }

    bool constrained() const { return constrained_; }

    /// Per-scenario penalized values for the packed gains theta.
    void values(const double* theta, double penalty, Vector& out) {
        const int S = static_cast<int>(admissible_.size());
        const int N = static_cast<int>(word_.size());
        const int horizon = static_cast<int>(admissible_[0].bits.size());
        if (out.size() != S) out.resize(S);
        for (int s = 0; s < S; ++s) {
            x_ = xi0_.x;
            w_ = xi0_.w;
            double cost = 0.0;
            double viol = 0.0;
            for (int i = 0; i < horizon; ++i) {
                const bool term = i >= N;
                const LiftedMatrices& L = term ? *terminal_stage_ : *stages_[i];
                if (term)
                    v_.noalias() = terminal_.Kf * x_;
                else
                    v_.noalias() = GainMap(theta + i * m_ * n_, m_, n_) * x_;
                const Vector& u = admissible_[s].bits[i] ? v_ : w_;
                cost += x_.dot(L.Qj * x_) + 2.0 * x_.dot(L.Sj * u) + u.dot(L.Rj * u);
                if (constrained_) viol += stage_violation(u, L);
                xn_.noalias() = L.Aj * x_;
                xn_.noalias() += L.Bj * u;
                x_.swap(xn_);
                w_ = u;
                if (constrained_ && !term) viol += excess(config_.X, x_);
            }
            cost += x_.dot(terminal_.Pf * x_);
            if (constrained_) {
                viol += terminal_violation(x_);
                cost += penalty * viol;
            }
            out[s] = cost;
        }
    }

  private:
    /// Packet membership plus inter-sample state membership over the hold.
    double stage_violation(const Vector& u, const LiftedMatrices& L) {
        double acc = excess(config_.U, v_);
        if (!config_.X.unconstrained()) {
            acc += excess(config_.X, x_);
            Vector xj = x_;
            for (int j = 1; j < L.j; ++j) {
                Vector xjn = single_->Aj * xj + single_->Bj * u;
                xj.swap(xjn);
                acc += excess(config_.X, xj);
            }
        }
        return acc;
    }

    double terminal_violation(const Vector& x) const {
        if (terminal_.set.kind == TerminalSet::Kind::Ellipsoid) {
            const double e = x.dot(terminal_.Pf * x) - terminal_.set.level;
            if (e > 0) return e * e;
        }
        return excess(config_.X, x);
    }

    static double excess(const Polytope& set, const Vector& z) {
        if (set.unconstrained()) return 0.0;
        double acc = 0.0;
        const Vector r = set.H * z - set.h;
        for (int i = 0; i < r.size(); ++i)
            if (r[i] > 0) acc += r[i] * r[i];
        return acc;
    }

    const std::vector<int>& word_;
    const std::vector<LossSequence>& admissible_;
    const OverallState& xi0_;
    const TerminalIngredients& terminal_;
    const MpcConfig& config_;
    int n_, m_;
    std::vector<const LiftedMatrices*> stages_;
    const LiftedMatrices* terminal_stage_ = nullptr;
    const LiftedMatrices* single_ = nullptr;
    bool constrained_ = false;
    Vector x_, w_, v_, xn_;
};

double lse(const Vector& vals, double tau) {
    const double vm = vals.maxCoeff();
    double acc = 0.0;
    for (int s = 0; s < vals.size(); ++s) acc += std::exp((vals[s] - vm) / tau);
    return vm + tau * std::log(acc);
}

}  // namespace

DescentResult descend_gains(const std::vector<int>& word,
                            const std::vector<Matrix>& seed_gains,
                            const OverallState& xi0,
                            const std::vector<LossSequence>& admissible,
                            const TerminalIngredients& terminal, LiftTable& lifts,
                            const TokenBucketSpec& bucket, const MpcConfig& config) {
    (void)bucket;
    const SolverOptions& opt = config.solver;
    const int N = static_cast<int>(word.size());
    const int m = static_cast<int>(xi0.w.size());
    const int n = static_cast<int>(xi0.x.size());
    const int dim = N * m * n;

    SweepEvaluator sweep(word, admissible, xi0, terminal, lifts, config);

    Vector theta(dim);
    for (int i = 0; i < N; ++i)
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>(theta.data() + i * m * n, m, n) =
            seed_gains[i];

    DescentResult result;
    Vector vals;
    const int rounds = sweep.constrained() ? opt.penalty_rounds : 1;
    double penalty = opt.penalty_initial;

    Vector best_theta = theta;
    sweep.values(theta.data(), 0.0, vals);
    double best_true = vals.maxCoeff();

    Vector grad(dim), probe(dim), vwork;
    for (int round = 0; round < rounds; ++round, penalty *= opt.penalty_growth) {
        sweep.values(theta.data(), penalty, vals);
        const double vmax = vals.maxCoeff();
        const double vmin = vals.minCoeff();
        const double scale = std::max(std::abs(vmax), 1e-30);
        double tau = std::max((vmax - vmin) / 10.0, 1e-3 * scale);
        const double tau_floor = opt.temperature_floor * scale;
        double step_size = 0.0;

        while (true) {
            double F = lse(vals, tau);
            for (int it = 0; it < opt.descent_iters; ++it) {
                for (int c = 0; c < dim; ++c) {
                    const double h = opt.fd_step * std::max(1.0, std::abs(theta[c]));
                    probe = theta;
                    probe[c] += h;
                    sweep.values(probe.data(), penalty, vwork);
                    const double fp = lse(vwork, tau);
                    probe[c] -= 2.0 * h;
                    sweep.values(probe.data(), penalty, vwork);
                    grad[c] = (fp - lse(vwork, tau)) / (2.0 * h);
                }
                ++result.gradient_steps;
                const double gnorm = grad.norm();
                if (gnorm < 1e-14 * std::max(1.0, std::abs(F))) break;
                if (step_size <= 0.0)
                    step_size = 0.1 * std::max(1.0, theta.norm()) / gnorm;

                bool moved = false;
                double trial = step_size;
                for (int bt = 0; bt < 30; ++bt) {
                    probe = theta - trial * grad;
                    sweep.values(probe.data(), penalty, vwork);
                    const double Ft = lse(vwork, tau);
                    if (Ft < F - 1e-4 * trial * gnorm * gnorm) {
                        theta.swap(probe);
                        vals = vwork;
                        moved = true;
                        const bool converged =
                            F - Ft <= opt.tolerance * std::max(1.0, std::abs(F));
                        F = Ft;
                        step_size = trial * 2.0;
                        if (!sweep.constrained()) {
                            const double true_now = vals.maxCoeff();
                            if (true_now < best_true) {
                                best_true = true_now;
                                best_theta = theta;
                            }
                        }
                        if (converged) it = opt.descent_iters;
                        break;
                    }
                    trial *= 0.5;
                }
                if (!moved) break;
            }
            if (tau <= tau_floor) break;
            tau = std::max(tau * opt.temperature_factor, tau_floor * 0.999);
        }

        sweep.values(theta.data(), 0.0, vals);
        const double true_now = vals.maxCoeff();
        if (true_now < best_true) {
            best_true = true_now;
            best_theta = theta;
        }
    }

    result.gains.resize(N);
    for (int i = 0; i < N; ++i)
        result.gains[i] = GainMap(best_theta.data() + i * m * n, m, n);
    result.value = best_true;
    return result;
}

}  // namespace stmpc
