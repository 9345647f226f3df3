// Acceptance gate for the shipped batch-reactor experiment. Each criterion
// prints one PASS/FAIL line; the process exits 0 only if every line passed.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "stmpc/config.hpp"
#include "stmpc/report.hpp"
#include "stmpc/riccati.hpp"
#include "stmpc/sim.hpp"

using namespace stmpc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Gate {
    bool all_pass = true;

    void report(int index, const std::string& label, bool pass,
                const std::string& detail) {
        std::cout << "criterion " << index << " (" << label << "): "
                  << (pass ? "PASS" : "FAIL") << "  [" << detail << "]\n";
        all_pass = all_pass && pass;
    }
};

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(3) << v;
    return out.str();
}

bool runs_bounded(const std::vector<uint8_t>& bits, int P, int r) {
    int run = r;
    bool any_success = false;
    for (uint8_t bit : bits) {
        if (bit) {
            run = 0;
            any_success = true;
        } else if (++run > P) {
            return false;
        }
    }
    return any_success;
}

bool enumeration_matches_brute_force(std::string& detail) {
    long checked = 0;
    for (int N = 1; N <= 5; ++N)
        for (int P = 0; P <= 3; ++P)
            for (int r = 0; r <= P; ++r) {
                std::set<std::vector<uint8_t>> want;
                const int L = N + P;
                for (long word = 0; word < (1L << L); ++word) {
                    std::vector<uint8_t> bits(L);
                    for (int i = 0; i < L; ++i) bits[i] = (word >> (L - 1 - i)) & 1;
                    if (runs_bounded(bits, P, r)) want.insert(bits);
                }
                const auto& got = enumerate_admissible(N, P, r);
                if (got.size() != want.size()) {
                    detail = "size mismatch at N=" + std::to_string(N) +
                             " P=" + std::to_string(P) + " r=" + std::to_string(r);
                    return false;
                }
                for (const auto& s : got)
                    if (!want.count(s.bits)) {
                        detail = "spurious sequence at N=" + std::to_string(N);
                        return false;
                    }
                checked += static_cast<long>(want.size());
            }
    detail = std::to_string(checked) + " sequences cross-checked";
    return true;
}

bool interval_cost_matches_step_sum(std::string& detail) {
    std::mt19937 rng(7001);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    std::uniform_int_distribution<int> dim(1, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        PlantModel plant;
        const int n = dim(rng), m = dim(rng);
        auto rand_mat = [&](int rows, int cols) {
            Matrix M(rows, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) M(i, j) = entry(rng);
            return M;
        };
        plant.A = rand_mat(n, n);
        plant.B = rand_mat(n, m);
        Matrix Wq = rand_mat(n, n), Wr = rand_mat(m, m);
        plant.Q = Wq.transpose() * Wq + 0.1 * Matrix::Identity(n, n);
        plant.R = Wr.transpose() * Wr + 0.1 * Matrix::Identity(m, m);
        LiftTable lifts(plant);
        TokenBucketSpec bucket{1, 2, 8};

        OverallState xi;
        xi.x = rand_mat(n, 1);
        xi.w = rand_mat(m, 1);
        xi.beta = 5;
        ControlPacket packet;
        packet.v = rand_mat(m, 1);
        packet.delta = 1 + (trial % 4);
        const int sigma = trial % 2;

        const double lifted = interval_cost(xi, packet, sigma, lifts, bucket);

        const Vector u = sigma ? packet.v : xi.w;
        double summed = 0.0;
        Vector x = xi.x;
        for (long j = 0; j < packet.delta; ++j) {
            summed += x.dot(plant.Q * x) + u.dot(plant.R * u);
            x = plant.A * x + plant.B * u;
        }
        worst = std::max(worst, std::abs(lifted - summed) /
                                    std::max(1.0, std::abs(summed)));
        if (worst > 1e-9) {
            detail = "relative gap " + fmt(worst) + " at trial " +
                     std::to_string(trial);
            return false;
        }
    }
    detail = "1000 instances, worst relative gap " + fmt(worst);
    return true;
}

// Feasibility certificate assembled from scratch: with X = Pf^-1, Y = Kf X,
// F = Aj X + Bj Y and Wt the inverse cost blocks, the block matrix
// [[X, Z', F'], [Z, Wt, 0], [F, 0, X]] with Z = [X; Y] is positive definite
// exactly when the decrease matrix inequality at interval j holds strictly.
Matrix certificate_block(const Matrix& X, const Matrix& Y,
                         const LiftedMatrices& L) {
    const int n = static_cast<int>(X.rows()), m = static_cast<int>(Y.rows());
    const Matrix F = L.Aj * X + L.Bj * Y;
    Matrix Z(n + m, n);
    Z.topRows(n) = X;
    Z.bottomRows(m) = Y;
    Matrix Wt(n + m, n + m);
    Wt.topLeftCorner(n, n) = L.Qt;
    Wt.topRightCorner(n, m) = L.St;
    Wt.bottomLeftCorner(m, n) = L.St.transpose();
    Wt.bottomRightCorner(m, m) = L.Rt;

    const int d = n + (n + m) + n;
    Matrix G = Matrix::Zero(d, d);
    G.topLeftCorner(n, n) = X;
    G.block(0, n, n, n + m) = Z.transpose();
    G.block(0, 2 * n + m, n, n) = F.transpose();
    G.block(n, 0, n + m, n) = Z;
    G.block(n, n, n + m, n + m) = Wt;
    G.block(2 * n + m, 0, n, n) = F;
    G.bottomRightCorner(n, n) = X;
    return G;
}

bool certificate_signs_agree(std::string& detail) {
    std::mt19937 rng(7002);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    std::uniform_int_distribution<int> dim(1, 3);
    std::uniform_int_distribution<int> interval(1, 3);
    int checked = 0;
    for (int trial = 0; trial < 100 || checked < 100; ++trial) {
        if (trial > 3000) {
            detail = "too few decisive instances";
            return false;
        }
        PlantModel plant;
        const int n = dim(rng), m = dim(rng);
        auto rand_mat = [&](int rows, int cols) {
            Matrix M(rows, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) M(i, j) = entry(rng);
            return M;
        };
        plant.A = rand_mat(n, n);
        plant.B = rand_mat(n, m);
        plant.Q = Matrix::Identity(n, n);
        plant.R = Matrix::Identity(m, m);
        LiftTable lifts(plant);

        Matrix Wx = rand_mat(n, n);
        Matrix X = Wx.transpose() * Wx + 0.3 * Matrix::Identity(n, n);
        Matrix Y = rand_mat(m, n);
        const Matrix Pmat = X.inverse();
        const Matrix K = Y * Pmat;
        const int j = interval(rng);

        const double rho =
            verify_qmi(K, (Pmat + Pmat.transpose()) / 2.0, lifts, j, 0)
                .residuals[0];
        const Matrix block = certificate_block(X, Y, lifts.at(j));
        const double lam =
            Eigen::SelfAdjointEigenSolver<Matrix>(block).eigenvalues().minCoeff();

        if (std::abs(rho) < 1e-7 || std::abs(lam) < 1e-9) continue;
        if ((rho < 0.0) != (lam > 0.0)) {
            detail = "sign disagreement at trial " + std::to_string(trial);
            return false;
        }
        ++checked;
    }
    detail = std::to_string(checked) + " decisive instances agree";
    return true;
}

bool receding_horizon_matches_lqr(std::string& detail) {
    PlantModel plant;
    plant.A = Matrix::Constant(1, 1, 1.2);
    plant.B = Matrix::Constant(1, 1, 1.0);
    plant.Q = Matrix::Identity(1, 1);
    plant.R = Matrix::Identity(1, 1);
    TokenBucketSpec bucket{1, 1, 1};

    SynthesisResult synth = synthesize(plant, bucket, 0);
    if (!synth.feasible) {
        detail = "scalar synthesis failed";
        return false;
    }
    TerminalIngredients terminal;
    terminal.Kf = synth.Kf;
    terminal.Pf = synth.Pf;
    terminal.M = 1;
    terminal.P = 0;

    LiftTable lifts(plant);
    WordRiccati sweep = riccati_over_word({1, 1, 1}, synth.Pf, lifts);

    MpcConfig mpc;
    mpc.N = 3;
    mpc.P = 0;
    mpc.delta_max = 1;
    mpc.solver.threads = 1;

    ControllerState cs;
    OverallState xi;
    xi.x = Vector::Constant(1, 2.0);
    xi.w = Vector::Zero(1);
    xi.beta = 1;

    double worst = 0.0;
    for (int k = 0; k < 8; ++k) {
        StepResult step = control_step(xi, 1, cs, terminal, lifts, bucket, mpc);
        const double expected = (sweep.gains[0] * xi.x)(0);
        worst = std::max(worst, std::abs(step.packet.v(0) - expected));
        xi = ncs_step(xi, step.packet.v, 1, 1, lifts, bucket);
    }
    if (worst > 1e-5) {
        detail = "worst input gap " + fmt(worst);
        return false;
    }
    detail = "8 instants, worst input gap " + fmt(worst);
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: stmpc-acceptance <config-file>\n";
        return 2;
    }

    FileConfig cfg;
    try {
        cfg = load_config(argv[1]);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    }

    Gate gate;

    // 1. Terminal ingredient synthesis and certification.
    TerminalIngredients terminal;
    bool synth_ok = false;
    {
        const auto start = Clock::now();
        std::string detail;
        try {
            SynthesisResult synth = synthesize(cfg.plant, cfg.bucket, cfg.mpc.P);
            LiftTable lifts(cfg.plant);
            const long M = cfg.bucket.base_period();
            QmiReport qmi =
                verify_qmi(synth.Kf, synth.Pf, lifts, M, cfg.mpc.P, 1e-8);
            terminal.Kf = synth.Kf;
            terminal.Pf = synth.Pf;
            terminal.M = M;
            terminal.P = cfg.mpc.P;
            terminal.set = construct_terminal_set(synth.Kf, synth.Pf, cfg.mpc.X,
                                                  cfg.mpc.U, lifts, M, cfg.mpc.P);
            DecreaseReport dec =
                verify_decrease(terminal, cfg.plant, cfg.bucket, 1000, 20260815);
            const double wall = seconds_since(start);
            synth_ok = synth.feasible && qmi.pass() &&
                       dec.worst_margin >= -1e-7 && dec.pass() && wall < 30.0;
            detail = "worst residual " + fmt(qmi.worst()) + " at p=" +
                     std::to_string(qmi.worst_p()) + ", decrease margin " +
                     fmt(dec.worst_margin) + " over 1000 states, " +
                     fmt(wall) + " s";
        } catch (const std::exception& ex) {
            detail = std::string("exception: ") + ex.what();
        }
        gate.report(1, "terminal synthesis and certificates", synth_ok, detail);
    }

    // 2. Robust closed loop under the scripted loss burst.
    SimResult robust;
    bool robust_ok = false;
    {
        const auto start = Clock::now();
        std::string detail;
        if (!synth_ok) {
            detail = "skipped: synthesis failed";
        } else {
            try {
                SimConfig sim = make_sim_config(cfg, terminal);
                robust = run(sim);
                const double wall = seconds_since(start);
                const bool tail = robust.max_x_tail <= cfg.tail_threshold;
                const bool bucket =
                    robust.beta_min >= 0 && robust.beta_max <= cfg.bucket.b;
                robust_ok = tail && bucket && robust.infeasible_instants == 0 &&
                            !robust.diverged && wall < 600.0;
                detail = "max |x| for t >= " + std::to_string(cfg.tail_start) +
                         " is " + fmt(robust.max_x_tail) + ", bucket range [" +
                         std::to_string(robust.beta_min) + ", " +
                         std::to_string(robust.beta_max) + "], " + fmt(wall) + " s";
            } catch (const std::exception& ex) {
                detail = std::string("exception: ") + ex.what();
            }
        }
        gate.report(2, "robust convergence and bucket bounds", robust_ok, detail);
    }

    // 3. Same experiment with the loss-blind controller diverges.
    {
        bool pass = false;
        std::string detail;
        if (!synth_ok) {
            detail = "skipped: synthesis failed";
        } else {
            try {
                SimConfig sim = make_sim_config(cfg, terminal);
                sim.nominal = true;
                SimResult nominal = run(sim);
                double x1_at_30 = 0.0;
                for (const TraceRecord& rec : nominal.trace)
                    if (rec.t == 30) x1_at_30 = rec.x(0);
                pass = std::abs(x1_at_30) > 1e2;
                detail = "|x_1(30)| = " + fmt(std::abs(x1_at_30));
            } catch (const std::exception& ex) {
                detail = std::string("exception: ") + ex.what();
            }
        }
        gate.report(3, "loss-blind controller diverges", pass, detail);
    }

    // 4. The robust run's sampling intervals settle at the base period.
    {
        bool pass = false;
        std::string detail;
        if (!robust_ok) {
            detail = "skipped: robust run unavailable";
        } else {
            IntervalSummary summary = sampling_interval_summary(robust);
            const long M = cfg.bucket.base_period();
            pass = summary.last5.size() == 5;
            std::string seq;
            for (int d : summary.last5) {
                pass = pass && d == M;
                seq += std::to_string(d) + " ";
            }
            detail = "last 5 intervals: " + seq + "(base period " +
                     std::to_string(M) + ")";
        }
        gate.report(4, "periodic interval tail", pass, detail);
    }

    // 5. Recursive feasibility across seeded random loss realizations.
    std::vector<double> sweep_margins;
    {
        const auto start = Clock::now();
        int failures = 0;
        std::string first_failure;
        if (!synth_ok) {
            failures = 20;
            first_failure = "skipped: synthesis failed";
        } else {
            for (uint64_t seed = 1; seed <= 20; ++seed) {
                SimConfig sim = make_sim_config(cfg, terminal);
                sim.loss.kind = LossModelSpec::Kind::Random;
                sim.loss.probability = 0.5;
                sim.loss.seed = seed;
                sim.T = std::min<long>(sim.T, 45);
                sim.mpc.solver.refine_top = 1;
                sim.mpc.solver.descent_iters = 8;
                try {
                    SimResult res = run(sim);
                    InvariantReport audit = assert_runtime_invariants(res, sim);
                    if (res.infeasible_instants != 0 || res.diverged ||
                        !audit.pass) {
                        ++failures;
                        if (first_failure.empty())
                            first_failure = "seed " + std::to_string(seed) +
                                            (audit.pass ? "" : ": " +
                                             audit.failures.front());
                    }
                    sweep_margins.push_back(res.min_margin);
                } catch (const std::exception& ex) {
                    ++failures;
                    if (first_failure.empty())
                        first_failure =
                            "seed " + std::to_string(seed) + ": " + ex.what();
                }
            }
        }
        std::string detail = std::to_string(20 - failures) +
                             "/20 realizations feasible at every instant, " +
                             fmt(seconds_since(start)) + " s";
        if (failures > 0) detail += "; first failure: " + first_failure;
        gate.report(5, "recursive feasibility sweep", failures == 0, detail);
    }

    // 6. Certified decrease margin across every robust run above.
    {
        bool pass = false;
        std::string detail;
        if (!robust_ok) {
            detail = "skipped: robust run unavailable";
        } else {
            double min_margin = robust.min_margin;
            for (double m : sweep_margins) min_margin = std::min(min_margin, m);
            pass = min_margin >= -1e-6 && !sweep_margins.empty();
            detail = "minimum margin " + fmt(min_margin) + " across " +
                     std::to_string(1 + sweep_margins.size()) + " runs";
        }
        gate.report(6, "certified cost decrease", pass, detail);
    }

    // 7. Independent oracle cross-checks.
    {
        const auto start = Clock::now();
        std::string d1, d2, d3, d4;
        const bool a = enumeration_matches_brute_force(d1);
        const bool b = interval_cost_matches_step_sum(d2);
        const bool c = certificate_signs_agree(d3);
        const bool d = receding_horizon_matches_lqr(d4);
        const double wall = seconds_since(start);
        const bool pass = a && b && c && d && wall < 60.0;
        gate.report(7, "oracle cross-checks", pass,
                    d1 + "; " + d2 + "; " + d3 + "; " + d4 + "; " + fmt(wall) +
                        " s");
    }

    std::cout << (gate.all_pass ? "acceptance: all criteria passed"
                                : "acceptance: FAILURES above")
              << std::endl;
    return gate.all_pass ? 0 : 1;
}
