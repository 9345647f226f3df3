#include "stmpc/terminal.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <random>
#include <sstream>

#include "stmpc/riccati.hpp"

namespace stmpc {

namespace {

// Symmetric part helper.
Matrix sym(const Matrix& A) { return 0.5 * (A + A.transpose()); }

// Feasibility block for one horizon h = p*M:
//   [ X        0      0      A_h X + B_h Y ]
//   [ .        Qt_h   St_h   X             ]
//   [ .        .      Rt_h   Y             ]
//   [ .        .      .      X             ]  >= 0
Matrix assemble_block(const Matrix& X, const Matrix& Y, const LiftedMatrices& L) {
    const int n = static_cast<int>(X.rows());
    const int m = static_cast<int>(Y.rows());
    const int d = 3 * n + m;
    Matrix G = Matrix::Zero(d, d);
    G.block(0, 0, n, n) = X;
    G.block(0, 2 * n + m, n, n) = L.Aj * X + L.Bj * Y;
    G.block(n, n, n, n) = L.Qt;
    G.block(n, 2 * n, n, m) = L.St;
    G.block(n, 2 * n + m, n, n) = X;
    G.block(2 * n, 2 * n, m, m) = L.Rt;
    G.block(2 * n, 2 * n + m, m, n) = Y;
    G.block(2 * n + m, 2 * n + m, n, n) = X;
    G.block(2 * n + m, 0, n, n) = G.block(0, 2 * n + m, n, n).transpose();
    G.block(2 * n, n, m, n) = G.block(n, 2 * n, n, m).transpose();
    G.block(2 * n + m, n, n, n) = G.block(n, 2 * n + m, n, n).transpose();
    G.block(2 * n + m, 2 * n, n, m) = G.block(2 * n, 2 * n + m, m, n).transpose();
    return G;
}

Matrix project_psd(const Matrix& S, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym(S));
    Vector ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], floor);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct VarPacking {
    int n, m;
    int nx() const { return n * (n + 1) / 2; }
    int ny() const { return m * n; }
    int dim() const { return nx() + ny(); }

    void unpack(const Vector& w, Matrix& X, Matrix& Y) const {
        X.resize(n, n);
        int idx = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                X(i, j) = w[idx];
                X(j, i) = w[idx];
                ++idx;
            }
        Y.resize(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) Y(i, j) = w[idx++];
    }
};

}  // namespace

QmiReport verify_qmi(const Matrix& Kf, const Matrix& Pf, LiftTable& lifts, long M,
                     int P, double tolerance) {
    const int n = static_cast<int>(Pf.rows());
    const int m = static_cast<int>(Kf.rows());
    QmiReport report;
    report.tolerance = tolerance;
    Matrix IK(n + m, n);
    IK.topRows(n) = Matrix::Identity(n, n);
    IK.bottomRows(m) = Kf;
    for (int p = 1; p <= P + 1; ++p) {
        const LiftedMatrices& L = lifts.at(static_cast<int>(p * M));
        const Matrix Phi = L.Aj + L.Bj * Kf;
        const Matrix Qmi =
            sym(Phi.transpose() * Pf * Phi - Pf + IK.transpose() * L.cost_block() * IK);
        Eigen::SelfAdjointEigenSolver<Matrix> es(Qmi);
        report.residuals.push_back(es.eigenvalues().maxCoeff());
    }
    return report;
}

SynthesisResult synthesize(const PlantModel& plant, const TokenBucketSpec& bucket,
                           int P, const SynthesisOptions& options) {
    plant.validate();
    bucket.validate();
    const int n = plant.n(), m = plant.m();
    const long M = bucket.base_period();
    LiftTable lifts(plant);
    const int d = 3 * n + m;
    const int blocks = P + 1;
    VarPacking pack{n, m};

    std::vector<const LiftedMatrices*> stages;
    for (int p = 1; p <= blocks; ++p) stages.push_back(&lifts.at(static_cast<int>(p * M)));

    // Linear operator w -> stacked LMI blocks (full entries), built by probing.
    const int rows = blocks * d * d;
    Matrix Lop(rows, pack.dim());
    Vector base(rows);
    {
        Matrix X0 = Matrix::Zero(n, n), Y0 = Matrix::Zero(m, n);
        int row = 0;
        for (int b = 0; b < blocks; ++b) {
            Matrix G = assemble_block(X0, Y0, *stages[b]);
            base.segment(row, d * d) = Eigen::Map<Vector>(G.data(), d * d);
            row += d * d;
        }
        for (int c = 0; c < pack.dim(); ++c) {
            Vector e = Vector::Zero(pack.dim());
            e[c] = 1.0;
            Matrix X, Y;
            pack.unpack(e, X, Y);
            row = 0;
            for (int b = 0; b < blocks; ++b) {
                Matrix G = assemble_block(X, Y, *stages[b]);
                Lop.col(c).segment(row, d * d) =
                    Eigen::Map<Vector>(G.data(), d * d) - base.segment(row, d * d);
                row += d * d;
            }
        }
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Lop);

    // Warm start from the M-step LQR fixed point.
    SynthesisResult result;
    Vector w = Vector::Zero(pack.dim());
    {
        DareResult dare = solve_dare(lifts.at(static_cast<int>(M)));
        Matrix X0, Y0;
        if (dare.converged && dare.P.allFinite()) {
            Eigen::LDLT<Matrix> ldlt(2.0 * dare.P);
            X0 = ldlt.solve(Matrix::Identity(n, n));
            Y0 = dare.K * X0;
        } else {
            X0 = Matrix::Identity(n, n);
            Y0 = Matrix::Zero(m, n);
        }
        int idx = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) w[idx++] = 0.5 * (X0(i, j) + X0(j, i));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) w[idx++] = Y0(i, j);
    }

    auto extract = [&](const Vector& wv, Matrix& Kf, Matrix& Pf) -> bool {
        Matrix X, Y;
        pack.unpack(wv, X, Y);
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym(X));
        if (es.eigenvalues().minCoeff() <= 1e-12) return false;
        Eigen::LDLT<Matrix> ldlt(sym(X));
        Pf = sym(ldlt.solve(Matrix::Identity(n, n)));
        Kf = ldlt.solve(Y.transpose()).transpose();
        return true;
    };

    double best_worst = std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.max_iterations; ++it) {
        // Project the current affine point onto the PSD cones (with margin),
        // then back onto the affine family by least squares.
        Vector img = Lop * w + base;
        Vector target(rows);
        for (int b = 0; b < blocks; ++b) {
            Eigen::Map<const Matrix> G(img.data() + b * d * d, d, d);
            Matrix Gp = project_psd(G, options.cone_margin);
            Eigen::Map<Vector>(target.data() + b * d * d, d * d) =
                Eigen::Map<Vector>(Gp.data(), d * d);
        }
        w = cod.solve(target - base);

        if ((it + 1) % options.check_every == 0 || it + 1 == options.max_iterations) {
            Matrix Kf, Pf;
            if (!extract(w, Kf, Pf)) continue;
            QmiReport rep = verify_qmi(Kf, Pf, lifts, M, P, options.target_residual);
            if (rep.worst() < best_worst) {
                best_worst = rep.worst();
                result.Kf = Kf;
                result.Pf = Pf;
                result.report = rep;
            }
            if (rep.pass()) {
                result.Kf = Kf;
                result.Pf = Pf;
                result.report = rep;
                result.iterations = it + 1;
                result.feasible = true;
                return result;
            }
        }
    }

    // Border case: keep the best extraction, try a conservative scaling of Pf.
    if (result.Pf.size() > 0) {
        for (double t : {1.02, 1.05, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0}) {
            QmiReport rep = verify_qmi(result.Kf, t * result.Pf, lifts, M, P,
                                       options.target_residual);
            if (rep.pass()) {
                result.Pf = t * result.Pf;
                result.report = rep;
                result.iterations = options.max_iterations;
                result.feasible = true;
                return result;
            }
        }
    }
    result.iterations = options.max_iterations;
    result.feasible = false;
    result.most_violated_p = result.report.residuals.empty() ? 1 : result.report.worst_p();
    return result;
}

DecreaseReport verify_decrease(const TerminalIngredients& terminal,
                               const PlantModel& plant, const TokenBucketSpec& bucket,
                               int samples, uint64_t seed) {
    DecreaseReport report;
    report.samples = samples;
    report.seed = seed;
    LiftTable lifts(plant);
    const int n = plant.n();
    const long M = terminal.M;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Eigen::SelfAdjointEigenSolver<Matrix> es(terminal.Pf);
    const Matrix Pf_inv_sqrt = es.operatorInverseSqrt();

    for (int s = 0; s < samples; ++s) {
        Vector dir(n);
        for (int i = 0; i < n; ++i) dir[i] = gauss(rng);
        const double nrm = dir.norm();
        if (nrm < 1e-12) continue;
        dir /= nrm;
        Vector x;
        if (terminal.set.kind == TerminalSet::Kind::Ellipsoid) {
            x = std::sqrt(std::max(terminal.set.level, 0.0)) * (Pf_inv_sqrt * dir);
        } else {
            x = dir;
        }

        OverallState xi{x, Vector::Zero(plant.m()), bucket.c - bucket.g};
        for (int p = 1; p <= terminal.P + 1; ++p) {
            // roll out p instants of the terminal law with loss word {1,0,...,0}
            double cost = 0.0;
            OverallState cur = xi;
            for (int i = 0; i < p; ++i) {
                const int sigma = i == 0 ? 1 : 0;
                ControlPacket pkt{terminal.Kf * cur.x, M};
                cost += interval_cost(cur, pkt, sigma, lifts, bucket);
                cur = ncs_step(cur, pkt.v, static_cast<int>(M), sigma, lifts, bucket);
            }
            const double lhs = cur.x.dot(terminal.Pf * cur.x) - xi.x.dot(terminal.Pf * xi.x);
            const double rhs = -cost;
            report.worst_margin = std::min(report.worst_margin, rhs - lhs);
            if (lhs > rhs + report.tolerance)
                report.violations.push_back({xi.x, p, lhs, rhs});
            if (terminal.set.kind != TerminalSet::Kind::Unconstrained) {
                if (!terminal.set.contains(cur.x, terminal.Pf, 1e-8))
                    report.containment_pass = false;
            }
        }
    }
    return report;
}

TerminalSet construct_terminal_set(const Matrix& Kf, const Matrix& Pf,
                                   const Polytope& X, const Polytope& U,
                                   LiftTable& lifts, long M, int P, bool* degenerate) {
    if (degenerate) *degenerate = false;
    TerminalSet set;
    if (X.unconstrained() && U.unconstrained()) {
        set.kind = TerminalSet::Kind::Unconstrained;
        return set;
    }
    const int n = static_cast<int>(Pf.rows());
    Eigen::LDLT<Matrix> ldlt(Pf);
    const Matrix Pf_inv = ldlt.solve(Matrix::Identity(n, n));

    // Step 1: largest alpha with Kf {x : x'Pf x <= alpha} inside U.
    double alpha = 1.0;
    if (!U.unconstrained()) {
        alpha = std::numeric_limits<double>::infinity();
        for (int i = 0; i < U.H.rows(); ++i) {
            const Vector f = (U.H.row(i) * Kf).transpose();
            const double q = f.dot(Pf_inv * f);
            if (q <= 1e-14) continue;  // face never active for this gain
            alpha = std::min(alpha, U.h[i] * U.h[i] / q);
        }
        if (!std::isfinite(alpha)) alpha = 1.0;
    }

    // Step 2: shrink so the set and its closed-loop inter-sample images fit X.
    double gamma = 1.0;
    if (!X.unconstrained()) {
        gamma = std::numeric_limits<double>::infinity();
        std::vector<Matrix> maps;
        maps.push_back(Matrix::Identity(n, n));
        for (int p = 0; p <= P; ++p)
            for (int j = 1; j < M; ++j) {
                const LiftedMatrices& L = lifts.at(static_cast<int>(p * M + j));
                maps.push_back(L.Aj + L.Bj * Kf);
            }
        for (const Matrix& T : maps)
            for (int i = 0; i < X.H.rows(); ++i) {
                const Vector f = (X.H.row(i) * T).transpose();
                const double support = std::sqrt(std::max(alpha * f.dot(Pf_inv * f), 0.0));
                if (support <= 1e-14) continue;
                gamma = std::min(gamma, X.h[i] / support);
            }
        if (!std::isfinite(gamma)) gamma = 1.0;
        gamma = std::max(gamma, 0.0);
        // a loose state set must not loosen the input containment
        if (!U.unconstrained()) gamma = std::min(gamma, 1.0);
    }

    set.kind = TerminalSet::Kind::Ellipsoid;
    set.level = gamma * gamma * alpha;
    if (set.level <= 0.0 && degenerate) *degenerate = true;
    return set;
}

std::string format_ingredients(const TerminalIngredients& terminal,
                               const QmiReport& report) {
    std::ostringstream out;
    out.precision(17);
    const int n = static_cast<int>(terminal.Pf.rows());
    const int m = static_cast<int>(terminal.Kf.rows());
    out << "# terminal ingredients\n";
    out << "n " << n << "\nm " << m << "\nM " << terminal.M << "\nP " << terminal.P
        << "\n";
    out << "Pf";
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out << " " << terminal.Pf(i, j);
    out << "\nKf";
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out << " " << terminal.Kf(i, j);
    out << "\n";
    switch (terminal.set.kind) {
        case TerminalSet::Kind::Unconstrained: out << "set unconstrained\n"; break;
        case TerminalSet::Kind::Ellipsoid:
            out << "set ellipsoid " << terminal.set.level << "\n";
            break;
        case TerminalSet::Kind::Polytope: out << "set polytope\n"; break;
    }
    out << "# verification\n";
    for (size_t i = 0; i < report.residuals.size(); ++i)
        out << "# qmi p=" << (i + 1) << " max_eig " << report.residuals[i] << "\n";
    out << "# result " << (report.pass() ? "PASS" : "FAIL") << "\n";
    return out.str();
}

TerminalIngredients parse_ingredients(const std::string& text) {
    TerminalIngredients t;
    int n = -1, m = -1;
    std::istringstream in(text);
    std::string line;
    std::vector<double> pf, kf;
    std::string set_kind;
    double set_level = 0.0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "n") ls >> n;
        else if (key == "m") ls >> m;
        else if (key == "M") ls >> t.M;
        else if (key == "P") ls >> t.P;
        else if (key == "Pf") { double v; while (ls >> v) pf.push_back(v); }
        else if (key == "Kf") { double v; while (ls >> v) kf.push_back(v); }
        else if (key == "set") { ls >> set_kind; if (set_kind == "ellipsoid") ls >> set_level; }
        else throw std::invalid_argument("ingredients file: unknown key " + key);
    }
    if (n <= 0 || m <= 0) throw std::invalid_argument("ingredients file: missing dimensions");
    if (static_cast<int>(pf.size()) != n * n || static_cast<int>(kf.size()) != m * n)
        throw std::invalid_argument("ingredients file: matrix size mismatch");
    t.Pf = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               pf.data(), n, n);
    t.Kf = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               kf.data(), m, n);
    if (set_kind == "unconstrained") t.set.kind = TerminalSet::Kind::Unconstrained;
    else if (set_kind == "ellipsoid") {
        t.set.kind = TerminalSet::Kind::Ellipsoid;
        t.set.level = set_level;
    } else if (set_kind == "polytope") t.set.kind = TerminalSet::Kind::Polytope;
    else throw std::invalid_argument("ingredients file: missing set kind");
    return t;
}

}  // namespace stmpc
