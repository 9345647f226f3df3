#include "stmpc/policy.hpp"

namespace stmpc {

namespace {

double halfspace_excess(const Polytope& set, const Vector& z, double tol,
                        bool& ok_flag) {
    if (set.unconstrained()) return 0.0;
    const Vector resid = set.H * z - set.h;
    double acc = 0.0;
    for (int i = 0; i < resid.size(); ++i) {
        if (resid[i] > tol) {
            ok_flag = false;
            acc += resid[i] * resid[i];
        }
    }
    return acc;
}

}  // namespace

PolicyEval evaluate_policy(const FeedbackPolicy& policy, const OverallState& xi0,
                           const LossSequence& sequence,
                           const TerminalIngredients& terminal, LiftTable& lifts,
                           const TokenBucketSpec& bucket, const MpcConfig& config) {
    const int N = policy.horizon();
    const int P = config.P;
    if (static_cast<int>(sequence.bits.size()) != N + P)
        throw std::invalid_argument("evaluate_policy: sequence length must be N+P");
    constexpr double kTol = 1e-8;
    const long beta_floor = bucket.c - bucket.g;

    PolicyEval out;
    out.trajectory.reserve(N + P + 1);
    out.trajectory.push_back(xi0);

    OverallState xi = xi0;
    const bool check_x = !config.X.unconstrained();
    const bool check_u = !config.U.unconstrained();

    for (int i = 0; i < N + P; ++i) {
        const int sigma = sequence.bits[i];
        const bool terminal_phase = i >= N;
        const Vector v = terminal_phase ? Vector(terminal.Kf * xi.x)
                                        : Vector(policy.gains[i] * xi.x);
        const int delta =
            terminal_phase ? static_cast<int>(terminal.M) : policy.intervals[i];

        if (check_u) out.violation += halfspace_excess(config.U, v, kTol, out.input_ok);

        // transmission admissible iff the level stays >= 0 one step later
        if (xi.beta < beta_floor) out.bucket_ok = false;

        const ControlPacket packet{v, delta};
        out.value += interval_cost(xi, packet, sigma, lifts, bucket);

        if (check_x) {
            const Vector& u_applied = sigma ? v : xi.w;
            for (int j = 1; j < delta; ++j) {
                const LiftedMatrices& L = lifts.at(j);
                const Vector xj = L.Aj * xi.x + L.Bj * u_applied;
                out.violation +=
                    halfspace_excess(config.X, xj, kTol, out.intersample_ok);
            }
        }

        xi = ncs_step(xi, v, delta, sigma, lifts, bucket);
        out.trajectory.push_back(xi);

        if (check_x && i + 1 < N)
            out.violation += halfspace_excess(config.X, xi.x, kTol, out.state_ok);

        if (i + 1 >= N) {  // terminal window: instants N..N+P
            if (xi.beta < beta_floor || xi.beta > bucket.b) out.bucket_ok = false;
            if (!terminal.set.contains(xi.x, terminal.Pf, kTol)) {
                out.terminal_ok = false;
                if (terminal.set.kind == TerminalSet::Kind::Ellipsoid) {
                    const double excess =
                        xi.x.dot(terminal.Pf * xi.x) - terminal.set.level;
                    out.violation += excess * excess;
                }
            }
            if (check_u)
                out.violation += halfspace_excess(config.U, xi.w, kTol, out.input_ok);
        }
    }

    out.value += xi.x.dot(terminal.Pf * xi.x);
    out.feasible = out.state_ok && out.input_ok && out.intersample_ok &&
                   out.bucket_ok && out.terminal_ok;
    return out;
}

InnerMaxResult inner_max(const FeedbackPolicy& policy, const OverallState& xi0,
                         const std::vector<LossSequence>& admissible,
                         const TerminalIngredients& terminal, LiftTable& lifts,
                         const TokenBucketSpec& bucket, const MpcConfig& config) {
    if (admissible.empty())
        throw std::invalid_argument("inner_max: empty admissible set");
    InnerMaxResult out;
    out.value = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < static_cast<int>(admissible.size()); ++s) {
        PolicyEval ev = evaluate_policy(policy, xi0, admissible[s], terminal, lifts,
                                        bucket, config);
        if (!ev.feasible) out.feasible = false;
        out.violation = std::max(out.violation, ev.violation);
        if (ev.value > out.value) {
            out.value = ev.value;
            out.argmax = s;
        }
    }
    return out;
}

}  // namespace stmpc
