#include "stmpc/sim.hpp"

#include <sstream>

namespace stmpc {

LossModelSpec parse_loss_spec(const std::string& text) {
    LossModelSpec spec;
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    if (head == "script") {
        if (colon == std::string::npos)
            throw std::invalid_argument("loss spec: script needs bits");
        spec.kind = LossModelSpec::Kind::Scripted;
        spec.bits.clear();
        for (char ch : text.substr(colon + 1)) {
            if (ch == '0') spec.bits.push_back(0);
            else if (ch == '1') spec.bits.push_back(1);
            else if (ch == ',' || ch == ' ') continue;
            else throw std::invalid_argument("loss spec: bad script bit");
        }
        if (spec.bits.empty())
            throw std::invalid_argument("loss spec: empty script");
    } else if (head == "random") {
        if (colon == std::string::npos)
            throw std::invalid_argument("loss spec: random needs p,seed");
        spec.kind = LossModelSpec::Kind::Random;
        std::istringstream in(text.substr(colon + 1));
        char comma = 0;
        if (!(in >> spec.probability >> comma >> spec.seed) || comma != ',')
            throw std::invalid_argument("loss spec: random needs p,seed");
        if (spec.probability < 0.0 || spec.probability > 1.0)
            throw std::invalid_argument("loss spec: probability outside [0,1]");
    } else if (head == "adversarial") {
        spec.kind = LossModelSpec::Kind::Adversarial;
    } else {
        throw std::invalid_argument("loss spec: unknown kind '" + head + "'");
    }
    return spec;
}

std::string format_loss_spec(const LossModelSpec& spec) {
    std::ostringstream out;
    switch (spec.kind) {
        case LossModelSpec::Kind::Scripted: {
            out << "script:";
            for (uint8_t b : spec.bits) out << int(b);
            break;
        }
        case LossModelSpec::Kind::Random:
            out << "random:" << spec.probability << "," << spec.seed;
            break;
        case LossModelSpec::Kind::Adversarial:
            out << "adversarial";
            break;
    }
    return out.str();
}

std::unique_ptr<LossModel> make_loss_model(const LossModelSpec& spec, int P) {
    switch (spec.kind) {
        case LossModelSpec::Kind::Scripted:
            return std::make_unique<ScriptedLoss>(spec.bits);
        case LossModelSpec::Kind::Random:
            return std::make_unique<BoundedRandomLoss>(spec.probability, spec.seed, P);
        case LossModelSpec::Kind::Adversarial:
            return std::make_unique<AdversarialLoss>(P);
    }
    throw std::logic_error("unreachable loss model kind");
}

void SimConfig::validate() const {
    plant.validate();
    bucket.validate();
    mpc.validate(bucket.base_period());
    if (beta0 < 0 || beta0 > bucket.b)
        throw std::invalid_argument("sim: beta0 must lie in [0, b]");
    if (T < 1) throw std::invalid_argument("sim: horizon T must be >= 1");
    if (x0.size() != plant.n() || w0.size() != plant.m())
        throw std::invalid_argument("sim: x0/w0 dimensions do not match the plant");
    if (terminal.Pf.rows() != plant.n())
        throw std::invalid_argument("sim: terminal ingredients do not match the plant");
}

SimResult run(const SimConfig& config) {
    config.validate();
    SimResult result;
    PlantModel plant = config.plant;
    LiftTable lifts(plant);
    auto loss = make_loss_model(config.loss, config.mpc.P);

    ControllerState cs;
    cs.nominal = config.nominal;

    OverallState xi{config.x0, config.w0, config.beta0};
    long t = 0;
    int ack = 1;
    int run_len = 0;
    bool solving = true;
    Vector u_hold = config.w0;
    double prev_value = 0.0;
    double prev_xqx = 0.0;
    bool have_prev_value = false;
    result.beta_min = config.beta0;
    result.beta_max = config.beta0;
    result.trace.reserve(config.T + 1);

    auto push_record = [&](const Vector& x, const Vector& u, long beta) {
        TraceRecord rec;
        rec.t = t;
        rec.x = x;
        rec.u = u;
        rec.beta = beta;
        result.trace.push_back(std::move(rec));
        result.beta_min = std::min(result.beta_min, beta);
        result.beta_max = std::max(result.beta_max, beta);
    };

    while (t < config.T) {
        if (result.diverged || !solving) {
            // open loop after divergence or an infeasible nominal instant
            push_record(xi.x, u_hold, xi.beta);
            xi.x = plant.A * xi.x + plant.B * u_hold;
            xi.beta = bucket_step(xi.beta, false, config.bucket);
            xi.w = u_hold;
            ++t;
            if (!result.diverged && xi.x.cwiseAbs().maxCoeff() > config.blowup) {
                result.diverged = true;
                result.diverged_t = t;
            }
            if (!result.diverged && solving == false) solving = true;
            continue;
        }

        const int k_now = static_cast<int>(result.instants.size());
        StepResult step;
        try {
            step = control_step(xi, ack, cs, config.terminal, lifts, config.bucket,
                                config.mpc);
        } catch (const InfeasibleProblem&) {
            if (k_now == 0 || !config.nominal) throw;
            ++result.infeasible_instants;
            solving = false;  // hold the last input for one step, then retry
            continue;
        }

        const int sigma = loss->sample(k_now, run_len);
        if (!config.nominal && sigma == 0 && run_len >= config.mpc.P)
            throw AssumptionViolation(
                "loss process produced more than P consecutive losses at t=" +
                std::to_string(t));

        const Vector applied = sigma ? step.packet.v : xi.w;
        const int delta = static_cast<int>(step.packet.delta);

        InstantRecord inst;
        inst.k = k_now;
        inst.t = t;
        inst.delta = delta;
        inst.sigma = sigma;
        inst.ack = ack;
        inst.r = step.r;
        inst.worst_value = step.adopted.worst_value;
        inst.provenance = step.adopted.provenance;
        inst.words_feasible = step.diagnostics.words_feasible;
        inst.admissible_count = step.diagnostics.admissible_count;
        result.instants.push_back(inst);
        if (step.adopted.provenance == Provenance::FallbackCandidate)
            ++result.fallback_count;

        if (have_prev_value && !config.nominal) {
            const double margin = prev_value - step.adopted.worst_value - prev_xqx;
            result.margins.push_back(margin);
            result.min_margin = std::min(result.min_margin, margin);
        }
        prev_value = step.adopted.worst_value;
        prev_xqx = xi.x.dot(plant.Q * xi.x);
        have_prev_value = true;

        // hold the applied input over the chosen interval
        for (int j = 0; j < delta && t < config.T; ++j) {
            push_record(xi.x, applied, xi.beta);
            if (j == 0) {
                TraceRecord& rec = result.trace.back();
                rec.event = true;
                rec.k = inst.k;
                rec.delta = delta;
                rec.v = step.packet.v;
                rec.sigma = sigma;
                rec.ack = ack;
                rec.r = inst.r;
                rec.worst_value = inst.worst_value;
                rec.provenance = inst.provenance;
            }
            xi.x = plant.A * xi.x + plant.B * applied;
            xi.beta = bucket_step(xi.beta, j == 0, config.bucket);
            ++t;
            if (!result.diverged && xi.x.cwiseAbs().maxCoeff() > config.blowup) {
                result.diverged = true;
                result.diverged_t = t;
            }
        }
        xi.w = applied;
        u_hold = applied;
        ack = sigma;
        run_len = sigma ? 0 : run_len + 1;
    }
    push_record(xi.x, u_hold, xi.beta);

    // tail metrics
    double max_tail = 0.0;
    for (const TraceRecord& rec : result.trace)
        if (rec.t >= config.tail_start)
            max_tail = std::max(max_tail, rec.x.cwiseAbs().maxCoeff());
    result.max_x_tail = max_tail;

    long threshold_t = -1;
    for (long i = static_cast<long>(result.trace.size()) - 1; i >= 0; --i) {
        if (result.trace[i].x.cwiseAbs().maxCoeff() <= config.tail_threshold)
            threshold_t = result.trace[i].t;
        else
            break;
    }
    result.time_to_threshold = threshold_t;
    return result;
}

InvariantReport assert_runtime_invariants(const SimResult& result,
                                          const SimConfig& config) {
    InvariantReport report;
    auto fail = [&](const std::string& msg) {
        report.pass = false;
        report.failures.push_back(msg);
    };

    for (const TraceRecord& rec : result.trace) {
        if (rec.beta < 0 || rec.beta > config.bucket.b)
            fail("bucket level outside [0,b] at t=" + std::to_string(rec.t));
        if (!config.mpc.X.unconstrained() && !config.mpc.X.contains(rec.x))
            fail("state outside X at t=" + std::to_string(rec.t));
        if (!config.mpc.U.unconstrained() && !config.mpc.U.contains(rec.u))
            fail("input outside U at t=" + std::to_string(rec.t));
        if (rec.event) {
            if (rec.delta < 1 || rec.delta > config.mpc.delta_max)
                fail("interval outside [1, delta_max] at t=" + std::to_string(rec.t));
            if (!config.mpc.U.unconstrained() && !config.mpc.U.contains(rec.v))
                fail("packet outside U at t=" + std::to_string(rec.t));
        }
    }
    for (size_t k = 1; k < result.instants.size(); ++k) {
        if (result.instants[k].ack != result.instants[k - 1].sigma)
            fail("acknowledgment mismatch at instant k=" + std::to_string(k));
    }
    for (size_t k = 0; k < result.margins.size(); ++k) {
        if (result.margins[k] < -1e-6)
            fail("decrease margin below -1e-6 at instant k=" + std::to_string(k + 1));
    }
    return report;
}

IntervalSummary sampling_interval_summary(const SimResult& result) {
    IntervalSummary summary;
    for (const InstantRecord& inst : result.instants) {
        summary.events.push_back({inst.t, inst.delta, inst.sigma});
        ++summary.histogram[inst.delta];
    }
    const size_t n = result.instants.size();
    for (size_t i = n >= 5 ? n - 5 : 0; i < n; ++i)
        summary.last5.push_back(result.instants[i].delta);
    return summary;
}

}  // namespace stmpc
