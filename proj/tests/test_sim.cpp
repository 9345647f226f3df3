#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stmpc/report.hpp"
#include "stmpc/sim.hpp"

using namespace stmpc;

namespace {

PlantModel planar_plant() {
    PlantModel plant;
    plant.A = Matrix(2, 2);
    plant.A << 1.15, 0.4, -0.2, 0.85;
    plant.B = Matrix(2, 1);
    plant.B << 0.3, 0.8;
    plant.Q = Matrix::Identity(2, 2);
    plant.R = Matrix::Identity(1, 1);
    return plant;
}

Polytope box(int dim, double bound) {
    Polytope out;
    out.H = Matrix::Zero(2 * dim, dim);
    out.h = Vector::Constant(2 * dim, bound);
    for (int i = 0; i < dim; ++i) {
        out.H(2 * i, i) = 1.0;
        out.H(2 * i + 1, i) = -1.0;
    }
    return out;
}

SimConfig planar_sim(int P, const LossModelSpec& loss) {
    SimConfig sim;
    sim.plant = planar_plant();
    sim.bucket = TokenBucketSpec{1, 2, 6};
    sim.mpc.N = 3;
    sim.mpc.P = P;
    sim.mpc.delta_max = 3;
    sim.mpc.solver.threads = 1;
    sim.mpc.solver.refine_top = 2;
    sim.mpc.solver.descent_iters = 10;

    SynthesisResult synth = synthesize(sim.plant, sim.bucket, P);
    REQUIRE(synth.feasible);
    sim.terminal.Kf = synth.Kf;
    sim.terminal.Pf = synth.Pf;
    sim.terminal.M = sim.bucket.base_period();
    sim.terminal.P = P;

    sim.loss = loss;
    sim.x0 = Vector::Constant(2, 1.0);
    sim.w0 = Vector::Zero(1);
    sim.beta0 = 3;
    sim.T = 20;
    sim.tail_start = 15;
    return sim;
}

}  // namespace

TEST_CASE("loss specification parsing and formatting") {
    LossModelSpec script = parse_loss_spec("script:1001");
    CHECK(script.kind == LossModelSpec::Kind::Scripted);
    CHECK(script.bits == std::vector<uint8_t>{1, 0, 0, 1});
    CHECK(format_loss_spec(script) == "script:1001");

    LossModelSpec random = parse_loss_spec("random:0.3,42");
    CHECK(random.kind == LossModelSpec::Kind::Random);
    CHECK(random.probability == doctest::Approx(0.3));
    CHECK(random.seed == 42);
    CHECK(format_loss_spec(random) == "random:0.3,42");

    LossModelSpec adv = parse_loss_spec("adversarial");
    CHECK(adv.kind == LossModelSpec::Kind::Adversarial);

    CHECK_THROWS_AS(parse_loss_spec("script:10x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_loss_spec("random:0.5"), std::invalid_argument);
    CHECK_THROWS_AS(parse_loss_spec("random:1.5,3"), std::invalid_argument);
    CHECK_THROWS_AS(parse_loss_spec("unknown"), std::invalid_argument);
}

TEST_CASE("closed loop under bounded random losses satisfies the invariants") {
    LossModelSpec loss;
    loss.kind = LossModelSpec::Kind::Random;
    loss.probability = 0.5;
    loss.seed = 9;
    SimConfig sim = planar_sim(1, loss);
    sim.mpc.X = box(2, 100.0);
    sim.mpc.U = box(1, 50.0);
    LiftTable lifts(sim.plant);
    sim.terminal.set =
        construct_terminal_set(sim.terminal.Kf, sim.terminal.Pf, sim.mpc.X,
                               sim.mpc.U, lifts, sim.terminal.M, 1);
    REQUIRE(sim.terminal.set.kind == TerminalSet::Kind::Ellipsoid);
    REQUIRE(sim.terminal.set.level > 0.0);

    SimResult result = run(sim);
    CHECK(result.infeasible_instants == 0);
    CHECK_FALSE(result.diverged);
    CHECK(result.trace.size() == static_cast<size_t>(sim.T) + 1);
    CHECK(result.min_margin >= -1e-6);

    InvariantReport audit = assert_runtime_invariants(result, sim);
    CHECK(audit.pass);
    if (!audit.pass)
        for (const auto& f : audit.failures) MESSAGE(f);
}

TEST_CASE("identical traces for any worker count") {
    LossModelSpec loss;
    loss.kind = LossModelSpec::Kind::Random;
    loss.probability = 0.4;
    loss.seed = 3;
    SimConfig one = planar_sim(1, loss);
    one.T = 12;
    one.mpc.solver.threads = 1;
    SimConfig four = one;
    four.mpc.solver.threads = 4;

    SimResult a = run(one);
    SimResult b = run(four);
    CHECK(trace_csv(a) == trace_csv(b));
    CHECK(diagnostics_csv(a) == diagnostics_csv(b));
}

TEST_CASE("scripted losses beyond the design bound raise the assumption error") {
    LossModelSpec loss;
    loss.kind = LossModelSpec::Kind::Scripted;
    loss.bits = {1, 0, 0, 0, 0};
    SimConfig sim = planar_sim(1, loss);  // P = 1, script has a run of four
    CHECK_THROWS_AS(run(sim), AssumptionViolation);
}

TEST_CASE("loss-blind controller holds through infeasibility and diverges") {
    PlantModel plant;
    plant.A = Matrix::Constant(1, 1, 2.0);
    plant.B = Matrix::Constant(1, 1, 1.0);
    plant.Q = Matrix::Identity(1, 1);
    plant.R = Matrix::Identity(1, 1);
    TokenBucketSpec bucket{1, 1, 1};

    SynthesisResult synth = synthesize(plant, bucket, 0);
    REQUIRE(synth.feasible);

    SimConfig sim;
    sim.plant = plant;
    sim.bucket = bucket;
    sim.mpc.N = 2;
    sim.mpc.P = 0;
    sim.mpc.delta_max = 1;
    sim.mpc.solver.threads = 1;
    sim.mpc.X = box(1, 4.0);
    sim.mpc.U = box(1, 10.0);
    sim.terminal.Kf = synth.Kf;
    sim.terminal.Pf = synth.Pf;
    sim.terminal.M = 1;
    sim.terminal.P = 0;
    LiftTable lifts(plant);
    sim.terminal.set = construct_terminal_set(synth.Kf, synth.Pf, sim.mpc.X,
                                              sim.mpc.U, lifts, 1, 0);
    sim.loss.kind = LossModelSpec::Kind::Scripted;
    sim.loss.bits = {0};
    sim.nominal = true;
    sim.x0 = Vector::Constant(1, 1.0);
    sim.w0 = Vector::Zero(1);
    sim.beta0 = 1;
    sim.T = 40;

    SimResult result = run(sim);
    CHECK(result.diverged);
    CHECK(result.diverged_t > 0);
    CHECK(result.infeasible_instants >= 1);
    CHECK(result.trace.size() == 41);
    CHECK(std::abs(result.trace.back().x(0)) > 1e6);
}

TEST_CASE("infeasibility at the first instant is fatal") {
    LossModelSpec loss;
    SimConfig sim = planar_sim(0, loss);
    sim.mpc.U = box(1, 1e-6);
    sim.terminal.set.kind = TerminalSet::Kind::Ellipsoid;
    sim.terminal.set.level = 1e-9;
    sim.x0 = Vector::Constant(2, 100.0);
    CHECK_THROWS_AS(run(sim), InfeasibleProblem);
}

TEST_CASE("interval summary digests the event stream") {
    LossModelSpec loss;
    loss.kind = LossModelSpec::Kind::Scripted;
    loss.bits = {1, 0};
    SimConfig sim = planar_sim(1, loss);
    SimResult result = run(sim);

    IntervalSummary summary = sampling_interval_summary(result);
    CHECK(summary.events.size() == result.instants.size());
    long total = 0;
    for (const auto& [delta, count] : summary.histogram) {
        CHECK(delta >= 1);
        CHECK(delta <= sim.mpc.delta_max);
        total += count;
    }
    CHECK(total == static_cast<long>(summary.events.size()));
    REQUIRE(summary.last5.size() == std::min<size_t>(5, summary.events.size()));
    const size_t offset = summary.events.size() - summary.last5.size();
    for (size_t i = 0; i < summary.last5.size(); ++i)
        CHECK(summary.last5[i] == summary.events[offset + i].delta);
}

TEST_CASE("runtime audit flags doctored runs") {
    LossModelSpec loss;
    loss.kind = LossModelSpec::Kind::Scripted;
    loss.bits = {1};
    SimConfig sim = planar_sim(0, loss);
    SimResult result = run(sim);
    REQUIRE(assert_runtime_invariants(result, sim).pass);

    SimResult bad_beta = result;
    bad_beta.trace[1].beta = -1;
    CHECK_FALSE(assert_runtime_invariants(bad_beta, sim).pass);

    SimResult bad_margin = result;
    if (!bad_margin.margins.empty()) {
        bad_margin.margins[0] = -1.0;
        bad_margin.min_margin = -1.0;
        CHECK_FALSE(assert_runtime_invariants(bad_margin, sim).pass);
    }
}

TEST_CASE("trace and diagnostics formats") {
    LossModelSpec loss;
    loss.kind = LossModelSpec::Kind::Scripted;
    loss.bits = {1, 0};
    SimConfig sim = planar_sim(1, loss);
    sim.T = 10;
    SimResult result = run(sim);

    const std::string trace = trace_csv(result);
    CHECK(trace.rfind("t,k,x_1,x_2,u_1,beta,delta,sigma,ack,r,worst_value,provenance\n",
                      0) == 0);
    const long rows = std::count(trace.begin(), trace.end(), '\n');
    CHECK(rows == sim.T + 2);

    const std::string diag = diagnostics_csv(result);
    CHECK(diag.rfind("k,t_k,r,admissible,words_explored,provenance,worst_value\n",
                     0) == 0);
    CHECK(std::count(diag.begin(), diag.end(), '\n') ==
          static_cast<long>(result.instants.size()) + 1);

    const std::string summary = summary_text(result, sim);
    CHECK(summary.find("mode = robust") != std::string::npos);
    CHECK(summary.find("max_x_tail = ") != std::string::npos);
    CHECK(summary.find("last5 =") != std::string::npos);

    const std::string splot = state_plot_script("robust.csv", "nominal.csv", 2, 1);
    CHECK(splot.find("robust.csv") != std::string::npos);
    CHECK(splot.find("nominal.csv") != std::string::npos);
    const std::string iplot = interval_plot_script("robust.csv", 2, 1);
    CHECK(iplot.find("$7") != std::string::npos);  // delta column for n=2, m=1
}
