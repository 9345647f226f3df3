#pragma once

#include <map>
#include <memory>

#include "stmpc/solver.hpp"

namespace stmpc {

/// Declarative loss-process choice, parseable from "script:<bits>",
/// "random:<p>,<seed>", or "adversarial".
struct LossModelSpec {
    enum class Kind { Scripted, Random, Adversarial };
    Kind kind = Kind::Scripted;
    std::vector<uint8_t> bits{1};
    double probability = 0.5;
    uint64_t seed = 1;
};

LossModelSpec parse_loss_spec(const std::string& text);
std::string format_loss_spec(const LossModelSpec& spec);
std::unique_ptr<LossModel> make_loss_model(const LossModelSpec& spec, int P);

/// Everything one closed-loop run needs.
struct SimConfig {
    PlantModel plant;
    TokenBucketSpec bucket;
    MpcConfig mpc;
    TerminalIngredients terminal;
    LossModelSpec loss;
    Vector x0, w0;
    long beta0 = 0;
    long T = 1;
    bool nominal = false;
    double blowup = 1e6;
    double tail_threshold = 1e-2;
    long tail_start = 60;

    void validate() const;
};

/// One time step of the closed loop; event fields are set at sampling instants.
struct TraceRecord {
    long t = 0;
    Vector x;
    Vector u;
    long beta = 0;
    bool event = false;
    int k = -1;
    int delta = 0;
    Vector v;
    int sigma = 0;
    int ack = 0;
    int r = 0;
    double worst_value = 0.0;
    Provenance provenance = Provenance::Optimized;
};

/// Per-instant digest used by diagnostics and the interval summary.
struct InstantRecord {
    int k = 0;
    long t = 0;
    int delta = 0;
    int sigma = 0;
    int ack = 0;
    int r = 0;
    double worst_value = 0.0;
    Provenance provenance = Provenance::Optimized;
    long words_feasible = 0;
    int admissible_count = 0;
};

struct SimResult {
    std::vector<TraceRecord> trace;       ///< t = 0..T
    std::vector<InstantRecord> instants;
    std::vector<double> margins;          ///< decrease margins, one per k >= 1
    bool diverged = false;
    long diverged_t = -1;
    long infeasible_instants = 0;
    long fallback_count = 0;
    double max_x_tail = 0.0;
    long time_to_threshold = -1;
    double min_margin = std::numeric_limits<double>::infinity();
    long beta_min = 0;
    long beta_max = 0;
};

/// Runs the closed loop: collect the acknowledgment, update the counter,
/// solve, transmit through the loss process, hold the input over the chosen
/// interval, and log every intermediate step.
SimResult run(const SimConfig& config);

struct InvariantReport {
    bool pass = true;
    std::vector<std::string> failures;
};

/// Post-hoc audit of a robust run: overall-state membership, packet bounds,
/// acknowledgment consistency, and the certified-decrease margin.
InvariantReport assert_runtime_invariants(const SimResult& result,
                                          const SimConfig& config);

struct IntervalSummary {
    struct Event {
        long t;
        int delta;
        int sigma;
    };
    std::vector<Event> events;
    std::map<int, long> histogram;
    std::vector<int> last5;
};

IntervalSummary sampling_interval_summary(const SimResult& result);

}  // namespace stmpc
