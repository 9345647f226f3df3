#include "stmpc/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "stmpc/descent.hpp"
#include "stmpc/riccati.hpp"
#include "stmpc/tree.hpp"

namespace stmpc {

int worker_count(const SolverOptions& options) {
    if (options.threads > 0) return options.threads;
    if (const char* env = std::getenv("STMPC_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

namespace {

/// Work-stealing loop over [0, count) with results stored per index, so the
/// reduction order never depends on scheduling.
template <typename F>
void parallel_for(int count, int workers, F&& body) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    auto run = [&] {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
    };
    std::vector<std::thread> pool;
    const int spawn = std::min(workers, count) - 1;
    pool.reserve(spawn);
    for (int w = 0; w < spawn; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

void dfs_words(int depth, int N, int delta_max, long beta, long floor,
               const TokenBucketSpec& bucket, std::vector<int>& word,
               std::vector<std::vector<int>>& out) {
    if (depth == N) {
        out.push_back(word);
        return;
    }
    for (int d = 1; d <= delta_max; ++d) {
        const long next = std::min(beta + d * bucket.g - bucket.c, bucket.b);
        if (next < floor) continue;
        word.push_back(d);
        dfs_words(depth + 1, N, delta_max, next, floor, bucket, word, out);
        word.pop_back();
    }
}

/// Terminal value matrix seen by the all-success scenario: P losses never
/// happen, so the last P instants apply the terminal law at spacing M.
Matrix allsuccess_terminal_value(const TerminalIngredients& terminal,
                                 LiftTable& lifts, int P) {
    const LiftedMatrices& L = lifts.at(static_cast<int>(terminal.M));
    const int n = static_cast<int>(terminal.Pf.rows());
    Matrix IK(n + terminal.Kf.rows(), n);
    IK.topRows(n) = Matrix::Identity(n, n);
    IK.bottomRows(terminal.Kf.rows()) = terminal.Kf;
    const Matrix C = IK.transpose() * L.cost_block() * IK;
    const Matrix Phi = L.Aj + L.Bj * terminal.Kf;
    Matrix Pt = terminal.Pf;
    for (int p = 0; p < P; ++p)
        Pt = (C + Phi.transpose() * Pt * Phi).eval();
    return 0.5 * (Pt + Pt.transpose());
}

struct Scored {
    int index;
    double lb;
};

}  // namespace

std::vector<std::vector<int>> enumerate_feasible_words(long beta0, int N,
                                                       int delta_max,
                                                       const TokenBucketSpec& bucket,
                                                       long cap) {
    std::vector<std::vector<int>> out;
    const long floor = bucket.c - bucket.g;
    if (beta0 < floor) return out;
    double total = 1.0;
    for (int i = 0; i < N; ++i) total *= delta_max;
    if (cap > 0 && total > static_cast<double>(cap))
        throw std::invalid_argument("enumerate_feasible_words: budget exceeded");
    std::vector<int> word;
    word.reserve(N);
    dfs_words(0, N, delta_max, beta0, floor, bucket, word, out);
    return out;
}

LossSequence sparse_scenario(int r, int P, int length) {
    LossSequence seq;
    seq.bits.assign(length, 0);
    for (int i = P - r; i < length; i += P + 1) seq.bits[i] = 1;
    return seq;
}

FeedbackPolicy shifted_candidate(const Solution& previous,
                                 const TerminalIngredients& terminal) {
    FeedbackPolicy out;
    const int N = previous.policy.horizon();
    out.gains.assign(previous.policy.gains.begin() + 1, previous.policy.gains.end());
    out.intervals.assign(previous.policy.intervals.begin() + 1,
                         previous.policy.intervals.end());
    out.gains.push_back(terminal.Kf);
    out.intervals.push_back(static_cast<int>(terminal.M));
    (void)N;
    return out;
}

namespace {

struct Incumbent {
    bool valid = false;
    FeedbackPolicy policy;
    double value = 0.0;
    int argmax = 0;
    bool strictly_better(double v, const std::vector<int>& word) const {
        if (!valid) return true;
        if (v != value) return v < value;
        if (word[0] != policy.intervals[0]) return word[0] < policy.intervals[0];
        return lex_less(word, policy.intervals);
    }
};

/// Beam over word prefixes scored by the loss-free free-input value, kept
/// deterministic by (score, lex) ordering.
std::vector<std::vector<int>> beam_words(const OverallState& xi0, int N,
                                         int delta_max,
                                         const TokenBucketSpec& bucket,
                                         const Matrix& Pterm, LiftTable& lifts,
                                         int width) {
    struct Prefix {
        std::vector<int> word;
        long beta;
        double score;
    };
    const long floor = bucket.c - bucket.g;
    std::vector<Prefix> beam{{{}, 0, 0.0}};
    beam[0].beta = xi0.beta;
    for (int depth = 0; depth < N; ++depth) {
        std::vector<Prefix> expanded;
        for (const Prefix& p : beam) {
            for (int d = 1; d <= delta_max; ++d) {
                const long next = std::min(p.beta + d * bucket.g - bucket.c, bucket.b);
                if (next < floor) continue;
                Prefix q;
                q.word = p.word;
                q.word.push_back(d);
                q.beta = next;
                const Matrix P0 =
                    riccati_over_word(q.word, Matrix::Zero(Pterm.rows(), Pterm.cols()),
                                      lifts)
                        .P0;
                q.score = xi0.x.dot(P0 * xi0.x);
                expanded.push_back(std::move(q));
            }
        }
        std::sort(expanded.begin(), expanded.end(),
                  [](const Prefix& a, const Prefix& b) {
                      if (a.score != b.score) return a.score < b.score;
                      return lex_less(a.word, b.word);
                  });
        if (static_cast<int>(expanded.size()) > width) expanded.resize(width);
        beam = std::move(expanded);
    }
    std::vector<std::vector<int>> out;
    out.reserve(beam.size());
    for (Prefix& p : beam) out.push_back(std::move(p.word));
    return out;
}

}  // namespace

Solution outer_min(const OverallState& xi0, int r,
                   const TerminalIngredients& terminal, LiftTable& lifts,
                   const TokenBucketSpec& bucket, const MpcConfig& config,
                   const FeedbackPolicy* warm, SolveDiagnostics* diagnostics) {
    config.validate(terminal.M);
    const SolverOptions& opt = config.solver;
    const int N = config.N, P = config.P;
    const std::vector<LossSequence>& admissible = enumerate_admissible(N, P, r);
    lifts.at(std::max(config.delta_max, static_cast<int>(terminal.M)));
    const int workers = worker_count(opt);

    Solution out;
    out.feasible = false;

    const Matrix Pterm = allsuccess_terminal_value(terminal, lifts, P);

    // bucket-admissible interval words
    std::vector<std::vector<int>> words;
    double total = 1.0;
    for (int i = 0; i < N; ++i) total *= config.delta_max;
    if (total <= static_cast<double>(opt.exhaustive_cap))
        words = enumerate_feasible_words(xi0.beta, N, config.delta_max, bucket, 0);
    else
        words = beam_words(xi0, N, config.delta_max, bucket, Pterm, lifts,
                           opt.beam_width);
    if (diagnostics) {
        diagnostics->words_feasible = static_cast<long>(words.size());
        diagnostics->admissible_count = static_cast<int>(admissible.size());
    }
    out.words_explored = static_cast<long>(words.size());
    if (words.empty()) return out;

    // screening lower bounds: loss-free Riccati value for every word, harshest
    // fixed scenario refined on the leaders
    const int W = static_cast<int>(words.size());
    std::vector<double> lb(W);
    parallel_for(W, workers, [&](int i) {
        const Matrix P0 = riccati_over_word(words[i], Pterm, lifts).P0;
        lb[i] = xi0.x.dot(P0 * xi0.x);
    });
    std::vector<Scored> order(W);
    for (int i = 0; i < W; ++i) order[i] = {i, lb[i]};
    auto rank = [&](const Scored& a, const Scored& b) {
        if (a.lb != b.lb) return a.lb < b.lb;
        if (words[a.index][0] != words[b.index][0])
            return words[a.index][0] < words[b.index][0];
        return lex_less(words[a.index], words[b.index]);
    };
    std::sort(order.begin(), order.end(), rank);

    const LossSequence harsh = sparse_scenario(r, P, N + P);
    const int sharpen = std::min(W, std::max(opt.refine_top * 16, 64));
    parallel_for(sharpen, workers, [&](int i) {
        const int idx = order[i].index;
        const double v =
            fixed_scenario_value(words[idx], N, harsh, terminal.Pf, terminal.Kf,
                                 static_cast<int>(terminal.M), xi0, lifts);
        order[i].lb = std::max(order[i].lb, v);
    });
    std::sort(order.begin(), order.begin() + sharpen, rank);

    Incumbent best;
    auto consider = [&](const FeedbackPolicy& policy, const InnerMaxResult& res) {
        if (!res.feasible) return;
        if (best.strictly_better(res.value, policy.intervals)) {
            best.valid = true;
            best.policy = policy;
            best.value = res.value;
            best.argmax = res.argmax;
        }
    };

    // the shifted candidate: exact evaluation, then a polish descent from its
    // own gains on its own word
    if (warm != nullptr) {
        InnerMaxResult res =
            inner_max(*warm, xi0, admissible, terminal, lifts, bucket, config);
        consider(*warm, res);
        DescentResult polished =
            descend_gains(warm->intervals, warm->gains, xi0, admissible, terminal,
                          lifts, bucket, config);
        FeedbackPolicy pol{polished.gains, warm->intervals};
        InnerMaxResult pres =
            inner_max(pol, xi0, admissible, terminal, lifts, bucket, config);
        consider(pol, pres);
    }

    long refined = 0;
    for (int i = 0; i < W && refined < opt.refine_top; ++i) {
        const int idx = order[i].index;
        if (best.valid && order[i].lb > best.value) continue;
        const std::vector<int>& word = words[idx];
        if (warm != nullptr && word == warm->intervals) continue;

        TreeProblem tree =
            build_tree_problem(word, admissible, xi0, terminal, lifts, bucket);
        TreeSolution tsol = solve_tree(tree, opt);
        ++refined;
        if (best.valid && tsol.value > best.value) continue;

        std::vector<Matrix> seed = fit_gains(tree, tsol.z);
        {
            FeedbackPolicy fitted{seed, word};
            InnerMaxResult fres =
                inner_max(fitted, xi0, admissible, terminal, lifts, bucket, config);
            WordRiccati ric = riccati_over_word(word, Pterm, lifts);
            FeedbackPolicy lqr{ric.gains, word};
            InnerMaxResult lres =
                inner_max(lqr, xi0, admissible, terminal, lifts, bucket, config);
            consider(fitted, fres);
            consider(lqr, lres);
            if (lres.feasible && (!fres.feasible || lres.value < fres.value))
                seed = ric.gains;
        }

        DescentResult desc = descend_gains(word, seed, xi0, admissible, terminal,
                                           lifts, bucket, config);
        FeedbackPolicy pol{desc.gains, word};
        InnerMaxResult res =
            inner_max(pol, xi0, admissible, terminal, lifts, bucket, config);
        consider(pol, res);
    }
    if (diagnostics) diagnostics->words_refined = refined;

    if (!best.valid) return out;
    out.policy = best.policy;
    out.worst_value = best.value;
    out.worst_sequence = admissible[best.argmax];
    out.feasible = true;
    out.provenance = Provenance::Optimized;
    return out;
}

StepResult control_step(const OverallState& xi, int ack, ControllerState& state,
                        const TerminalIngredients& terminal, LiftTable& lifts,
                        const TokenBucketSpec& bucket, const MpcConfig& config) {
    MpcConfig effective = config;
    if (state.nominal) effective.P = 0;

    if (state.k > 0) {
        if (state.nominal)
            state.history = LossHistory{ack ? 0 : state.history.r + 1, ack};
        else
            state.history = update_counter(state.history, ack, config.P);
    }
    const int r = state.nominal ? 0 : state.history.r;

    const std::vector<LossSequence>& admissible =
        enumerate_admissible(effective.N, effective.P, r);

    StepResult result;
    result.r = r;

    FeedbackPolicy candidate;
    bool have_candidate = false;
    double candidate_value = 0.0;
    int candidate_argmax = 0;
    if (state.previous && state.previous->feasible) {
        candidate = shifted_candidate(*state.previous, terminal);
        InnerMaxResult res = inner_max(candidate, xi, admissible, terminal, lifts,
                                       bucket, effective);
        if (res.feasible) {
            have_candidate = true;
            candidate_value = res.value;
            candidate_argmax = res.argmax;
        }
    }

    Solution solved =
        outer_min(xi, r, terminal, lifts, bucket, effective,
                  have_candidate ? &candidate : nullptr, &result.diagnostics);

    Solution adopted;
    if (solved.feasible && (!have_candidate || solved.worst_value < candidate_value)) {
        adopted = std::move(solved);
        adopted.provenance = Provenance::Optimized;
    } else if (have_candidate) {
        adopted.policy = candidate;
        adopted.worst_value = candidate_value;
        adopted.worst_sequence = admissible[candidate_argmax];
        adopted.feasible = true;
        adopted.provenance = Provenance::FallbackCandidate;
        adopted.words_explored = solved.words_explored;
    } else {
        throw InfeasibleProblem(
            state.k == 0
                ? "min-max problem infeasible at the initial state"
                : "min-max problem infeasible and no feasible candidate");
    }

    adopted.scenario_states.clear();
    adopted.scenario_states.reserve(admissible.size());
    for (const LossSequence& seq : admissible) {
        PolicyEval ev = evaluate_policy(adopted.policy, xi, seq, terminal, lifts,
                                        bucket, effective);
        adopted.scenario_states.push_back(std::move(ev.trajectory));
    }

    result.packet.v = adopted.policy.gains[0] * xi.x;
    result.packet.delta = adopted.policy.intervals[0];
    result.adopted = std::move(adopted);
    state.previous = result.adopted;
    state.k += 1;
    state.t += result.packet.delta;
    return result;
}

}  // namespace stmpc
