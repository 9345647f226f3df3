#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "stmpc/types.hpp"

namespace stmpc {

/// Binary loss word; bits[i] = 1 means the i-th transmission arrives.
struct LossSequence {
    std::vector<uint8_t> bits;

    std::vector<int> tau() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(bits.size()); ++i)
            if (bits[i]) out.push_back(i);
        return out;
    }
};

/// Consecutive-loss counter plus the last acknowledgment bit.
struct LossHistory {
    int r = 0;
    int last_ack = 1;
};

/// Raised when a realized loss run exceeds the bound P.
struct AssumptionViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One bucket-level update of Eq.-style token accounting.
inline long bucket_step(long beta, bool transmitting, const TokenBucketSpec& spec) {
    const long next = transmitting ? beta + spec.g - spec.c : beta + spec.g;
    return std::min(next, spec.b);
}

/**
 * @brief All loss words of length N+P consistent with the bound P and the
 *        observed run of r consecutive losses: first success at index
 *        <= P-r, successes never more than P+1 apart, and at most P trailing
 *        losses after the last success. Lexicographic order.
 */
const std::vector<LossSequence>& enumerate_admissible(int N, int P, int r);

/// Filters a scenario set by the value of its first bit.
std::vector<LossSequence> split_by_first_bit(const std::vector<LossSequence>& set,
                                             int first);

/// Algorithm step: reset the counter on ack, else increment; r > P is an error.
LossHistory update_counter(const LossHistory& history, int ack, int P);

/// Per-packet loss process used by the simulator.
class LossModel {
  public:
    virtual ~LossModel() = default;
    /// Realized bit for sampling instant k; r is the current loss run length.
    virtual int sample(int k, int r) = 0;
};

/// Replays an explicit bit word, cycling when shorter than the run.
class ScriptedLoss : public LossModel {
  public:
    explicit ScriptedLoss(std::vector<uint8_t> bits, bool cycle = true)
        : bits_(std::move(bits)), cycle_(cycle) {}
    int sample(int k, int r) override;

  private:
    std::vector<uint8_t> bits_;
    bool cycle_;
};

/// I.i.d. losses with probability p, except success is forced once r = P.
class BoundedRandomLoss : public LossModel {
  public:
    BoundedRandomLoss(double loss_probability, uint64_t seed, int P)
        : p_(loss_probability), rng_(seed), P_(P) {}
    int sample(int k, int r) override;

  private:
    double p_;
    std::mt19937_64 rng_;
    int P_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

/// Adversary choosing the bit from controller state via a callback.
class AdversarialLoss : public LossModel {
  public:
    using Picker = std::function<int(int k, int r)>;
    explicit AdversarialLoss(int P, Picker picker = nullptr)
        : P_(P), picker_(std::move(picker)) {}
    void set_picker(Picker picker) { picker_ = std::move(picker); }
    int sample(int k, int r) override;

  private:
    int P_;
    Picker picker_;
};

/// Parses a scripted loss trace: whitespace-separated bits, '#' comments.
std::vector<uint8_t> parse_loss_trace(const std::string& text);

}  // namespace stmpc
