#include "stmpc/network.hpp"

#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace stmpc {

namespace {

bool admissible_word(const std::vector<uint8_t>& bits, int P, int r) {
    const int L = static_cast<int>(bits.size());
    int first = -1, last = -1, prev = -1;
    for (int i = 0; i < L; ++i) {
        if (!bits[i]) continue;
        if (first < 0) first = i;
        if (prev >= 0 && i - prev > P + 1) return false;
        prev = i;
        last = i;
    }
    if (first < 0) return false;
    if (first > P - r) return false;
    if (L - last > P + 1) return false;
    return true;
}

}  // namespace

const std::vector<LossSequence>& enumerate_admissible(int N, int P, int r) {
    if (N < 1 || P < 0 || r < 0 || r > P)
        throw std::invalid_argument("enumerate_admissible requires N >= 1, 0 <= r <= P");
    static std::map<std::tuple<int, int, int>, std::vector<LossSequence>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find({N, P, r});
    if (it != cache.end()) return it->second;

    const int L = N + P;
    if (L > 30) throw std::invalid_argument("admissible-set horizon too long to enumerate");
    std::vector<LossSequence> out;
    for (uint64_t word = 0; word < (uint64_t{1} << L); ++word) {
        std::vector<uint8_t> bits(L);
        for (int i = 0; i < L; ++i) bits[i] = (word >> (L - 1 - i)) & 1u;
        if (admissible_word(bits, P, r)) out.push_back({std::move(bits)});
    }
    return cache.emplace(std::make_tuple(N, P, r), std::move(out)).first->second;
}

std::vector<LossSequence> split_by_first_bit(const std::vector<LossSequence>& set,
                                             int first) {
    std::vector<LossSequence> out;
    for (const auto& s : set)
        if (!s.bits.empty() && s.bits[0] == first) out.push_back(s);
    return out;
}

LossHistory update_counter(const LossHistory& history, int ack, int P) {
    LossHistory out;
    out.last_ack = ack;
    out.r = ack ? 0 : history.r + 1;
    if (out.r > P)
        throw AssumptionViolation("loss run exceeded the bound P (assumption violated)");
    return out;
}

int ScriptedLoss::sample(int k, int /*r*/) {
    if (bits_.empty()) throw std::runtime_error("empty loss script");
    if (k < static_cast<int>(bits_.size())) return bits_[k];
    if (!cycle_) throw std::runtime_error("loss script exhausted");
    return bits_[k % bits_.size()];
}

int BoundedRandomLoss::sample(int /*k*/, int r) {
    const double draw = unif_(rng_);
    if (r >= P_) return 1;
    return draw < p_ ? 0 : 1;
}

int AdversarialLoss::sample(int k, int r) {
    if (r >= P_) return 1;
    if (picker_) return picker_(k, r) ? 1 : 0;
    return 0;
}

std::vector<uint8_t> parse_loss_trace(const std::string& text) {
    std::vector<uint8_t> bits;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) {
            if (tok == "0")
                bits.push_back(0);
            else if (tok == "1")
                bits.push_back(1);
            else
                throw std::runtime_error("loss trace token is not a bit: " + tok);
        }
    }
    return bits;
}

}  // namespace stmpc
