#pragma once

// Synthetic chain-arithmetic reasoning task.
//
// A problem is a list of k operands in [0, m); the answer is their sum mod m.
// A chain shows its work as STEP/value pairs carrying the running sum, then
// emits ANS, the answer value and EOS. Connector tokens are semantically
// null filler, and wrong values after STEP are legal dead weight, so correct
// chains exist at every length from 2k+3 up to the hard cap.

#include "egc/error.hpp"

#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace egc {

using Token = int;

struct EnvConfig {
    int modulus = 10;       // m
    int connectors = 3;     // c
    int k_max = 4;
    int hard_cap = 64;
    std::uint64_t seed = 0; // problem-stream seed
    double slip_rate = 0.2; // fraction of problems flagged as slips

    void validate() const {
        if (!(slip_rate >= 0.0 && slip_rate <= 1.0)) throw ConfigError("env.slip_rate", "must lie in [0, 1]");
        if (modulus < 2) throw ConfigError("env.modulus", "must be >= 2");
        if (connectors < 1) throw ConfigError("env.connectors", "must be >= 1");
        if (k_max < 1) throw ConfigError("env.k_max", "must be >= 1");
        if (hard_cap < 2 * k_max + 3)
            throw ConfigError("env.hard_cap", "must admit the minimal chain 2*k_max+3");
    }

    bool operator==(const EnvConfig&) const = default;
};

// Token layout: V0..V(m-1), C0..C(c-1), STEP, ANS, EOS.
class Vocabulary {
public:
    Vocabulary(int modulus, int connectors) : m_(modulus), c_(connectors) {
        if (modulus < 2) throw ConfigError("env.modulus", "must be >= 2");
        if (connectors < 1) throw ConfigError("env.connectors", "must be >= 1");
    }
    explicit Vocabulary(const EnvConfig& cfg) : Vocabulary(cfg.modulus, cfg.connectors) {}

    int modulus() const { return m_; }
    int connector_count() const { return c_; }
    int size() const { return m_ + c_ + 3; }

    Token value(int v) const { return v; }
    Token connector(int i) const { return m_ + i; }
    Token step() const { return m_ + c_; }
    Token answer() const { return m_ + c_ + 1; }
    Token eos() const { return m_ + c_ + 2; }

    bool is_value(Token t) const { return t >= 0 && t < m_; }
    bool is_connector(Token t) const { return t >= m_ && t < m_ + c_; }
    bool valid(Token t) const { return t >= 0 && t < size(); }

    std::string name(Token t) const {
        if (is_value(t)) return "V" + std::to_string(t);
        if (is_connector(t)) return "C" + std::to_string(t - m_);
        if (t == step()) return "STEP";
        if (t == answer()) return "ANS";
        if (t == eos()) return "EOS";
        return "?";
    }

private:
    int m_;
    int c_;
};

struct Problem {
    std::vector<int> operands;
    int modulus = 10;
    int target = 0;
    std::uint64_t seed = 0;
    // On a slip problem an ANS with no connector directly before it reads
    // the running value off by one (see StateSpace::observe).
    bool slip = false;

    int k() const { return static_cast<int>(operands.size()); }

    static int target_of(std::span<const int> operands, int modulus) {
        long sum = std::accumulate(operands.begin(), operands.end(), 0L);
        return static_cast<int>(sum % modulus);
    }

    static Problem from_operands(std::vector<int> operands, int modulus, std::uint64_t seed = 0) {
        Problem p;
        p.modulus = modulus;
        p.target = target_of(operands, modulus);
        p.operands = std::move(operands);
        p.seed = seed;
        return p;
    }

    bool operator==(const Problem&) const = default;
};

inline Problem generate_problem(std::uint64_t rng_seed, int difficulty_k, int modulus_m) {
    if (difficulty_k < 1) throw ConfigError("difficulty_k", "must be >= 1");
    if (modulus_m < 2) throw ConfigError("modulus_m", "must be >= 2");
    std::mt19937_64 rng(rng_seed);
    std::vector<int> ops(static_cast<std::size_t>(difficulty_k));
    for (int& op : ops) op = static_cast<int>(rng() % static_cast<std::uint64_t>(modulus_m));
    return Problem::from_operands(std::move(ops), modulus_m, rng_seed);
}

// Collapsed class of the most recent token. Connector runs are counted up to
// two, and STEP and ANS remember the length of the run that preceded them
// ("therefore, thus, STEP ...").
enum class TokenClass : int {
    Bos = 0,
    Value,
    Connector,        // run of one
    ConnectorRun,     // run of two or more
    Step,
    ConnectedStep,    // after one connector
    DeliberateStep,   // after two or more
    Answer,
    ConnectedAnswer,
    DeliberateAnswer,
};
inline constexpr int kTokenClasses = 10;

inline bool is_step_class(TokenClass c) {
    return c == TokenClass::Step || c == TokenClass::ConnectedStep || c == TokenClass::DeliberateStep;
}
inline bool is_answer_class(TokenClass c) {
    return c == TokenClass::Answer || c == TokenClass::ConnectedAnswer || c == TokenClass::DeliberateAnswer;
}
// An ANS with no connector directly before it.
inline bool is_hasty(TokenClass c) { return c == TokenClass::Answer; }
inline bool is_connector_class(TokenClass c) {
    return c == TokenClass::Connector || c == TokenClass::ConnectorRun;
}
// Number of connectors directly before the last token, capped at two.
inline int deliberation_of(TokenClass c) {
    switch (c) {
    case TokenClass::ConnectedStep:
    case TokenClass::ConnectedAnswer: return 1;
    case TokenClass::DeliberateStep:
    case TokenClass::DeliberateAnswer: return 2;
    default: return 0;
    }
}

struct ReasoningState {
    int steps_done = 0;
    int partial_value = 0;
    TokenClass last = TokenClass::Bos;
    bool answered = false;
    std::optional<int> answer_value;
    int tokens_emitted = 0;
    int hard_cap = 64;
    bool finished = false; // EOS emitted

    bool terminal() const { return finished || tokens_emitted >= hard_cap; }
};

inline ReasoningState initial_state(int hard_cap) {
    ReasoningState s;
    s.hard_cap = hard_cap;
    return s;
}

// Value a productive step must emit next, or nullopt once all operands are consumed.
inline std::optional<int> next_running_value(const ReasoningState& s, const Problem& p) {
    if (s.steps_done >= p.k()) return std::nullopt;
    return (s.partial_value + p.operands[static_cast<std::size_t>(s.steps_done)]) % p.modulus;
}

inline ReasoningState step(const ReasoningState& state, Token token, const Problem& problem,
                           const Vocabulary& vocab) {
    if (state.terminal()) throw UsageError("step: state is terminal");
    if (!vocab.valid(token)) throw UsageError("step: token id out of range");
    ReasoningState s = state;
    const bool after_step = is_step_class(s.last);
    const bool after_ans = is_answer_class(s.last);
    const int run = s.last == TokenClass::Connector ? 1 : s.last == TokenClass::ConnectorRun ? 2 : 0;
    if (vocab.is_value(token)) {
        if (after_ans) {
            if (!s.answer_value) s.answer_value = token;
        } else if (after_step && !s.answered) {
            auto expected = next_running_value(s, problem);
            if (expected && *expected == token) {
                ++s.steps_done;
                s.partial_value = token;
            }
        }
        s.last = TokenClass::Value;
    } else if (vocab.is_connector(token)) {
        s.last = run == 0 ? TokenClass::Connector : TokenClass::ConnectorRun;
    } else if (token == vocab.step()) {
        s.last = run == 0 ? TokenClass::Step : run == 1 ? TokenClass::ConnectedStep : TokenClass::DeliberateStep;
    } else if (token == vocab.answer()) {
        s.last = run == 0 ? TokenClass::Answer : run == 1 ? TokenClass::ConnectedAnswer : TokenClass::DeliberateAnswer;
        s.answered = true;
    } else {
        s.finished = true;
    }
    ++s.tokens_emitted;
    return s;
}

struct Verdict {
    bool correct = false;
    bool well_formed = false;
    int length = 0;
    bool truncated = false;
    int productive_steps = 0;

    bool operator==(const Verdict&) const = default;
};

// A chain is well formed iff it contains exactly one ANS, followed by exactly
// one value token and then a final EOS, within hard_cap tokens. It is correct
// iff it is well formed, every operand was consumed by a productive step
// before ANS, and the answer value equals the target.
inline Verdict verify(std::span<const Token> tokens, const Problem& problem, int hard_cap,
                      const Vocabulary& vocab) {
    Verdict v;
    v.length = static_cast<int>(tokens.size());
    const bool has_eos = !tokens.empty() && tokens.back() == vocab.eos();
    bool stray_eos = false;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
        if (tokens[i] == vocab.eos()) stray_eos = true;
    v.truncated = !has_eos && !stray_eos && v.length >= hard_cap;

    // Replay the productive-step rule up to the first ANS.
    ReasoningState s = initial_state(hard_cap);
    int ans_count = 0;
    std::size_t ans_pos = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        Token t = tokens[i];
        if (!vocab.valid(t)) return v;
        if (t == vocab.answer()) {
            if (ans_count++ == 0) ans_pos = i;
        }
        if (!s.terminal() && ans_count == 0) s = step(s, t, problem, vocab);
    }
    v.productive_steps = s.steps_done;
    if (v.length > hard_cap || !has_eos || stray_eos || ans_count != 1) return v;
    if (ans_pos + 3 != tokens.size()) return v;
    Token answer = tokens[ans_pos + 1];
    if (!vocab.is_value(answer)) return v;
    v.well_formed = true;
    v.correct = s.steps_done == problem.k() && answer == problem.target;
    return v;
}

inline int min_correct_length(const Problem& problem) { return 2 * problem.k() + 3; }

} // namespace egc
