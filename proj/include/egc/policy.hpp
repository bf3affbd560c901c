#pragma once

// Autoregressive tabular-softmax policy over the environment vocabulary.

#include "egc/env.hpp"
#include "egc/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace egc {

// Uniform doubles straight from the engine bits so sampling does not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    std::uint64_t next() { return engine_(); }
    int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

private:
    std::mt19937_64 engine_;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// What the policy conditions on: progress through the chain, the operand the
// next productive step must add (part of the prompt), the collapsed class of
// the last token, and whether ANS has been emitted.
struct Observation {
    int steps_done = 0;
    int partial_value = 0;
    int next_operand = 0; // == modulus once every operand is consumed
    TokenClass last = TokenClass::Bos;
    bool answered = false;

    bool operands_left(int modulus) const { return next_operand < modulus; }
};

class StateSpace {
public:
    StateSpace(int modulus, int connectors, int k_max, int hard_cap)
        : vocab_(modulus, connectors), k_max_(k_max), hard_cap_(hard_cap) {}
    explicit StateSpace(const EnvConfig& cfg)
        : StateSpace(cfg.modulus, cfg.connectors, cfg.k_max, cfg.hard_cap) {}

    const Vocabulary& vocab() const { return vocab_; }
    int modulus() const { return vocab_.modulus(); }
    int k_max() const { return k_max_; }
    int hard_cap() const { return hard_cap_; }

    int rows() const { return (k_max_ + 1) * modulus() * (modulus() + 1) * kTokenClasses * 2; }

    int index(const Observation& o) const {
        const int m = modulus();
        int r = o.steps_done;
        r = r * m + o.partial_value;
        r = r * (m + 1) + o.next_operand;
        r = r * kTokenClasses + static_cast<int>(o.last);
        return r * 2 + (o.answered ? 1 : 0);
    }

    Observation decode(int row) const {
        const int m = modulus();
        Observation o;
        o.answered = row % 2 == 1;
        row /= 2;
        o.last = static_cast<TokenClass>(row % kTokenClasses);
        row /= kTokenClasses;
        o.next_operand = row % (m + 1);
        row /= m + 1;
        o.partial_value = row % m;
        o.steps_done = row / m;
        return o;
    }

    Observation observe(const ReasoningState& s, const Problem& p) const {
        Observation o;
        o.steps_done = s.steps_done;
        o.partial_value = p.slip && is_hasty(s.last) ? (s.partial_value + 1) % modulus() : s.partial_value;
        o.next_operand = s.steps_done < p.k() ? p.operands[static_cast<std::size_t>(s.steps_done)]
                                             : modulus();
        o.last = s.last;
        o.answered = s.answered;
        return o;
    }

    int row_of(const ReasoningState& s, const Problem& p) const { return index(observe(s, p)); }

    std::string describe(int row) const {
        Observation o = decode(row);
        return "state{steps_done=" + std::to_string(o.steps_done) +
               ",partial=" + std::to_string(o.partial_value) +
               ",next_operand=" +
               (o.operands_left(modulus()) ? std::to_string(o.next_operand) : std::string("none")) +
               ",last_class=" + std::to_string(static_cast<int>(o.last)) +
               ",answered=" + (o.answered ? "1" : "0") + "}";
    }

    // FNV-1a over the layout parameters; checkpoints carry it in their header.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto feed = [&](std::int64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= static_cast<std::uint64_t>((v >> (8 * i)) & 0xff);
                h *= 0x100000001b3ULL;
            }
        };
        feed(3); // layout version
        feed(modulus());
        feed(vocab_.connector_count());
        feed(k_max_);
        feed(hard_cap_);
        feed(kTokenClasses);
        return h;
    }

    bool operator==(const StateSpace& o) const {
        return modulus() == o.modulus() && vocab_.connector_count() == o.vocab_.connector_count() &&
               k_max_ == o.k_max_ && hard_cap_ == o.hard_cap_;
    }

private:
    Vocabulary vocab_;
    int k_max_;
    int hard_cap_;
};

// Dense (row, token) table. Used for both logits and gradients.
class Table {
public:
    Table() = default;
    Table(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(int r) const {
        return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }
    bool same_shape(const Table& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Table& operator+=(const Table& o) {
        if (!same_shape(o)) throw UsageError("Table: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    double norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    bool operator==(const Table&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

using GradientTable = Table;

// Numerically stable softmax(logits / tau) into out.
inline void softmax(std::span<const double> logits, double tau, std::span<double> out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double z : logits) mx = std::max(mx, z);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / tau);
        total += out[i];
    }
    for (double& p : out) p /= total;
}

inline double log_softmax_at(std::span<const double> logits, double tau, int index) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double z : logits) mx = std::max(mx, z);
    double total = 0.0;
    for (double z : logits) total += std::exp((z - mx) / tau);
    return (logits[static_cast<std::size_t>(index)] - mx) / tau - std::log(total);
}

// Entropy in nats of softmax(logits / tau).
inline double entropy_of(std::span<const double> logits, double tau) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double z : logits) mx = std::max(mx, z);
    double total = 0.0;
    double weighted = 0.0;
    for (double z : logits) {
        double y = (z - mx) / tau;
        double e = std::exp(y);
        total += e;
        weighted += e * y;
    }
    double h = std::log(total) - weighted / total;
    return std::max(0.0, h);
}

struct PolicyParams {
    StateSpace space;
    Table logits;
    double temperature = 1.0;

    explicit PolicyParams(StateSpace s, double tau = 1.0)
        : space(s), logits(s.rows(), s.vocab().size(), 0.0), temperature(tau) {}

    int vocab_size() const { return logits.cols(); }
    std::span<const double> row(int r) const { return logits.row(r); }

    bool operator==(const PolicyParams& o) const {
        return space == o.space && logits == o.logits && temperature == o.temperature;
    }
};

inline PolicyParams make_uniform_policy(const EnvConfig& env, double temperature = 1.0) {
    return PolicyParams(StateSpace(env), temperature);
}

// Logit prior of the verbose "base reasoner" that training starts from. It
// fills chains with connectors and computes far more reliably on a STEP or
// ANS that follows a run of connectors than on a bare one.
struct BasePrior {
    double step_logit = 2.0;           // STEP while operands remain
    double connector_logit = 0.5;      // each connector after BOS or a value
    double connector_repeat = 0.8;     // each connector after one connector
    double connector_run = 0.3;        // each connector after two or more
    double early_answer = -6.0;        // ANS while operands remain
    double answer_logit = 2.0;         // ANS once every operand is consumed
    double recheck_logit = 0.0;        // redundant STEP after the last operand
    // Logit of the correct value against 0 for every other value, indexed by
    // the connector run before STEP / ANS (0, 1, 2+).
    std::array<double, 3> step_value{1.0, 3.0, 5.2};
    std::array<double, 3> answer_value{3.0, 4.5, 5.5};
    double eos_after_answer = 6.0;
    double unlikely = -5.0;
    double noise = 0.1;                // N(0, noise) jitter from the policy seed

    bool operator==(const BasePrior&) const = default;
};

inline PolicyParams make_base_policy(const EnvConfig& env, const BasePrior& prior,
                                     std::uint64_t policy_seed, double temperature = 1.0) {
    PolicyParams params(StateSpace(env), temperature);
    const StateSpace& space = params.space;
    const Vocabulary& vocab = space.vocab();
    const int m = vocab.modulus();
    std::mt19937_64 engine(policy_seed);
    std::normal_distribution<double> jitter(0.0, 1.0);

    for (int r = 0; r < space.rows(); ++r) {
        const Observation o = space.decode(r);
        std::span<double> row = params.logits.row(r);
        const bool left = o.operands_left(m);
        const int depth = deliberation_of(o.last);
        auto fill_values = [&](int favoured, double logit) {
            for (Token t = 0; t < vocab.size(); ++t) row[t] = vocab.is_value(t) ? 0.0 : prior.unlikely;
            row[favoured] = logit;
        };

        if (o.answered) {
            if (is_answer_class(o.last)) {
                fill_values(o.partial_value, prior.answer_value[static_cast<std::size_t>(depth)]);
            } else {
                std::fill(row.begin(), row.end(), 0.0);
                row[vocab.eos()] = o.last == TokenClass::Value ? prior.eos_after_answer : 2.0;
            }
        } else if (is_step_class(o.last)) {
            if (left)
                fill_values((o.partial_value + o.next_operand) % m,
                            prior.step_value[static_cast<std::size_t>(depth)]);
            else
                fill_values(o.partial_value, prior.step_value[0]);
        } else {
            std::fill(row.begin(), row.end(), prior.unlikely);
            const double conn = o.last == TokenClass::Connector      ? prior.connector_repeat
                                : o.last == TokenClass::ConnectorRun ? prior.connector_run
                                                                     : prior.connector_logit;
            for (int i = 0; i < vocab.connector_count(); ++i) row[vocab.connector(i)] = conn;
            if (left) {
                row[vocab.step()] = prior.step_logit;
                row[vocab.answer()] = prior.early_answer;
            } else {
                row[vocab.step()] = prior.recheck_logit;
                row[vocab.answer()] = prior.answer_logit;
            }
        }
        if (prior.noise > 0.0)
            for (double& z : row) z += prior.noise * jitter(engine);
    }
    return params;
}

struct Trajectory {
    Problem problem;
    std::vector<Token> tokens;
    std::vector<int> states;      // observation row per emitted token
    std::vector<double> logp;     // log pi(token | state) at tau = 1
    std::vector<double> entropy;  // entropy at the sampling temperature
    Verdict verdict;
    double temperature = 1.0;

    int length() const { return static_cast<int>(tokens.size()); }
};

inline Trajectory sample(const PolicyParams& params, const Problem& problem, Rng& rng) {
    if (!(params.temperature > 0.0)) throw UsageError("sample: temperature must be > 0");
    const StateSpace& space = params.space;
    const Vocabulary& vocab = space.vocab();
    if (problem.modulus != space.modulus() || problem.k() > space.k_max())
        throw UsageError("sample: problem does not fit the policy state space");

    Trajectory traj;
    traj.problem = problem;
    traj.temperature = params.temperature;
    const std::size_t cap = static_cast<std::size_t>(space.hard_cap());
    traj.tokens.reserve(cap);
    traj.states.reserve(cap);
    traj.logp.reserve(cap);
    traj.entropy.reserve(cap);

    const std::size_t V = static_cast<std::size_t>(vocab.size());
    const double tau = params.temperature;
    std::vector<double> probs(V);
    ReasoningState s = initial_state(space.hard_cap());
    while (!s.terminal()) {
        const int r = space.row_of(s, problem);
        std::span<const double> logits = params.row(r);
        double mx = logits[0];
        for (double z : logits) mx = std::max(mx, z);
        double total = 0.0, weighted = 0.0;
        for (std::size_t t = 0; t < V; ++t) {
            const double y = (logits[t] - mx) / tau;
            probs[t] = std::exp(y);
            total += probs[t];
            weighted += probs[t] * y;
        }
        const double u = rng.uniform() * total;
        Token chosen = -1;
        double acc = 0.0;
        for (std::size_t t = 0; t < V; ++t) {
            acc += probs[t];
            if (u < acc) {
                chosen = static_cast<Token>(t);
                break;
            }
        }
        // Rounding can leave u above the final partial sum.
        if (chosen < 0)
            for (std::size_t t = V; t-- > 0;)
                if (probs[t] > 0.0) {
                    chosen = static_cast<Token>(t);
                    break;
                }

        traj.tokens.push_back(chosen);
        traj.states.push_back(r);
        traj.logp.push_back(tau == 1.0 ? (logits[static_cast<std::size_t>(chosen)] - mx) - std::log(total)
                                       : log_softmax_at(logits, 1.0, chosen));
        traj.entropy.push_back(std::max(0.0, std::log(total) - weighted / total));
        s = step(s, chosen, problem, vocab);
    }
    traj.verdict = verify(traj.tokens, problem, space.hard_cap(), vocab);
    return traj;
}

inline void check_compatible(const PolicyParams& params, const Trajectory& traj) {
    if (traj.states.size() != traj.tokens.size())
        throw UsageError("trajectory: states and tokens differ in length");
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        if (traj.states[t] < 0 || traj.states[t] >= params.logits.rows())
            throw UsageError("trajectory state outside the policy state space");
        if (traj.tokens[t] < 0 || traj.tokens[t] >= params.vocab_size())
            throw UsageError("trajectory token outside the policy vocabulary");
    }
}

// grad += coefficient * d/dtheta log pi(token_t | state_t), summed over t.
inline void accumulate_log_prob_grad(const PolicyParams& params, const Trajectory& traj,
                                     double coefficient, GradientTable& grad) {
    if (coefficient == 0.0) return;
    std::vector<double> probs(static_cast<std::size_t>(params.vocab_size()));
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const int r = traj.states[t];
        softmax(params.row(r), 1.0, probs);
        std::span<double> g = grad.row(r);
        for (std::size_t b = 0; b < probs.size(); ++b) g[b] -= coefficient * probs[b];
        g[static_cast<std::size_t>(traj.tokens[t])] += coefficient;
    }
}

inline GradientTable log_prob_grad(const PolicyParams& params, const Trajectory& traj) {
    check_compatible(params, traj);
    GradientTable grad(params.logits.rows(), params.logits.cols());
    accumulate_log_prob_grad(params, traj, 1.0, grad);
    return grad;
}

inline double sequence_log_prob(const PolicyParams& params, const Trajectory& traj) {
    double total = 0.0;
    for (std::size_t t = 0; t < traj.tokens.size(); ++t)
        total += log_softmax_at(params.row(traj.states[t]), 1.0, traj.tokens[t]);
    return total;
}

inline double token_entropy(const PolicyParams& params, int state_row, double temperature) {
    if (!(temperature > 0.0)) throw UsageError("token_entropy: temperature must be > 0");
    return entropy_of(params.row(state_row), temperature);
}

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    int n = 0;
};

inline Estimate mean_and_stderr(std::span<const double> xs) {
    Estimate e;
    e.n = static_cast<int>(xs.size());
    if (xs.empty()) return e;
    double sum = 0.0;
    for (double x : xs) sum += x;
    e.mean = sum / static_cast<double>(e.n);
    if (e.n > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - e.mean) * (x - e.mean);
        e.std_error = std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
    }
    return e;
}

struct EntropyEstimate {
    Estimate sequence; // mean over rollouts of the summed per-token entropy
    Estimate token;    // mean over rollouts of the per-token average
};

// Monte-Carlo output entropy: rollout i uses problems[i % size] and its own
// stream derived from rng_seed, so the result does not depend on rollout order.
inline EntropyEstimate sequence_entropy_estimate(const PolicyParams& params,
                                                 std::span<const Problem> problems,
                                                 int n_rollouts, std::uint64_t rng_seed) {
    if (n_rollouts < 1) throw UsageError("sequence_entropy_estimate: n_rollouts must be >= 1");
    if (problems.empty()) throw UsageError("sequence_entropy_estimate: no problems");
    std::vector<double> seq(static_cast<std::size_t>(n_rollouts));
    std::vector<double> tok(static_cast<std::size_t>(n_rollouts));
    for (int i = 0; i < n_rollouts; ++i) {
        Rng rng(mix_seed(rng_seed, static_cast<std::uint64_t>(i)));
        Trajectory tr = sample(params, problems[static_cast<std::size_t>(i) % problems.size()], rng);
        double h = 0.0;
        for (double e : tr.entropy) h += e;
        seq[static_cast<std::size_t>(i)] = h;
        tok[static_cast<std::size_t>(i)] = tr.entropy.empty() ? 0.0 : h / static_cast<double>(tr.length());
    }
    return {mean_and_stderr(seq), mean_and_stderr(tok)};
}

inline PolicyParams apply_update(const PolicyParams& params, const GradientTable& gradient,
                                 double learning_rate) {
    if (!(learning_rate >= 0.0)) throw UsageError("apply_update: learning_rate must be >= 0");
    if (!params.logits.same_shape(gradient)) throw UsageError("apply_update: gradient shape mismatch");
    for (int r = 0; r < gradient.rows(); ++r)
        for (double g : gradient.row(r))
            if (!std::isfinite(g))
                throw NumericalError("non-finite gradient at " + params.space.describe(r));
    PolicyParams out = params;
    if (learning_rate == 0.0) return out;
    auto& z = out.logits.data();
    const auto& g = gradient.data();
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] += learning_rate * g[i];
        if (!std::isfinite(z[i]))
            throw NumericalError("non-finite logit after update at " +
                                 params.space.describe(static_cast<int>(i) / gradient.cols()));
    }
    return out;
}

} // namespace egc
