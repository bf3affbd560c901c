#pragma once

// Update rules (compression, exploration, entangled), rollout-group
// management and the stage scheduler.
//
// Every rule feeds the same per-token form: the batch gradient is
//   sum_y (1/|y|) * coefficient(y) * sum_t grad log pi(y_t | s_t)
// and the rules differ only in which trajectories take part and with what
// coefficient. The sum runs over trajectories without dividing by the batch
// size, so the learning rate is a per-sample step size.

#include "egc/env.hpp"
#include "egc/policy.hpp"
#include "egc/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace egc {

struct RolloutGroup {
    Problem problem;
    std::vector<Trajectory> trajectories;
    std::vector<double> rewards;

    int size() const { return static_cast<int>(trajectories.size()); }

    double group_accuracy() const {
        if (trajectories.empty()) return 0.0;
        int ok = 0;
        for (const auto& t : trajectories) ok += t.verdict.correct ? 1 : 0;
        return static_cast<double>(ok) / static_cast<double>(trajectories.size());
    }
};

enum class Ordering { CompressThenExplore, ExploreThenCompress, Entangled };

inline std::string_view to_string(Ordering o) {
    switch (o) {
    case Ordering::CompressThenExplore: return "compress_then_explore";
    case Ordering::ExploreThenCompress: return "explore_then_compress";
    case Ordering::Entangled: return "entangled";
    }
    return "compress_then_explore";
}

inline Ordering ordering_from(std::string_view s) {
    if (s == "compress_then_explore") return Ordering::CompressThenExplore;
    if (s == "explore_then_compress") return Ordering::ExploreThenCompress;
    if (s == "entangled") return Ordering::Entangled;
    throw ConfigError("plan.ordering", "unknown ordering '" + std::string(s) + "'");
}

enum class Phase { Compression, Exploration, Entangled };

inline std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::Compression: return "compression";
    case Phase::Exploration: return "exploration";
    case Phase::Entangled: return "entangled";
    }
    return "compression";
}

struct StagePlan {
    Ordering ordering = Ordering::CompressThenExplore;
    int steps_stage1 = 400;
    int steps_stage2 = 400;
    double temperature_stage1 = 1.0;
    double temperature_stage2 = 1.3;
    int group_size = 8;
    int groups_per_step = 64;
    double learning_rate = 0.5;
    int epochs = 1;                    // exploration passes per rollout batch
    std::optional<double> ratio_clip;  // symmetric importance-ratio clip, off by default
    std::string optimizer = "sgd";

    void validate() const {
        if (steps_stage1 < 0) throw ConfigError("plan.steps_stage1", "must be >= 0");
        if (steps_stage2 < 0) throw ConfigError("plan.steps_stage2", "must be >= 0");
        if (!(temperature_stage1 > 0.0)) throw ConfigError("plan.temperature_stage1", "must be > 0");
        if (!(temperature_stage2 > 0.0)) throw ConfigError("plan.temperature_stage2", "must be > 0");
        if (ordering == Ordering::CompressThenExplore && temperature_stage2 < temperature_stage1)
            throw ConfigError("plan.temperature_stage2",
                              "must be >= temperature_stage1 for compress_then_explore");
        if (group_size < 2) throw ConfigError("plan.group_size", "must be >= 2");
        if (groups_per_step < 1) throw ConfigError("plan.groups_per_step", "must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("plan.learning_rate", "must be > 0");
        if (epochs < 1) throw ConfigError("plan.epochs", "must be >= 1");
        if (ratio_clip && !(*ratio_clip > 0.0)) throw ConfigError("plan.ratio_clip", "must be > 0");
        if (optimizer != "sgd") throw ConfigError("plan.optimizer", "only 'sgd' is supported");
    }

    Phase phase_of_stage(int stage) const {
        switch (ordering) {
        case Ordering::CompressThenExplore: return stage == 1 ? Phase::Compression : Phase::Exploration;
        case Ordering::ExploreThenCompress: return stage == 1 ? Phase::Exploration : Phase::Compression;
        case Ordering::Entangled: return Phase::Entangled;
        }
        return Phase::Compression;
    }

    bool operator==(const StagePlan&) const = default;
};

// One emitted token's share of an update.
struct TokenGradRecord {
    double entropy = 0.0;
    double grad_magnitude = 0.0;  // |coefficient| * ||e_token - pi(.|s)||
    double coefficient = 0.0;     // per-token coefficient actually applied
    Token token_id = 0;
    int step_index = 0;
};

// Pearson correlation; NaN when undefined (fewer than two points or zero variance).
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw UsageError("pearson: length mismatch");
    const std::size_t n = xs.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double token_record_pearson(std::span<const TokenGradRecord> recs) {
    std::vector<double> h, g;
    h.reserve(recs.size());
    g.reserve(recs.size());
    for (const auto& r : recs) {
        h.push_back(r.entropy);
        g.push_back(r.grad_magnitude);
    }
    return pearson(h, g);
}

struct StepRecord {
    int step = 0;
    int stage = 1;
    Phase phase = Phase::Compression;
    double temperature = 1.0;
    double mean_sequence_entropy = 0.0;
    double mean_token_entropy = 0.0;
    double mean_length = 0.0;
    double mean_correct_length = 0.0;
    double median_correct_length = 0.0;
    double accuracy = 0.0;
    int compression_selected = 0;
    int accuracy_selected = 0;
    int positive_samples = 0;
    double mean_reward = 0.0;
    double grad_norm = 0.0;
    double connectors_per_trajectory = 0.0;
    double entropy_grad_pearson = std::numeric_limits<double>::quiet_NaN();
    bool noop = false;
};

struct UpdateResult {
    PolicyParams params;
    StepRecord record;
};

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Batch statistics shared by every rule; the selection counts and the
// gradient norm are filled in by the rule.
inline StepRecord describe_batch(std::span<const RolloutGroup> groups, const Vocabulary& vocab) {
    StepRecord rec;
    std::vector<double> correct_lengths;
    double seq_h = 0.0, tok_h = 0.0, len = 0.0, reward = 0.0, connectors = 0.0;
    int n = 0, ok = 0, rewarded = 0;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
            const Trajectory& tr = g.trajectories[i];
            double h = 0.0;
            for (double e : tr.entropy) h += e;
            seq_h += h;
            tok_h += tr.length() ? h / tr.length() : 0.0;
            len += tr.length();
            for (Token t : tr.tokens) connectors += vocab.is_connector(t) ? 1.0 : 0.0;
            if (tr.verdict.correct) {
                ++ok;
                correct_lengths.push_back(tr.length());
            }
            if (i < g.rewards.size()) {
                reward += g.rewards[i];
                ++rewarded;
            }
            ++n;
        }
    }
    if (n == 0) return rec;
    rec.mean_sequence_entropy = seq_h / n;
    rec.mean_token_entropy = tok_h / n;
    rec.mean_length = len / n;
    rec.accuracy = static_cast<double>(ok) / n;
    rec.connectors_per_trajectory = connectors / n;
    rec.mean_reward = rewarded ? reward / rewarded : 0.0;
    if (!correct_lengths.empty()) {
        double s = 0.0;
        for (double l : correct_lengths) s += l;
        rec.mean_correct_length = s / static_cast<double>(correct_lengths.size());
        rec.median_correct_length = median_of(correct_lengths);
    }
    return rec;
}

namespace detail {

inline void record_tokens(const PolicyParams& params, const Trajectory& tr, double coefficient,
                          int step_index, std::vector<TokenGradRecord>& sink) {
    std::vector<double> probs(static_cast<std::size_t>(params.vocab_size()));
    for (std::size_t t = 0; t < tr.tokens.size(); ++t) {
        softmax(params.row(tr.states[t]), 1.0, probs);
        double sq = 0.0;
        for (std::size_t b = 0; b < probs.size(); ++b) {
            double d = (static_cast<Token>(b) == tr.tokens[t] ? 1.0 : 0.0) - probs[b];
            sq += d * d;
        }
        TokenGradRecord rec;
        rec.entropy = tr.entropy[t];
        rec.coefficient = coefficient;
        rec.grad_magnitude = std::abs(coefficient) * std::sqrt(sq);
        rec.token_id = tr.tokens[t];
        rec.step_index = step_index;
        sink.push_back(rec);
    }
}

struct GradientContext {
    std::vector<TokenGradRecord>* sink = nullptr;
    int step_index = 0;
};

// Positive-only absolute-advantage contribution. Trajectories with reward
// <= 0 are skipped before anything about them is read.
inline int add_compression_gradient(const PolicyParams& params, const RolloutGroup& group,
                                    const RewardConfig& config, GradientTable& grad,
                                    const GradientContext& ctx) {
    if (group.rewards.size() != group.trajectories.size())
        throw UsageError("compression_update: rewards and trajectories differ in length");
    int used = 0;
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
        const double reward = group.rewards[i];
        if (!(reward > 0.0)) continue;
        const Trajectory& tr = group.trajectories[i];
        check_compatible(params, tr);
        if (tr.tokens.empty()) continue;
        const double coef = config.beta * reward / static_cast<double>(tr.length());
        accumulate_log_prob_grad(params, tr, coef, grad);
        if (ctx.sink) record_tokens(params, tr, coef, ctx.step_index, *ctx.sink);
        ++used;
    }
    return used;
}

} // namespace detail

inline std::vector<double> relative_advantage(std::span<const double> rewards) {
    if (rewards.size() < 2) throw UsageError("relative_advantage: need at least two rewards");
    const double n = static_cast<double>(rewards.size());
    double mu = 0.0;
    for (double r : rewards) mu += r;
    mu /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mu) * (r - mu);
    const double sigma = std::sqrt(var / n);
    std::vector<double> adv(rewards.size(), 0.0);
    if (sigma < 1e-8) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mu) / sigma;
    return adv;
}

namespace detail {

// Ratio-weighted group-relative contribution. The gradient of
// (pi_theta(y) / pi_old(y)) * A is ratio * A * grad log pi_theta(y).
inline void add_exploration_gradient(const PolicyParams& params, const RolloutGroup& group,
                                     std::optional<double> ratio_clip, GradientTable& grad,
                                     const GradientContext& ctx) {
    if (group.rewards.size() != group.trajectories.size())
        throw UsageError("exploration_update: rewards and trajectories differ in length");
    const std::vector<double> adv = relative_advantage(group.rewards);
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
        const Trajectory& tr = group.trajectories[i];
        check_compatible(params, tr);
        if (tr.tokens.empty()) continue;
        double old_logp = 0.0;
        for (double lp : tr.logp) old_logp += lp;
        const double ratio = std::exp(sequence_log_prob(params, tr) - old_logp);
        double coef = ratio * adv[i] / static_cast<double>(tr.length());
        if (ratio_clip) {
            const double eps = *ratio_clip;
            if ((adv[i] > 0.0 && ratio > 1.0 + eps) || (adv[i] < 0.0 && ratio < 1.0 - eps)) coef = 0.0;
        }
        accumulate_log_prob_grad(params, tr, coef, grad);
        if (ctx.sink) record_tokens(params, tr, coef, ctx.step_index, *ctx.sink);
    }
}

inline int trajectories_in(std::span<const RolloutGroup> groups) {
    int n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
}

} // namespace detail

inline UpdateResult compression_update(const PolicyParams& params, std::span<const RolloutGroup> groups,
                                       const RewardConfig& config, double lr,
                                       std::vector<TokenGradRecord>* sink = nullptr, int step_index = 0) {
    GradientTable grad(params.logits.rows(), params.logits.cols());
    int used = 0;
    for (const auto& g : groups) used += detail::add_compression_gradient(params, g, config, grad, {sink, step_index});
    StepRecord rec = describe_batch(groups, params.space.vocab());
    rec.phase = Phase::Compression;
    rec.compression_selected = detail::trajectories_in(groups);
    rec.positive_samples = used;
    rec.noop = used == 0;
    if (rec.noop) return {params, rec};
    rec.grad_norm = grad.norm();
    return {apply_update(params, grad, lr), rec};
}

inline UpdateResult exploration_update(const PolicyParams& params, const PolicyParams& params_old,
                                       std::span<const RolloutGroup> groups, double lr,
                                       std::optional<double> ratio_clip = std::nullopt,
                                       std::vector<TokenGradRecord>* sink = nullptr, int step_index = 0) {
    if (!params.logits.same_shape(params_old.logits))
        throw UsageError("exploration_update: params and params_old differ in shape");
    GradientTable grad(params.logits.rows(), params.logits.cols());
    for (const auto& g : groups) detail::add_exploration_gradient(params, g, ratio_clip, grad, {sink, step_index});
    StepRecord rec = describe_batch(groups, params.space.vocab());
    rec.phase = Phase::Exploration;
    rec.accuracy_selected = detail::trajectories_in(groups);
    for (const auto& g : groups)
        for (double r : g.rewards) rec.positive_samples += r > 0.0 ? 1 : 0;
    rec.grad_norm = grad.norm();
    rec.noop = rec.grad_norm == 0.0;
    return {apply_update(params, grad, lr), rec};
}

inline double entangled_threshold() { return 0.5; }

// Groups at or above 50% sampled accuracy get compression rewards and the
// positive-only rule; the rest get decomposed rewards and the on-policy
// group-relative rule. Both contributions go into one update.
inline UpdateResult entangled_update(const PolicyParams& params, std::span<const RolloutGroup> groups,
                                     const RewardConfig& config, double lr,
                                     std::vector<TokenGradRecord>* sink = nullptr, int step_index = 0) {
    GradientTable grad(params.logits.rows(), params.logits.cols());
    StepRecord rec = describe_batch(groups, params.space.vocab());
    rec.phase = Phase::Entangled;
    double reward_sum = 0.0;
    int reward_n = 0;
    for (const auto& g : groups) {
        RolloutGroup scored = g;
        scored.rewards.clear();
        if (g.group_accuracy() >= entangled_threshold()) {
            for (const auto& tr : g.trajectories) scored.rewards.push_back(stage1_reward(tr.verdict, config));
            rec.positive_samples += detail::add_compression_gradient(params, scored, config, grad, {sink, step_index});
            rec.compression_selected += g.size();
        } else {
            for (const auto& tr : g.trajectories)
                scored.rewards.push_back(stage2_reward(tr.verdict, tr.length(), config).total);
            detail::add_exploration_gradient(params, scored, std::nullopt, grad, {sink, step_index});
            rec.accuracy_selected += g.size();
        }
        for (double r : scored.rewards) reward_sum += r;
        reward_n += static_cast<int>(scored.rewards.size());
    }
    rec.mean_reward = reward_n ? reward_sum / reward_n : 0.0;
    rec.grad_norm = grad.norm();
    rec.noop = rec.grad_norm == 0.0;
    if (rec.noop) return {params, rec};
    return {apply_update(params, grad, lr), rec};
}

// Runs fn(i) for i in [0, n) over up to `workers` threads.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

// Problem for (seed, index): k uniform in [1, k_max], operands uniform.
inline Problem problem_at(const EnvConfig& env, std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t s = mix_seed(seed, index);
    const int k = 1 + static_cast<int>(mix_seed(s, 0xabcdefULL) % static_cast<std::uint64_t>(env.k_max));
    Problem p = generate_problem(s, k, env.modulus);
    p.slip = static_cast<double>(mix_seed(s, 0x5119ULL) >> 11) * 0x1.0p-53 < env.slip_rate;
    return p;
}

inline std::vector<Problem> make_problem_set(const EnvConfig& env, int n, std::uint64_t seed) {
    std::vector<Problem> out;
    out.reserve(static_cast<std::size_t>(std::max(0, n)));
    for (int i = 0; i < n; ++i) out.push_back(problem_at(env, seed, static_cast<std::uint64_t>(i)));
    return out;
}

// G trajectories of one problem; each trajectory has its own derived stream,
// so the result does not depend on how groups are spread over workers.
inline RolloutGroup sample_group(const PolicyParams& params, const Problem& problem, int group_size,
                                 std::uint64_t seed) {
    RolloutGroup g;
    g.problem = problem;
    g.trajectories.reserve(static_cast<std::size_t>(group_size));
    for (int j = 0; j < group_size; ++j) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(j)));
        g.trajectories.push_back(sample(params, problem, rng));
    }
    return g;
}

inline std::vector<RolloutGroup> sample_batch(const PolicyParams& params, const EnvConfig& env,
                                              int groups, int group_size, std::uint64_t seed,
                                              int workers = 1) {
    std::vector<RolloutGroup> batch(static_cast<std::size_t>(groups));
    parallel_for(groups, workers, [&](int i) {
        const std::uint64_t gs = mix_seed(seed, static_cast<std::uint64_t>(i));
        batch[static_cast<std::size_t>(i)] =
            sample_group(params, problem_at(env, gs, 1), group_size, mix_seed(gs, 2));
    });
    return batch;
}

enum class InitKind { Base, Uniform };

struct PolicyInit {
    InitKind kind = InitKind::Base;
    BasePrior prior;

    bool operator==(const PolicyInit&) const = default;
};

inline PolicyParams make_initial_policy(const EnvConfig& env, const PolicyInit& init,
                                        std::uint64_t policy_seed) {
    if (init.kind == InitKind::Uniform) return make_uniform_policy(env);
    return make_base_policy(env, init.prior, policy_seed);
}

struct Checkpoint {
    std::string label; // "initial", "stage1", "stage2"
    int step = 0;
    PolicyParams params;
};

struct TrainReport {
    std::vector<StepRecord> records;
    std::vector<Checkpoint> checkpoints;

    const PolicyParams& final_params() const { return checkpoints.back().params; }
    const Checkpoint* checkpoint(std::string_view label) const {
        for (const auto& c : checkpoints)
            if (c.label == label) return &c;
        return nullptr;
    }
};

struct TrainOptions {
    int workers = 1;
    bool collect_token_records = false;
    // Called once per step with that step's token records (empty unless collected).
    std::function<void(const StepRecord&, std::span<const TokenGradRecord>)> on_step;
};

// Executes the plan's two stages in order. Stage 1 runs steps
// [0, steps_stage1), stage 2 the following steps_stage2 steps.
inline TrainReport run_training(const StagePlan& plan, const EnvConfig& env, const RewardConfig& reward,
                                const PolicyInit& init, std::uint64_t policy_seed, std::uint64_t rng_seed,
                                const TrainOptions& options = {}) {
    plan.validate();
    env.validate();
    reward.validate();
    TrainReport report;
    PolicyParams params = make_initial_policy(env, init, policy_seed);
    report.checkpoints.push_back({"initial", 0, params});
    const Vocabulary vocab(env);
    std::vector<TokenGradRecord> tokens;
    std::vector<TokenGradRecord>* sink = options.collect_token_records ? &tokens : nullptr;

    int step_index = 0;
    for (int stage = 1; stage <= 2; ++stage) {
        const int steps = stage == 1 ? plan.steps_stage1 : plan.steps_stage2;
        const double tau = stage == 1 ? plan.temperature_stage1 : plan.temperature_stage2;
        const Phase phase = plan.phase_of_stage(stage);
        for (int s = 0; s < steps; ++s, ++step_index) {
            tokens.clear();
            PolicyParams sampler = params;
            sampler.temperature = tau;
            std::vector<RolloutGroup> batch =
                sample_batch(sampler, env, plan.groups_per_step, plan.group_size,
                             mix_seed(rng_seed, static_cast<std::uint64_t>(step_index)), options.workers);
            StepRecord rec;
            if (phase == Phase::Compression) {
                for (auto& g : batch)
                    for (const auto& tr : g.trajectories) g.rewards.push_back(stage1_reward(tr.verdict, reward));
                auto out = compression_update(params, batch, reward, plan.learning_rate, sink, step_index);
                params = std::move(out.params);
                rec = out.record;
            } else if (phase == Phase::Exploration) {
                for (auto& g : batch)
                    for (const auto& tr : g.trajectories)
                        g.rewards.push_back(stage2_reward(tr.verdict, tr.length(), reward).total);
                const PolicyParams old = params;
                for (int e = 0; e < plan.epochs; ++e) {
                    auto out = exploration_update(params, old, batch, plan.learning_rate, plan.ratio_clip,
                                                  e == 0 ? sink : nullptr, step_index);
                    params = std::move(out.params);
                    if (e == 0) rec = out.record;
                }
            } else {
                auto out = entangled_update(params, batch, reward, plan.learning_rate, sink, step_index);
                params = std::move(out.params);
                rec = out.record;
            }
            params.temperature = 1.0;
            rec.step = step_index;
            rec.stage = stage;
            rec.phase = phase;
            rec.temperature = tau;
            if (sink) rec.entropy_grad_pearson = token_record_pearson(tokens);
            report.records.push_back(rec);
            if (options.on_step) options.on_step(rec, tokens);
        }
        report.checkpoints.push_back({stage == 1 ? "stage1" : "stage2", step_index, params});
    }
    return report;
}

struct EvalMetrics {
    int n_problems = 0;
    int n_samples = 0;
    double accuracy = 0.0;
    double mean_length = 0.0;
    double median_length = 0.0;
    double mean_correct_length = 0.0;
    double mean_productive_steps = 0.0;
    double compression_ratio = 0.0; // mean of length / min_correct_length
    double connectors_per_trajectory = 0.0;
    double mean_sequence_entropy = 0.0;
};

// Samples n_samples chains per problem at temperature 1.
inline EvalMetrics evaluate_policy(const PolicyParams& policy, std::span<const Problem> problems,
                                   int n_samples, std::uint64_t seed) {
    PolicyParams params = policy;
    params.temperature = 1.0;
    EvalMetrics m;
    m.n_problems = static_cast<int>(problems.size());
    m.n_samples = n_samples;
    std::vector<double> lengths;
    double correct_len = 0.0, steps = 0.0, ratio = 0.0, connectors = 0.0, entropy = 0.0;
    int ok = 0;
    const Vocabulary& vocab = params.space.vocab();
    for (std::size_t p = 0; p < problems.size(); ++p) {
        for (int j = 0; j < n_samples; ++j) {
            Rng rng(mix_seed(mix_seed(seed, p), static_cast<std::uint64_t>(j)));
            Trajectory tr = sample(params, problems[p], rng);
            lengths.push_back(tr.length());
            steps += tr.verdict.productive_steps;
            ratio += static_cast<double>(tr.length()) / min_correct_length(problems[p]);
            for (Token t : tr.tokens) connectors += vocab.is_connector(t) ? 1.0 : 0.0;
            for (double e : tr.entropy) entropy += e;
            if (tr.verdict.correct) {
                ++ok;
                correct_len += tr.length();
            }
        }
    }
    const double n = static_cast<double>(lengths.size());
    if (n == 0) return m;
    double total = 0.0;
    for (double l : lengths) total += l;
    m.accuracy = ok / n;
    m.mean_length = total / n;
    m.median_length = median_of(lengths);
    m.mean_correct_length = ok ? correct_len / ok : 0.0;
    m.mean_productive_steps = steps / n;
    m.compression_ratio = ratio / n;
    m.connectors_per_trajectory = connectors / n;
    m.mean_sequence_entropy = entropy / n;
    return m;
}

} // namespace egc
