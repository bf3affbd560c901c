#pragma once

// Analysis quantities: the conditional-entropy probe, token entropy vs
// gradient magnitude, per-token emission tables and correctness transitions
// between two policies.

#include "egc/env.hpp"
#include "egc/policy.hpp"
#include "egc/reward.hpp"
#include "egc/trainer.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace egc {

// One objective of the entropy probe. Accuracy alone is trained the way
// verifiable-reward RL usually is, with group-relative advantages on the
// correctness indicator. Accuracy with compression is trained with the
// positive-only rule on clipped and shaped stage-1 rewards.
enum class ProbeRule { GroupRelative, PositiveOnly };

struct ProbeObjective {
    bool compress = false;
    ProbeRule rule = ProbeRule::GroupRelative;
    RewardConfig reward;

    static ProbeObjective accuracy(const RewardConfig& r) { return {false, ProbeRule::GroupRelative, r}; }
    static ProbeObjective accuracy_and_compression(const RewardConfig& r) {
        return {true, ProbeRule::PositiveOnly, r};
    }

    double score(const Verdict& v) const {
        if (compress) return stage1_reward(v, reward);
        return v.correct ? 1.0 : 0.0;
    }
};

struct ProbeBudget {
    int steps = 300;
    int groups_per_step = 64;
    int group_size = 8;
    double learning_rate = 0.5;
    double temperature = 1.0;
    int entropy_rollouts = 4000;
    int workers = 1;

    bool operator==(const ProbeBudget&) const = default;
};

struct EntropyProbe {
    Estimate H_acc_only;
    Estimate H_acc_and_comp;
    std::vector<double> per_seed_acc_only;
    std::vector<double> per_seed_acc_and_comp;
};

inline PolicyParams train_probe_objective(const EnvConfig& env, const PolicyInit& init,
                                          const ProbeObjective& objective, const ProbeBudget& budget,
                                          std::uint64_t seed) {
    PolicyParams params = make_initial_policy(env, init, seed);
    for (int s = 0; s < budget.steps; ++s) {
        PolicyParams sampler = params;
        sampler.temperature = budget.temperature;
        std::vector<RolloutGroup> batch =
            sample_batch(sampler, env, budget.groups_per_step, budget.group_size,
                         mix_seed(mix_seed(seed, 0x9e0be), static_cast<std::uint64_t>(s)), budget.workers);
        for (auto& g : batch)
            for (const auto& tr : g.trajectories) g.rewards.push_back(objective.score(tr.verdict));
        if (objective.rule == ProbeRule::PositiveOnly)
            params = compression_update(params, batch, objective.reward, budget.learning_rate).params;
        else
            params = exploration_update(params, params, batch, budget.learning_rate).params;
        params.temperature = 1.0;
    }
    return params;
}

// Trains both objectives from the same initialisation and rollout seeds and
// estimates the sequence entropy of each result on a shared problem sample.
// With several seeds the reported error is the spread of per-seed means;
// with one seed it is the rollout standard error.
inline EntropyProbe entropy_conflict_probe(const EnvConfig& env, const PolicyInit& init,
                                           const ProbeObjective& acc_only,
                                           const ProbeObjective& acc_and_comp, const ProbeBudget& budget,
                                           std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw UsageError("entropy_conflict_probe: no seeds");
    if (budget.steps < 0) throw ConfigError("probe.steps", "must be >= 0");
    EntropyProbe probe;
    Estimate single_a, single_b;
    for (std::uint64_t seed : seeds) {
        const std::vector<Problem> problems = make_problem_set(env, 512, mix_seed(seed, 0xe7a1));
        const std::uint64_t eval_seed = mix_seed(seed, 0x5eed);
        const PolicyParams a = train_probe_objective(env, init, acc_only, budget, seed);
        const PolicyParams b = train_probe_objective(env, init, acc_and_comp, budget, seed);
        single_a = sequence_entropy_estimate(a, problems, budget.entropy_rollouts, eval_seed).sequence;
        single_b = sequence_entropy_estimate(b, problems, budget.entropy_rollouts, eval_seed).sequence;
        probe.per_seed_acc_only.push_back(single_a.mean);
        probe.per_seed_acc_and_comp.push_back(single_b.mean);
    }
    if (seeds.size() == 1) {
        probe.H_acc_only = single_a;
        probe.H_acc_and_comp = single_b;
    } else {
        probe.H_acc_only = mean_and_stderr(probe.per_seed_acc_only);
        probe.H_acc_and_comp = mean_and_stderr(probe.per_seed_acc_and_comp);
    }
    return probe;
}

struct TokenStat {
    Token token = 0;
    std::string name;
    bool connector = false;
    long count = 0;              // emissions; sums to the total tokens emitted
    double per_trajectory = 0.0; // count / number of trajectories
    double mean_entropy = 0.0;   // mean entropy at the emitting positions
};

// Per-token emission table sorted by mean emission entropy, highest first.
// Tokens never emitted have entropy 0 and sort last.
inline std::vector<TokenStat> connector_stats(std::span<const Trajectory> trajectories, const Vocabulary& vocab) {
    std::vector<TokenStat> table(static_cast<std::size_t>(vocab.size()));
    std::vector<double> entropy_sum(table.size(), 0.0);
    for (Token t = 0; t < vocab.size(); ++t) {
        table[static_cast<std::size_t>(t)].token = t;
        table[static_cast<std::size_t>(t)].name = vocab.name(t);
        table[static_cast<std::size_t>(t)].connector = vocab.is_connector(t);
    }
    for (const auto& tr : trajectories)
        for (std::size_t i = 0; i < tr.tokens.size(); ++i) {
            const auto t = static_cast<std::size_t>(tr.tokens[i]);
            if (t >= table.size()) throw UsageError("connector_stats: token outside the vocabulary");
            ++table[t].count;
            entropy_sum[t] += tr.entropy[i];
        }
    const double n = static_cast<double>(trajectories.size());
    for (std::size_t t = 0; t < table.size(); ++t) {
        if (table[t].count) table[t].mean_entropy = entropy_sum[t] / static_cast<double>(table[t].count);
        if (n > 0) table[t].per_trajectory = static_cast<double>(table[t].count) / n;
    }
    std::stable_sort(table.begin(), table.end(),
                     [](const TokenStat& a, const TokenStat& b) { return a.mean_entropy > b.mean_entropy; });
    return table;
}

inline double connectors_per_trajectory(std::span<const Trajectory> trajectories, const Vocabulary& vocab) {
    if (trajectories.empty()) return 0.0;
    long n = 0;
    for (const auto& tr : trajectories)
        for (Token t : tr.tokens) n += vocab.is_connector(t) ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(trajectories.size());
}

struct TransitionEntry {
    int index = 0; // position in the evaluated problem list
    Problem problem;
    double length_before = 0.0;
    double length_after = 0.0;
    double steps_before = 0.0;
    double steps_after = 0.0;
};

struct TransitionGroups {
    std::vector<TransitionEntry> preserved; // correct -> correct
    std::vector<TransitionEntry> lost;      // correct -> incorrect
    std::vector<TransitionEntry> gained;    // incorrect -> correct
    std::vector<TransitionEntry> failed;    // incorrect -> incorrect

    std::size_t total() const { return preserved.size() + lost.size() + gained.size() + failed.size(); }
};

struct ProblemVote {
    bool correct = false; // strict majority of samples correct
    double mean_length = 0.0;
    double mean_steps = 0.0;
};

inline ProblemVote majority_vote(const PolicyParams& policy, const Problem& problem, int n_samples,
                                 std::uint64_t seed) {
    PolicyParams params = policy;
    params.temperature = 1.0;
    int ok = 0;
    double len = 0.0, steps = 0.0;
    for (int j = 0; j < n_samples; ++j) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(j)));
        const Trajectory tr = sample(params, problem, rng);
        ok += tr.verdict.correct ? 1 : 0;
        len += tr.length();
        steps += tr.verdict.productive_steps;
    }
    return {2 * ok > n_samples, len / n_samples, steps / n_samples};
}

inline TransitionGroups transition_groups(const PolicyParams& before, const PolicyParams& after,
                                          std::span<const Problem> problems, int n_samples_per_problem = 16,
                                          std::uint64_t seed = 0) {
    if (n_samples_per_problem < 1) throw UsageError("transition_groups: n_samples_per_problem must be >= 1");
    TransitionGroups out;
    for (std::size_t p = 0; p < problems.size(); ++p) {
        const std::uint64_t s = mix_seed(seed, p);
        const ProblemVote b = majority_vote(before, problems[p], n_samples_per_problem, s);
        const ProblemVote a = majority_vote(after, problems[p], n_samples_per_problem, s);
        TransitionEntry e{static_cast<int>(p), problems[p], b.mean_length, a.mean_length, b.mean_steps, a.mean_steps};
        if (b.correct && a.correct) out.preserved.push_back(e);
        else if (b.correct) out.lost.push_back(e);
        else if (a.correct) out.gained.push_back(e);
        else out.failed.push_back(e);
    }
    return out;
}

inline double median_length_after(std::span<const TransitionEntry> group) {
    std::vector<double> xs;
    for (const auto& e : group) xs.push_back(e.length_after);
    return median_of(xs);
}

inline double median_length_before(std::span<const TransitionEntry> group) {
    std::vector<double> xs;
    for (const auto& e : group) xs.push_back(e.length_before);
    return median_of(xs);
}

} // namespace egc
