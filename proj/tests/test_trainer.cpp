#include "egc/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

using namespace egc;

namespace {

const EnvConfig kEnv{};

Trajectory find_trajectory(const PolicyParams& policy, const std::function<bool(const Trajectory&)>& pred,
                           std::uint64_t seed = 0) {
    for (std::uint64_t i = 0; i < 100000; ++i) {
        Rng rng(mix_seed(seed, i));
        Trajectory tr = sample(policy, problem_at(kEnv, seed, i), rng);
        if (pred(tr)) return tr;
    }
    throw std::runtime_error("no trajectory satisfies the predicate");
}

RolloutGroup group_of(std::vector<Trajectory> trs, std::vector<double> rewards) {
    RolloutGroup g;
    g.problem = trs.front().problem;
    g.trajectories = std::move(trs);
    g.rewards = std::move(rewards);
    return g;
}

GradientTable diff(const PolicyParams& after, const PolicyParams& before) {
    GradientTable d(after.logits.rows(), after.logits.cols());
    for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] = after.logits.data()[i] - before.logits.data()[i];
    return d;
}

double max_abs_diff(const GradientTable& a, const GradientTable& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double slope(const std::vector<double>& ys) {
    const double n = static_cast<double>(ys.size());
    double mx = (n - 1) / 2.0, my = std::accumulate(ys.begin(), ys.end(), 0.0) / n, sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        sxy += (static_cast<double>(i) - mx) * (ys[i] - my);
        sxx += (static_cast<double>(i) - mx) * (static_cast<double>(i) - mx);
    }
    return sxy / sxx;
}

} // namespace

TEST(RelativeAdvantage, TwoLevelGroup) {
    const auto a = relative_advantage(std::vector<double>{1, 1, 0, 0});
    EXPECT_EQ(a, (std::vector<double>{1, 1, -1, -1}));
}

TEST(RelativeAdvantage, ZeroVarianceGuard) {
    EXPECT_EQ(relative_advantage(std::vector<double>{0.3, 0.3, 0.3, 0.3}), (std::vector<double>(4, 0.0)));
    EXPECT_EQ(relative_advantage(std::vector<double>{1.0, 1.0 + 1e-10}), (std::vector<double>(2, 0.0)));
}

TEST(RelativeAdvantage, HandComputedCase) {
    const auto a = relative_advantage(std::vector<double>{2, 1, 1, 0});
    EXPECT_NEAR(a[0], std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(a[1], 0.0, 1e-12);
    EXPECT_NEAR(a[2], 0.0, 1e-12);
    EXPECT_NEAR(a[3], -std::sqrt(2.0), 1e-12);
}

TEST(RelativeAdvantage, NeedsTwoRewards) {
    EXPECT_THROW(relative_advantage(std::vector<double>{1.0}), UsageError);
}

TEST(CompressionUpdate, AllZeroRewardsIsANoop) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 1);
    std::vector<RolloutGroup> batch = sample_batch(base, kEnv, 4, 8, 3);
    for (auto& g : batch) g.rewards.assign(g.trajectories.size(), 0.0);
    const UpdateResult out = compression_update(base, batch, RewardConfig{}, 0.5);
    EXPECT_EQ(out.params, base);
    EXPECT_TRUE(out.record.noop);
    EXPECT_EQ(out.record.positive_samples, 0);
    EXPECT_TRUE(compression_update(base, {}, RewardConfig{}, 0.5).record.noop);
}

TEST(CompressionUpdate, SingleTrajectoryDefinition) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 1);
    const Trajectory tr = find_trajectory(base, [](const Trajectory& t) { return t.verdict.correct; });
    RewardConfig c;
    c.beta = 1.0;
    const double lr = 0.1;
    const UpdateResult out = compression_update(base, std::vector<RolloutGroup>{group_of({tr}, {0.5})}, c, lr);
    GradientTable expect = log_prob_grad(base, tr);
    for (double& x : expect.data()) x *= lr * 0.5 / tr.length();
    EXPECT_LT(max_abs_diff(diff(out.params, base), expect), 1e-14);
    EXPECT_EQ(out.record.positive_samples, 1);
}

TEST(CompressionUpdate, ShorterCorrectChainsGetLargerCoefficients) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 1);
    const RewardConfig c;
    const Trajectory short_tr =
        find_trajectory(base, [](const Trajectory& t) { return t.verdict.correct && t.length() <= 9; });
    const Trajectory long_tr = find_trajectory(
        base, [&](const Trajectory& t) { return t.verdict.correct && t.length() > short_tr.length() && t.length() <= 16; });
    std::vector<TokenGradRecord> recs;
    const RolloutGroup g = group_of({short_tr, long_tr},
                                    {stage1_reward(short_tr.verdict, c), stage1_reward(long_tr.verdict, c)});
    compression_update(base, std::vector<RolloutGroup>{g}, c, 0.5, &recs);
    ASSERT_EQ(recs.size(), static_cast<std::size_t>(short_tr.length() + long_tr.length()));
    EXPECT_GT(recs.front().coefficient, recs.back().coefficient);
    EXPECT_GT(shape(short_tr.length(), c), shape(long_tr.length(), c));
}

TEST(CompressionUpdate, AbsoluteAdvantageKeepsEveryCorrectSamplePositive) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 2);
    const RewardConfig c;
    std::vector<Trajectory> trs;
    std::vector<double> rewards;
    for (int len : {7, 9, 11, 13}) {
        trs.push_back(find_trajectory(base, [&](const Trajectory& t) { return t.verdict.correct && t.length() == len; }, 40));
        rewards.push_back(stage1_reward(trs.back().verdict, c));
    }
    std::vector<TokenGradRecord> recs;
    compression_update(base, std::vector<RolloutGroup>{group_of(trs, rewards)}, c, 0.5, &recs);
    for (const auto& r : recs) EXPECT_GT(r.coefficient, 0.0);
    const auto adv = relative_advantage(rewards);
    EXPECT_LT(adv[2], 0.0);
    EXPECT_LT(adv[3], 0.0);
}

TEST(CompressionUpdate, NonPositiveTrajectoriesAreNeverRead) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 3);
    std::vector<RolloutGroup> batch = sample_batch(base, kEnv, 6, 8, 9);
    const RewardConfig c;
    for (auto& g : batch)
        for (const auto& t : g.trajectories) g.rewards.push_back(stage1_reward(t.verdict, c));
    const UpdateResult ref = compression_update(base, batch, c, 0.5);
    std::vector<RolloutGroup> mutated = batch;
    for (auto& g : mutated)
        for (std::size_t i = 0; i < g.trajectories.size(); ++i)
            if (!(g.rewards[i] > 0.0)) {
                g.trajectories[i].tokens.assign(3, 99);
                g.trajectories[i].states.assign(5, -1);
            }
    EXPECT_EQ(compression_update(base, mutated, c, 0.5).params, ref.params);
}

TEST(ExplorationUpdate, ZeroAdvantagesLeaveParamsUnchanged) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 1);
    std::vector<RolloutGroup> batch = sample_batch(base, kEnv, 4, 8, 1);
    for (auto& g : batch) g.rewards.assign(g.trajectories.size(), 1.0);
    const UpdateResult out = exploration_update(base, base, batch, 0.5);
    EXPECT_EQ(out.params, base);
    EXPECT_TRUE(out.record.noop);
}

TEST(ExplorationUpdate, TwoLevelGroupIsSymmetric) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 1);
    const Trajectory good = find_trajectory(base, [](const Trajectory& t) { return t.verdict.correct; });
    const Trajectory bad = find_trajectory(base, [](const Trajectory& t) { return !t.verdict.correct; });
    std::vector<TokenGradRecord> recs;
    const UpdateResult out =
        exploration_update(base, base, std::vector<RolloutGroup>{group_of({good, bad}, {1.5, 0.5})}, 0.1, std::nullopt, &recs);
    EXPECT_NEAR(recs.front().coefficient, 1.0 / good.length(), 1e-12);
    EXPECT_NEAR(recs.back().coefficient, -1.0 / bad.length(), 1e-12);
    EXPECT_GT(sequence_log_prob(out.params, good), sequence_log_prob(base, good));
    EXPECT_LT(sequence_log_prob(out.params, bad), sequence_log_prob(base, bad));
}

TEST(ExplorationUpdate, OnPolicyReducesToReinforce) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 4);
    PolicyParams hot = base;
    hot.temperature = 1.3;
    std::vector<RolloutGroup> batch = sample_batch(hot, kEnv, 8, 8, 21);
    const RewardConfig c;
    GradientTable expect(base.logits.rows(), base.logits.cols());
    for (auto& g : batch) {
        for (const auto& t : g.trajectories) g.rewards.push_back(stage2_reward(t.verdict, t.length(), c).total);
        const auto adv = relative_advantage(g.rewards);
        for (std::size_t i = 0; i < g.trajectories.size(); ++i)
            accumulate_log_prob_grad(base, g.trajectories[i], adv[i] / g.trajectories[i].length(), expect);
    }
    const UpdateResult out = exploration_update(base, base, batch, 1.0);
    EXPECT_LT(max_abs_diff(diff(out.params, base), expect), 1e-10);
}

TEST(ExplorationUpdate, RatioGradientMatchesFiniteDifferences) {
    const PolicyParams old = make_base_policy(kEnv, BasePrior{}, 5);
    PolicyParams cur = old;
    std::mt19937_64 gen(2);
    std::normal_distribution<double> n(0.0, 0.05);
    for (double& z : cur.logits.data()) z += n(gen);
    std::vector<RolloutGroup> batch = sample_batch(old, kEnv, 3, 4, 8);
    for (auto& g : batch)
        for (const auto& t : g.trajectories) g.rewards.push_back(t.verdict.correct ? 1.0 + 0.01 * t.length() : 0.0);
    auto objective = [&](const PolicyParams& p) {
        double j = 0.0;
        for (const auto& g : batch) {
            const auto adv = relative_advantage(g.rewards);
            for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
                const auto& t = g.trajectories[i];
                double old_lp = 0.0;
                for (double lp : t.logp) old_lp += lp;
                j += std::exp(sequence_log_prob(p, t) - old_lp) * adv[i] / t.length();
            }
        }
        return j;
    };
    const GradientTable g = diff(exploration_update(cur, old, batch, 1.0).params, cur);
    const double h = 1e-6;
    int checked = 0;
    for (const auto& grp : batch)
        for (const auto& t : grp.trajectories)
            for (std::size_t k = 0; k < t.tokens.size(); k += 3) {
                const int r = t.states[k], c = t.tokens[k];
                PolicyParams up = cur, dn = cur;
                up.logits.at(r, c) += h;
                dn.logits.at(r, c) -= h;
                const double fd = (objective(up) - objective(dn)) / (2 * h);
                EXPECT_NEAR(g.at(r, c), fd, 1e-6 * std::max(1.0, std::abs(fd)));
                ++checked;
            }
    EXPECT_GT(checked, 10);
}

TEST(ExplorationUpdate, RatioClipDropsOutOfRangeSamples) {
    const PolicyParams old = make_base_policy(kEnv, BasePrior{}, 6);
    PolicyParams cur = old;
    for (double& z : cur.logits.data()) z *= 1.5;
    std::vector<RolloutGroup> batch = sample_batch(old, kEnv, 4, 8, 5);
    for (auto& g : batch)
        for (const auto& t : g.trajectories) g.rewards.push_back(t.verdict.correct ? 1.0 : 0.0);
    std::vector<TokenGradRecord> clipped, unclipped;
    exploration_update(cur, old, batch, 0.1, 0.2, &clipped);
    exploration_update(cur, old, batch, 0.1, std::nullopt, &unclipped);
    int zeros_clipped = 0, zeros_plain = 0;
    for (const auto& r : clipped) zeros_clipped += r.coefficient == 0.0;
    for (const auto& r : unclipped) zeros_plain += r.coefficient == 0.0;
    EXPECT_GT(zeros_clipped, zeros_plain);
}

TEST(ExplorationUpdate, SmallStepIncreasesTheSurrogate) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 7);
    const RewardConfig c;
    std::vector<RolloutGroup> batch = sample_batch(base, kEnv, 64, 8, 17);
    for (auto& g : batch)
        for (const auto& t : g.trajectories) g.rewards.push_back(stage2_reward(t.verdict, t.length(), c).total);
    auto surrogate = [&](const PolicyParams& p) {
        double s = 0.0;
        for (const auto& g : batch) {
            const auto adv = relative_advantage(g.rewards);
            for (std::size_t i = 0; i < g.trajectories.size(); ++i)
                s += adv[i] * sequence_log_prob(p, g.trajectories[i]) / g.trajectories[i].length();
        }
        return s;
    };
    const PolicyParams after = exploration_update(base, base, batch, 1e-3).params;
    EXPECT_GT(surrogate(after), surrogate(base));
}

TEST(EntangledUpdate, SelectionCounts) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 1);
    const RewardConfig c;
    const Trajectory good = find_trajectory(base, [](const Trajectory& t) { return t.verdict.correct; });
    const Trajectory bad = find_trajectory(base, [](const Trajectory& t) { return !t.verdict.correct; });
    const std::vector<RolloutGroup> all_good(3, group_of(std::vector<Trajectory>(8, good), {}));
    const UpdateResult a = entangled_update(base, all_good, c, 0.5);
    EXPECT_EQ(a.record.compression_selected, 24);
    EXPECT_EQ(a.record.accuracy_selected, 0);

    const std::vector<RolloutGroup> all_bad(3, group_of(std::vector<Trajectory>(8, bad), {}));
    const UpdateResult b = entangled_update(base, all_bad, c, 0.5);
    EXPECT_EQ(b.record.compression_selected, 0);
    EXPECT_EQ(b.record.accuracy_selected, 24);
    EXPECT_EQ(b.record.positive_samples, 0);
    EXPECT_EQ(b.params, base);

    std::vector<Trajectory> half(4, good);
    half.insert(half.end(), 4, bad);
    const UpdateResult h = entangled_update(base, std::vector<RolloutGroup>{group_of(half, {})}, c, 0.5);
    EXPECT_EQ(h.record.compression_selected, 8);
    EXPECT_EQ(h.record.accuracy_selected, 0);
}

TEST(EntangledUpdate, SumsBothRules) {
    const PolicyParams base = make_base_policy(kEnv, BasePrior{}, 2);
    const RewardConfig c;
    std::vector<RolloutGroup> batch = sample_batch(base, kEnv, 16, 8, 33);
    std::vector<RolloutGroup> comp, expl;
    for (const auto& g : batch) {
        RolloutGroup s = g;
        if (g.group_accuracy() >= 0.5) {
            for (const auto& t : g.trajectories) s.rewards.push_back(stage1_reward(t.verdict, c));
            comp.push_back(s);
        } else {
            for (const auto& t : g.trajectories) s.rewards.push_back(stage2_reward(t.verdict, t.length(), c).total);
            expl.push_back(s);
        }
    }
    ASSERT_FALSE(comp.empty());
    ASSERT_FALSE(expl.empty());
    GradientTable expect = diff(compression_update(base, comp, c, 1.0).params, base);
    expect += diff(exploration_update(base, base, expl, 1.0).params, base);
    EXPECT_LT(max_abs_diff(diff(entangled_update(base, batch, c, 1.0).params, base), expect), 1e-12);
}

TEST(StagePlan, Validation) {
    StagePlan p;
    p.temperature_stage2 = 0.9;
    try {
        p.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "plan.temperature_stage2");
    }
    p.ordering = Ordering::ExploreThenCompress;
    EXPECT_NO_THROW(p.validate());
    p = {};
    p.group_size = 1;
    EXPECT_THROW(p.validate(), ConfigError);
    p = {};
    p.steps_stage1 = -1;
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_THROW(ordering_from("sideways"), ConfigError);
}

TEST(RunTraining, ZeroStepsReturnsTheInitialPolicy) {
    StagePlan p;
    p.steps_stage1 = p.steps_stage2 = 0;
    const TrainReport r = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 3, 4);
    EXPECT_TRUE(r.records.empty());
    EXPECT_EQ(r.final_params(), make_initial_policy(kEnv, PolicyInit{}, 3));
    EXPECT_EQ(r.checkpoints.size(), 3u);
}

TEST(RunTraining, EntangledRecordsCarryBothCounts) {
    StagePlan p;
    p.ordering = Ordering::Entangled;
    p.steps_stage1 = 3;
    p.steps_stage2 = 2;
    p.groups_per_step = 16;
    const TrainReport r = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 1, 2);
    ASSERT_EQ(r.records.size(), 5u);
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.phase, Phase::Entangled);
        EXPECT_EQ(rec.compression_selected + rec.accuracy_selected, 16 * 8);
        EXPECT_GE(rec.compression_selected, 0);
        EXPECT_GE(rec.accuracy_selected, 0);
    }
}

TEST(RunTraining, StagesFollowThePlan) {
    StagePlan p;
    p.ordering = Ordering::ExploreThenCompress;
    p.steps_stage1 = 2;
    p.steps_stage2 = 3;
    p.groups_per_step = 4;
    const TrainReport r = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 1, 2);
    ASSERT_EQ(r.records.size(), 5u);
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(r.records[i].step, i);
        EXPECT_EQ(r.records[i].phase, i < 2 ? Phase::Exploration : Phase::Compression);
        EXPECT_EQ(r.records[i].temperature, i < 2 ? 1.0 : 1.3);
    }
    EXPECT_EQ(r.checkpoint("stage1")->step, 2);
    EXPECT_EQ(r.checkpoint("stage2")->step, 5);
    EXPECT_EQ(r.checkpoint("missing"), nullptr);
}

TEST(RunTraining, DeterministicAndWorkerIndependent) {
    StagePlan p;
    p.steps_stage1 = 4;
    p.steps_stage2 = 4;
    p.groups_per_step = 16;
    const TrainReport a = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 5, 6);
    const TrainReport b = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 5, 6);
    TrainOptions threaded;
    threaded.workers = 3;
    const TrainReport c = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 5, 6, threaded);
    EXPECT_EQ(a.final_params(), b.final_params());
    EXPECT_EQ(a.final_params(), c.final_params());
    const TrainReport d = run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 5, 7);
    EXPECT_FALSE(a.final_params() == d.final_params());
}

TEST(RunTraining, TokenRecordsCoverEveryExplorationToken) {
    StagePlan p;
    p.ordering = Ordering::ExploreThenCompress;
    p.steps_stage1 = 2;
    p.steps_stage2 = 0;
    p.groups_per_step = 8;
    TrainOptions opt;
    opt.collect_token_records = true;
    std::vector<std::size_t> counts;
    std::vector<double> lengths;
    opt.on_step = [&](const StepRecord& r, std::span<const TokenGradRecord> recs) {
        counts.push_back(recs.size());
        lengths.push_back(r.mean_length * 64);
    };
    run_training(p, kEnv, RewardConfig{}, PolicyInit{}, 1, 2, opt);
    ASSERT_EQ(counts.size(), 2u);
    for (std::size_t i = 0; i < counts.size(); ++i) EXPECT_NEAR(static_cast<double>(counts[i]), lengths[i], 1e-6);
}

// Five seeds of the default two-stage run.
class MeasuredRuns : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
            reports().push_back(run_training(StagePlan{}, kEnv, RewardConfig{}, PolicyInit{}, seed, mix_seed(seed, 0x7a11)));
    }
    static std::vector<TrainReport>& reports() {
        static std::vector<TrainReport> r;
        return r;
    }
};

TEST_F(MeasuredRuns, CompressionStageShortensCorrectChains) {
    const auto problems = make_problem_set(kEnv, 1000, 999);
    double before = 0.0, after = 0.0;
    for (const auto& r : reports()) {
        before += evaluate_policy(r.checkpoint("initial")->params, problems, 1, 7).mean_correct_length;
        after += evaluate_policy(r.checkpoint("stage1")->params, problems, 1, 7).mean_correct_length;
    }
    EXPECT_LE(after, 0.6 * before);
}

TEST_F(MeasuredRuns, EntropyFallsThenRecovers) {
    for (const auto& r : reports()) {
        std::vector<double> s1, s2;
        for (const auto& rec : r.records) (rec.stage == 1 ? s1 : s2).push_back(rec.mean_sequence_entropy);
        const double a = slope(s1), b = slope(s2);
        EXPECT_LT(a, 0.0);
        EXPECT_GE(b, a);
    }
}
