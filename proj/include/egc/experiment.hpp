#pragma once

// Runs an ExperimentConfig end to end and writes its artifacts.

#include "egc/config.hpp"
#include "egc/diagnostics.hpp"
#include "egc/io.hpp"
#include "egc/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace egc {

namespace fs = std::filesystem;

struct RunSettings {
    int workers = 1;
    int verbosity = 0; // 0 quiet, 1 per-run lines, 2 every 50 steps
    std::function<void(const std::string&)> log = [](const std::string&) {};
};

struct ExperimentResult {
    fs::path directory;
    std::vector<std::string> files; // relative to directory
};

inline std::vector<Trajectory> sample_eval_trajectories(const PolicyParams& policy, std::span<const Problem> problems,
                                                        std::uint64_t seed) {
    PolicyParams params = policy;
    params.temperature = 1.0;
    std::vector<Trajectory> out;
    out.reserve(problems.size());
    for (std::size_t p = 0; p < problems.size(); ++p) {
        Rng rng(mix_seed(seed, p));
        out.push_back(sample(params, problems[p], rng));
    }
    return out;
}

namespace detail {

class ArtifactDir {
public:
    explicit ArtifactDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    std::ofstream open(const std::string& rel) {
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p);
        if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
        track(rel);
        return out;
    }

    std::string path(const std::string& rel) {
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        track(rel);
        return p.string();
    }

    const fs::path& root() const { return root_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    void track(const std::string& rel) {
        if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
    }
    fs::path root_;
    std::vector<std::string> files_;
};

inline void write_manifest(ArtifactDir& dir, const ExperimentConfig& cfg, const std::string& status) {
    std::vector<std::string> files = dir.files();
    files.push_back("manifest.json");
    const nlohmann::json manifest{{"format", "egc-manifest-1"},
                                  {"status", status},
                                  {"config_hash", CheckpointMismatch::hex_u64(config_hash(cfg))},
                                  {"preset", cfg.preset ? nlohmann::json(*cfg.preset) : nlohmann::json(nullptr)},
                                  {"seeds", cfg.seeds},
                                  {"config_file", "config.json"},
                                  {"files", files}};
    std::ofstream out(dir.root() / "manifest.json");
    out << manifest.dump(2) << '\n';
}

inline void run_probe(ArtifactDir& dir, const ExperimentConfig& cfg, const RunSettings& settings) {
    ProbeBudget budget = cfg.probe;
    budget.workers = settings.workers;
    const RewardConfig reward = cfg.reward;
    const EntropyProbe probe = entropy_conflict_probe(cfg.env, cfg.init, ProbeObjective::accuracy(reward),
                                                      ProbeObjective::accuracy_and_compression(reward), budget,
                                                      cfg.seeds);
    {
        auto out = dir.open("probe_seeds.csv");
        CsvWriter w(out, {"seed", "H_acc_only", "H_acc_and_comp"});
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            w.row({std::to_string(cfg.seeds[i]), fmt_double(probe.per_seed_acc_only[i]),
                   fmt_double(probe.per_seed_acc_and_comp[i])});
    }
    auto out = dir.open("summary.csv");
    CsvWriter w(out, {"quantity", "mean", "std_error", "n"});
    w.row({"H_acc_only", fmt_double(probe.H_acc_only.mean), fmt_double(probe.H_acc_only.std_error),
           std::to_string(probe.H_acc_only.n)});
    w.row({"H_acc_and_comp", fmt_double(probe.H_acc_and_comp.mean), fmt_double(probe.H_acc_and_comp.std_error),
           std::to_string(probe.H_acc_and_comp.n)});
    settings.log("entropy probe: H(acc) = " + fmt_double(probe.H_acc_only.mean) +
                 ", H(acc, comp) = " + fmt_double(probe.H_acc_and_comp.mean));
}

} // namespace detail

// Writes, under root/output_dir: config.json, manifest.json, summary.csv and
// one directory per (variant, seed) holding the step log, checkpoints,
// per-checkpoint evaluation, connector table and transition groups.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& root,
                                       const RunSettings& settings = {}) {
    validate(cfg);
    detail::ArtifactDir dir(root / cfg.output_dir);
    {
        auto out = dir.open("config.json");
        out << serialize_config(cfg);
    }
    detail::write_manifest(dir, cfg, "running");
    try {
        if (cfg.kind == ExperimentKind::EntropyProbe) {
            detail::run_probe(dir, cfg, settings);
        } else {
            const std::vector<Problem> problems = make_problem_set(cfg.env, cfg.eval.n_problems, cfg.eval.problem_seed);
            {
                auto out = dir.open("problems.jsonl");
                write_problems_jsonl(out, problems);
            }
            std::vector<std::string> header = {"variant", "seed", "checkpoint", "step"};
            for (auto& h : eval_csv_header())
                if (h != "label") header.push_back(h);
            std::ostringstream summary;
            CsvWriter sw(summary, header);
            for (const Variant& v : effective_variants(cfg)) {
                const RewardConfig reward = variant_reward(cfg, v);
                const StagePlan plan = variant_plan(cfg, v);
                for (std::uint64_t seed : cfg.seeds) {
                    const std::string base = v.name + "/seed-" + std::to_string(seed) + "/";
                    JsonlWriter jsonl(dir.path(base + "steps.jsonl"));
                    auto steps_out = dir.open(base + "steps.csv");
                    CsvWriter steps(steps_out, step_csv_header());
                    TrainOptions opt;
                    opt.workers = settings.workers;
                    opt.collect_token_records = true;
                    opt.on_step = [&](const StepRecord& r, std::span<const TokenGradRecord>) {
                        jsonl.write(to_json(r));
                        steps.row(step_csv_row(r));
                        steps_out.flush();
                        if (settings.verbosity >= 2 && r.step % 50 == 0)
                            settings.log(v.name + " seed " + std::to_string(seed) + " step " + std::to_string(r.step) +
                                         " acc " + fmt_double(r.accuracy) + " len " + fmt_double(r.mean_length));
                    };
                    const TrainReport report =
                        run_training(plan, cfg.env, reward, cfg.init, seed, mix_seed(seed, 0x7a11), opt);

                    auto eval_out = dir.open(base + "eval.csv");
                    CsvWriter ew(eval_out, eval_csv_header());
                    std::optional<double> base_length;
                    if (!problems.empty())
                        base_length = evaluate_policy(report.checkpoints.front().params, problems, cfg.eval.n_samples,
                                                      cfg.eval.sample_seed)
                                          .mean_length;
                    for (const Checkpoint& c : report.checkpoints) {
                        save_checkpoint(dir.path(base + "ckpt-" + c.label + ".txt"), c.params, c.label, c.step);
                        const EvalMetrics m = evaluate_policy(c.params, problems, cfg.eval.n_samples, cfg.eval.sample_seed);
                        auto row = eval_csv_row(c.label, m, base_length);
                        ew.row(row);
                        row.erase(row.begin());
                        std::vector<std::string> srow = {v.name, std::to_string(seed), c.label, std::to_string(c.step)};
                        srow.insert(srow.end(), row.begin(), row.end());
                        sw.row(srow);
                    }
                    const auto trajectories =
                        sample_eval_trajectories(report.final_params(), problems, cfg.eval.sample_seed);
                    {
                        auto out = dir.open(base + "connectors.csv");
                        write_connector_csv(out, connector_stats(trajectories, Vocabulary(cfg.env)));
                    }
                    {
                        const std::size_t n =
                            std::min<std::size_t>(problems.size(), static_cast<std::size_t>(cfg.eval.transition_problems));
                        const auto groups = transition_groups(report.checkpoints.front().params, report.final_params(),
                                                              std::span<const Problem>(problems).first(n),
                                                              cfg.eval.transition_samples, cfg.eval.sample_seed);
                        auto out = dir.open(base + "transitions.csv");
                        write_transition_csv(out, groups);
                    }
                    if (settings.verbosity >= 1)
                        settings.log("finished " + v.name + " seed " + std::to_string(seed));
                }
            }
            auto out = dir.open("summary.csv");
            out << summary.str();
        }
    } catch (...) {
        detail::write_manifest(dir, cfg, "failed");
        throw;
    }
    detail::write_manifest(dir, cfg, "complete");
    return {dir.root(), dir.files()};
}

} // namespace egc
