// egc: run experiments, evaluate checkpoints and compare two checkpoints.

#include "egc/config.hpp"
#include "egc/diagnostics.hpp"
#include "egc/experiment.hpp"
#include "egc/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr const char* kOutputRootEnv = "EGC_OUTPUT_ROOT";

std::string default_output_root() {
    const char* v = std::getenv(kOutputRootEnv);
    return v && *v ? v : "runs";
}

struct ConfigSource {
    std::string config_path;
    std::string preset;

    egc::ExperimentConfig load() const {
        if (!config_path.empty()) {
            egc::ExperimentConfig cfg = egc::load_config(config_path);
            if (!preset.empty()) {
                // A preset override keeps the file's environment and seeds.
                egc::ExperimentConfig p = egc::make_preset(preset);
                p.env = cfg.env;
                p.seeds = cfg.seeds;
                return p;
            }
            return cfg;
        }
        return egc::make_preset(preset.empty() ? "main" : preset);
    }
};

void add_source(CLI::App* cmd, ConfigSource& src) {
    cmd->add_option("-c,--config", src.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("-p,--preset", src.preset, "named preset")
        ->check(CLI::IsMember(egc::preset_names()));
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entropy-guided two-stage reasoning compression lab"};
    app.require_subcommand(1);
    int verbosity = 1;
    app.add_flag("-v,--verbose", verbosity, "more progress output (repeatable)");
    app.add_flag_callback("-q,--quiet", [&] { verbosity = 0; }, "no progress output");

    ConfigSource run_src;
    std::optional<std::uint64_t> seed;
    std::string out_root = default_output_root();
    int workers = 1;
    auto* run = app.add_subcommand("run", "train an experiment and write its artifacts");
    add_source(run, run_src);
    run->add_option("-s,--seed", seed, "run this single seed instead of the config's list");
    run->add_option("-o,--output", out_root, std::string("output root (default $") + kOutputRootEnv + " or ./runs)");
    run->add_option("-w,--workers", workers, "rollout worker threads")->check(CLI::PositiveNumber);

    ConfigSource eval_src;
    std::string ckpt;
    int n_problems = 2000, n_samples = 1;
    std::optional<double> base_length;
    std::uint64_t problem_seed = 999, sample_seed = 7;
    std::string eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint and write a metrics CSV");
    add_source(evaluate, eval_src);
    evaluate->add_option("checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("-n,--problems", n_problems, "number of evaluation problems")->check(CLI::NonNegativeNumber);
    evaluate->add_option("-k,--samples", n_samples, "samples per problem")->check(CLI::PositiveNumber);
    evaluate->add_option("-b,--base-length", base_length, "baseline mean length for L-Acc");
    evaluate->add_option("--problem-seed", problem_seed, "problem-set seed");
    evaluate->add_option("--sample-seed", sample_seed, "sampling seed");
    evaluate->add_option("-o,--output", eval_out, "CSV path (default stdout)");

    ConfigSource cmp_src;
    std::string ckpt_a, ckpt_b, cmp_out;
    int cmp_problems = 500, cmp_samples = 16;
    auto* compare = app.add_subcommand("compare", "correctness transitions between two checkpoints");
    add_source(compare, cmp_src);
    compare->add_option("before", ckpt_a, "checkpoint before")->required()->check(CLI::ExistingFile);
    compare->add_option("after", ckpt_b, "checkpoint after")->required()->check(CLI::ExistingFile);
    compare->add_option("-n,--problems", cmp_problems, "number of problems")->check(CLI::NonNegativeNumber);
    compare->add_option("-k,--samples", cmp_samples, "samples per problem for the majority vote")
        ->check(CLI::PositiveNumber);
    compare->add_option("--problem-seed", problem_seed, "problem-set seed");
    compare->add_option("--sample-seed", sample_seed, "sampling seed");
    compare->add_option("-o,--output", cmp_out, "CSV path (default stdout)");

    std::string dump_name;
    auto* presets = app.add_subcommand("preset", "print a preset as a config file");
    presets->add_option("name", dump_name, "preset name")->required()->check(CLI::IsMember(egc::preset_names()));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            egc::ExperimentConfig cfg = run_src.load();
            if (seed) cfg.seeds = {*seed};
            egc::validate(cfg);
            egc::RunSettings settings;
            settings.workers = workers;
            settings.verbosity = verbosity;
            settings.log = [](const std::string& s) { std::cerr << s << '\n'; };
            const auto result = egc::run_experiment(cfg, out_root, settings);
            if (verbosity >= 1) std::cerr << "wrote " << result.directory.string() << '\n';
        } else if (*evaluate) {
            const egc::ExperimentConfig cfg = eval_src.load();
            const egc::PolicyParams policy = egc::load_checkpoint(ckpt, cfg.env);
            const auto problems = egc::make_problem_set(cfg.env, n_problems, problem_seed);
            const egc::EvalMetrics m = egc::evaluate_policy(policy, problems, n_samples, sample_seed);
            auto write = [&](std::ostream& os) {
                egc::CsvWriter w(os, egc::eval_csv_header());
                if (n_problems > 0) w.row(egc::eval_csv_row(ckpt, m, base_length));
            };
            if (eval_out.empty()) write(std::cout);
            else {
                auto out = open_out(eval_out);
                write(out);
            }
        } else if (*compare) {
            const egc::ExperimentConfig cfg = cmp_src.load();
            const egc::PolicyParams a = egc::load_checkpoint(ckpt_a, cfg.env);
            const egc::PolicyParams b = egc::load_checkpoint(ckpt_b, cfg.env);
            const auto problems = egc::make_problem_set(cfg.env, cmp_problems, problem_seed);
            const auto groups = egc::transition_groups(a, b, problems, cmp_samples, sample_seed);
            if (cmp_out.empty()) egc::write_transition_csv(std::cout, groups);
            else {
                auto out = open_out(cmp_out);
                egc::write_transition_csv(out, groups);
            }
        } else if (*presets) {
            std::cout << egc::serialize_config(egc::make_preset(dump_name));
        }
    } catch (const egc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const egc::CheckpointMismatch& e) {
        std::cerr << "refusing checkpoint: " << e.what() << '\n';
        return 3;
    } catch (const egc::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
