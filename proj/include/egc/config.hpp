#pragma once

// Declarative experiment configs (JSON) and the named presets.

#include "egc/diagnostics.hpp"
#include "egc/env.hpp"
#include "egc/error.hpp"
#include "egc/policy.hpp"
#include "egc/reward.hpp"
#include "egc/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace egc {

using json = nlohmann::json;

enum class ExperimentKind { Train, EntropyProbe };

inline std::string_view to_string(ExperimentKind k) {
    return k == ExperimentKind::Train ? "train" : "entropy_probe";
}

struct EvalSettings {
    int n_problems = 2000;
    int n_samples = 1;
    std::uint64_t problem_seed = 999;
    std::uint64_t sample_seed = 7;
    int transition_samples = 16;
    int transition_problems = 500;

    bool operator==(const EvalSettings&) const = default;
};

// A named run inside an experiment. `reward` and `plan` are partial objects
// merged onto the experiment's base blocks.
struct Variant {
    std::string name;
    json reward = json::object();
    json plan = json::object();

    bool operator==(const Variant&) const = default;
};

struct ExperimentConfig {
    std::optional<std::string> preset;
    ExperimentKind kind = ExperimentKind::Train;
    EnvConfig env;
    RewardConfig reward;
    StagePlan plan;
    PolicyInit init;
    std::vector<Variant> variants;   // empty means a single run named "default"
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "main";
    EvalSettings eval;
    ProbeBudget probe;

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// Reads one block and rejects unknown keys, naming every field it touches.
class BlockReader {
public:
    BlockReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_, "must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(join(prefix_, key), "has the wrong type");
        }
    }

    template <class T>
    void get_optional(const char* key, std::optional<T>& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(join(prefix_, key), "has the wrong type");
        }
    }

    const json* sub(const char* key) {
        seen_.push_back(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string field(const char* key) const { return join(prefix_, key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw ConfigError(join(prefix_, it.key()), "unknown field");
    }

private:
    const json& j_;
    std::string prefix_;
    std::vector<std::string> seen_;
};

} // namespace detail

inline json to_json(const EnvConfig& e) {
    return {{"modulus", e.modulus}, {"connectors", e.connectors}, {"k_max", e.k_max},
            {"hard_cap", e.hard_cap}, {"seed", e.seed}, {"slip_rate", e.slip_rate}};
}

inline EnvConfig env_from_json(const json& j, EnvConfig e = {}) {
    detail::BlockReader r(j, "env");
    r.get("modulus", e.modulus);
    r.get("connectors", e.connectors);
    r.get("k_max", e.k_max);
    r.get("hard_cap", e.hard_cap);
    r.get("seed", e.seed);
    r.get("slip_rate", e.slip_rate);
    r.finish();
    return e;
}

inline json to_json(const RewardConfig& c) {
    return {{"clip_length_L", c.clip_length},
            {"shaping_target_r", c.shaping_target},
            {"shaping_family", std::string(to_string(c.shaping_family))},
            {"beta", c.beta},
            {"stage2_format_weight", c.format_weight},
            {"stage2_answer_weight", c.answer_weight},
            {"stage2_decay_per_kilotoken", c.decay_per_kilotoken}};
}

inline RewardConfig reward_from_json(const json& j, RewardConfig c = {}) {
    detail::BlockReader r(j, "reward");
    r.get("clip_length_L", c.clip_length);
    r.get("shaping_target_r", c.shaping_target);
    std::string family(to_string(c.shaping_family));
    r.get("shaping_family", family);
    c.shaping_family = shaping_family_from(family);
    r.get("beta", c.beta);
    r.get("stage2_format_weight", c.format_weight);
    r.get("stage2_answer_weight", c.answer_weight);
    r.get("stage2_decay_per_kilotoken", c.decay_per_kilotoken);
    r.finish();
    return c;
}

inline json to_json(const StagePlan& p) {
    return {{"ordering", std::string(to_string(p.ordering))},
            {"steps_stage1", p.steps_stage1},
            {"steps_stage2", p.steps_stage2},
            {"temperature_stage1", p.temperature_stage1},
            {"temperature_stage2", p.temperature_stage2},
            {"group_size", p.group_size},
            {"groups_per_step", p.groups_per_step},
            {"learning_rate", p.learning_rate},
            {"epochs", p.epochs},
            {"ratio_clip", p.ratio_clip ? json(*p.ratio_clip) : json(nullptr)},
            {"optimizer", p.optimizer}};
}

inline StagePlan plan_from_json(const json& j, StagePlan p = {}) {
    detail::BlockReader r(j, "plan");
    std::string ordering(to_string(p.ordering));
    r.get("ordering", ordering);
    try {
        p.ordering = ordering_from(ordering);
    } catch (const std::exception&) {
        throw ConfigError("plan.ordering", "unknown ordering '" + ordering + "'");
    }
    r.get("steps_stage1", p.steps_stage1);
    r.get("steps_stage2", p.steps_stage2);
    r.get("temperature_stage1", p.temperature_stage1);
    r.get("temperature_stage2", p.temperature_stage2);
    r.get("group_size", p.group_size);
    r.get("groups_per_step", p.groups_per_step);
    r.get("learning_rate", p.learning_rate);
    r.get("epochs", p.epochs);
    r.get_optional("ratio_clip", p.ratio_clip);
    r.get("optimizer", p.optimizer);
    r.finish();
    return p;
}

inline json to_json(const BasePrior& b) {
    return {{"step_logit", b.step_logit},
            {"connector_logit", b.connector_logit},
            {"connector_repeat", b.connector_repeat},
            {"connector_run", b.connector_run},
            {"early_answer", b.early_answer},
            {"answer_logit", b.answer_logit},
            {"recheck_logit", b.recheck_logit},
            {"step_value", b.step_value},
            {"answer_value", b.answer_value},
            {"eos_after_answer", b.eos_after_answer},
            {"unlikely", b.unlikely},
            {"noise", b.noise}};
}

inline BasePrior prior_from_json(const json& j, BasePrior b = {}) {
    detail::BlockReader r(j, "init.prior");
    r.get("step_logit", b.step_logit);
    r.get("connector_logit", b.connector_logit);
    r.get("connector_repeat", b.connector_repeat);
    r.get("connector_run", b.connector_run);
    r.get("early_answer", b.early_answer);
    r.get("answer_logit", b.answer_logit);
    r.get("recheck_logit", b.recheck_logit);
    r.get("step_value", b.step_value);
    r.get("answer_value", b.answer_value);
    r.get("eos_after_answer", b.eos_after_answer);
    r.get("unlikely", b.unlikely);
    r.get("noise", b.noise);
    r.finish();
    if (!(b.noise >= 0.0)) throw ConfigError("init.prior.noise", "must be >= 0");
    return b;
}

inline json to_json(const PolicyInit& p) {
    return {{"kind", p.kind == InitKind::Base ? "base" : "uniform"}, {"prior", to_json(p.prior)}};
}

inline PolicyInit init_from_json(const json& j) {
    PolicyInit p;
    detail::BlockReader r(j, "init");
    std::string kind = "base";
    r.get("kind", kind);
    if (kind == "base") p.kind = InitKind::Base;
    else if (kind == "uniform") p.kind = InitKind::Uniform;
    else throw ConfigError("init.kind", "must be 'base' or 'uniform'");
    if (const json* prior = r.sub("prior")) p.prior = prior_from_json(*prior);
    r.finish();
    return p;
}

inline json to_json(const EvalSettings& e) {
    return {{"n_problems", e.n_problems},
            {"n_samples", e.n_samples},
            {"problem_seed", e.problem_seed},
            {"sample_seed", e.sample_seed},
            {"transition_samples", e.transition_samples},
            {"transition_problems", e.transition_problems}};
}

inline EvalSettings eval_from_json(const json& j) {
    EvalSettings e;
    detail::BlockReader r(j, "eval");
    r.get("n_problems", e.n_problems);
    r.get("n_samples", e.n_samples);
    r.get("problem_seed", e.problem_seed);
    r.get("sample_seed", e.sample_seed);
    r.get("transition_samples", e.transition_samples);
    r.get("transition_problems", e.transition_problems);
    r.finish();
    if (e.n_problems < 0) throw ConfigError("eval.n_problems", "must be >= 0");
    if (e.n_samples < 1) throw ConfigError("eval.n_samples", "must be >= 1");
    if (e.transition_samples < 1) throw ConfigError("eval.transition_samples", "must be >= 1");
    if (e.transition_problems < 0) throw ConfigError("eval.transition_problems", "must be >= 0");
    return e;
}

inline json to_json(const ProbeBudget& b) {
    return {{"steps", b.steps},
            {"groups_per_step", b.groups_per_step},
            {"group_size", b.group_size},
            {"learning_rate", b.learning_rate},
            {"temperature", b.temperature},
            {"entropy_rollouts", b.entropy_rollouts}};
}

inline ProbeBudget probe_from_json(const json& j) {
    ProbeBudget b;
    detail::BlockReader r(j, "probe");
    r.get("steps", b.steps);
    r.get("groups_per_step", b.groups_per_step);
    r.get("group_size", b.group_size);
    r.get("learning_rate", b.learning_rate);
    r.get("temperature", b.temperature);
    r.get("entropy_rollouts", b.entropy_rollouts);
    r.finish();
    if (b.steps < 0) throw ConfigError("probe.steps", "must be >= 0");
    if (b.groups_per_step < 1) throw ConfigError("probe.groups_per_step", "must be >= 1");
    if (b.group_size < 1) throw ConfigError("probe.group_size", "must be >= 1");
    if (!(b.learning_rate >= 0.0)) throw ConfigError("probe.learning_rate", "must be >= 0");
    if (!(b.temperature > 0.0)) throw ConfigError("probe.temperature", "must be > 0");
    if (b.entropy_rollouts < 1) throw ConfigError("probe.entropy_rollouts", "must be >= 1");
    return b;
}

inline RewardConfig variant_reward(const ExperimentConfig& cfg, const Variant& v) {
    json base = to_json(cfg.reward);
    base.merge_patch(v.reward);
    return reward_from_json(base);
}

inline StagePlan variant_plan(const ExperimentConfig& cfg, const Variant& v) {
    json base = to_json(cfg.plan);
    base.merge_patch(v.plan);
    return plan_from_json(base);
}

inline std::vector<Variant> effective_variants(const ExperimentConfig& cfg) {
    if (!cfg.variants.empty()) return cfg.variants;
    return {Variant{"default", json::object(), json::object()}};
}

// Checks every block, including each variant's merged reward and plan.
inline void validate(const ExperimentConfig& cfg) {
    cfg.env.validate();
    cfg.reward.validate();
    cfg.plan.validate();
    if (cfg.seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
    if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
    std::vector<std::string> names;
    for (const auto& v : effective_variants(cfg)) {
        if (v.name.empty()) throw ConfigError("variants.name", "must not be empty");
        if (std::find(names.begin(), names.end(), v.name) != names.end())
            throw ConfigError("variants.name", "duplicate variant '" + v.name + "'");
        names.push_back(v.name);
        try {
            variant_reward(cfg, v).validate();
            variant_plan(cfg, v).validate();
        } catch (const ConfigError& e) {
            throw ConfigError("variants[" + v.name + "]." + e.field(), e.reason());
        }
    }
}

inline json to_json(const ExperimentConfig& cfg) {
    json variants = json::array();
    for (const auto& v : cfg.variants) variants.push_back({{"name", v.name}, {"reward", v.reward}, {"plan", v.plan}});
    return {{"preset", cfg.preset ? json(*cfg.preset) : json(nullptr)},
            {"kind", std::string(to_string(cfg.kind))},
            {"env", to_json(cfg.env)},
            {"reward", to_json(cfg.reward)},
            {"plan", to_json(cfg.plan)},
            {"init", to_json(cfg.init)},
            {"variants", variants},
            {"seeds", cfg.seeds},
            {"output_dir", cfg.output_dir},
            {"eval", to_json(cfg.eval)},
            {"probe", to_json(cfg.probe)}};
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    detail::BlockReader r(j, "");
    r.get_optional("preset", cfg.preset);
    std::string kind = "train";
    r.get("kind", kind);
    if (kind == "train") cfg.kind = ExperimentKind::Train;
    else if (kind == "entropy_probe") cfg.kind = ExperimentKind::EntropyProbe;
    else throw ConfigError("kind", "must be 'train' or 'entropy_probe'");
    if (const json* e = r.sub("env")) cfg.env = env_from_json(*e);
    if (const json* e = r.sub("reward")) cfg.reward = reward_from_json(*e);
    if (const json* e = r.sub("plan")) cfg.plan = plan_from_json(*e);
    if (const json* e = r.sub("init")) cfg.init = init_from_json(*e);
    if (const json* e = r.sub("variants")) {
        if (!e->is_array()) throw ConfigError("variants", "must be an array");
        for (const auto& item : *e) {
            detail::BlockReader vr(item, "variants");
            Variant v;
            vr.get("name", v.name);
            if (const json* x = vr.sub("reward")) v.reward = *x;
            if (const json* x = vr.sub("plan")) v.plan = *x;
            vr.finish();
            if (!v.reward.is_object()) throw ConfigError("variants.reward", "must be an object");
            if (!v.plan.is_object()) throw ConfigError("variants.plan", "must be an object");
            cfg.variants.push_back(std::move(v));
        }
    }
    r.get("seeds", cfg.seeds);
    r.get("output_dir", cfg.output_dir);
    if (const json* e = r.sub("eval")) cfg.eval = eval_from_json(*e);
    if (const json* e = r.sub("probe")) cfg.probe = probe_from_json(*e);
    r.finish();
    validate(cfg);
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// FNV-1a of the compact serialisation.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string s = to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::vector<std::string> preset_names() {
    return {"main", "entangled", "ablation-order", "ablation-clip", "ablation-shaping", "entropy-probe"};
}

inline ExperimentConfig make_preset(const std::string& name) {
    ExperimentConfig cfg;
    cfg.preset = name;
    cfg.output_dir = name;
    cfg.seeds = {1, 2, 3, 4, 5};
    if (name == "main") {
        cfg.variants = {{"compress_then_explore", json::object(), json::object()}};
    } else if (name == "entangled") {
        cfg.variants = {{"entangled", json::object(), {{"ordering", "entangled"}}}};
    } else if (name == "ablation-order") {
        cfg.variants = {
            {"compress_then_explore", json::object(), json::object()},
            {"explore_then_compress", json::object(), {{"ordering", "explore_then_compress"}}},
            {"entangled", json::object(), {{"ordering", "entangled"}}},
        };
    } else if (name == "ablation-clip") {
        cfg.env.hard_cap = 256;
        cfg.variants = {
            {"L32", {{"clip_length_L", 32}}, json::object()},
            {"L64", {{"clip_length_L", 64}}, json::object()},
            {"L128", {{"clip_length_L", 128}}, json::object()},
        };
    } else if (name == "ablation-shaping") {
        cfg.variants = {
            {"exponent", {{"shaping_family", "exponent"}}, json::object()},
            {"linear", {{"shaping_family", "linear"}}, json::object()},
            {"cosine", {{"shaping_family", "cosine"}}, json::object()},
        };
    } else if (name == "entropy-probe") {
        cfg.kind = ExperimentKind::EntropyProbe;
    } else {
        throw ConfigError("preset", "unknown preset '" + name + "'");
    }
    validate(cfg);
    return cfg;
}

} // namespace egc
