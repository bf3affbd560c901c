#pragma once

// Checkpoint files, JSONL step logs and CSV tables.

#include "egc/diagnostics.hpp"
#include "egc/env.hpp"
#include "egc/error.hpp"
#include "egc/policy.hpp"
#include "egc/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace egc {

// Header of a checkpoint file disagrees with the environment it is loaded into.
class CheckpointMismatch : public std::runtime_error {
public:
    CheckpointMismatch(std::uint64_t file_hash, std::uint64_t env_hash, const std::string& detail)
        : std::runtime_error("checkpoint header mismatch (" + detail + "): file state-space hash " +
                             hex_u64(file_hash) + ", environment hash " + hex_u64(env_hash)),
          file_hash_(file_hash), env_hash_(env_hash) {}

    std::uint64_t file_hash() const noexcept { return file_hash_; }
    std::uint64_t env_hash() const noexcept { return env_hash_; }

    static std::string hex_u64(std::uint64_t v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

private:
    std::uint64_t file_hash_, env_hash_;
};

// Shortest decimal form that reads back to the same double.
inline std::string fmt_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

inline std::string hex_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

inline constexpr const char* kCheckpointMagic = "egc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Text format: a header of key/value lines, then one line per state row
// with hex-float logits so values round-trip exactly.
inline void write_checkpoint(std::ostream& out, const PolicyParams& params, const std::string& label = "",
                             int step = 0) {
    const StateSpace& s = params.space;
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n'
        << "modulus " << s.modulus() << '\n'
        << "connectors " << s.vocab().connector_count() << '\n'
        << "k_max " << s.k_max() << '\n'
        << "hard_cap " << s.hard_cap() << '\n'
        << "state_space_hash " << CheckpointMismatch::hex_u64(s.hash()) << '\n'
        << "label " << (label.empty() ? "-" : label) << '\n'
        << "step " << step << '\n'
        << "temperature " << hex_double(params.temperature) << '\n'
        << "rows " << params.logits.rows() << " cols " << params.logits.cols() << '\n';
    for (int r = 0; r < params.logits.rows(); ++r) {
        auto row = params.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << hex_double(row[j]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing checkpoint");
}

inline void save_checkpoint(const std::string& path, const PolicyParams& params, const std::string& label = "",
                            int step = 0) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_checkpoint(out, params, label, step);
}

struct CheckpointHeader {
    int modulus = 0, connectors = 0, k_max = 0, hard_cap = 0;
    std::uint64_t hash = 0;
    std::string label;
    int step = 0;
    double temperature = 1.0;
    int rows = 0, cols = 0;
};

namespace detail {

template <class T>
T expect_field(std::istream& in, const char* key) {
    std::string k;
    T v{};
    if (!(in >> k) || k != key || !(in >> v)) throw std::runtime_error(std::string("checkpoint: expected '") + key + "'");
    return v;
}

inline double parse_hex_double(const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw std::runtime_error("checkpoint: bad number '" + tok + "'");
    return v;
}

} // namespace detail

inline CheckpointHeader read_checkpoint_header(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint file");
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    CheckpointHeader h;
    h.modulus = detail::expect_field<int>(in, "modulus");
    h.connectors = detail::expect_field<int>(in, "connectors");
    h.k_max = detail::expect_field<int>(in, "k_max");
    h.hard_cap = detail::expect_field<int>(in, "hard_cap");
    h.hash = std::stoull(detail::expect_field<std::string>(in, "state_space_hash"), nullptr, 16);
    h.label = detail::expect_field<std::string>(in, "label");
    if (h.label == "-") h.label.clear();
    h.step = detail::expect_field<int>(in, "step");
    h.temperature = detail::parse_hex_double(detail::expect_field<std::string>(in, "temperature"));
    h.rows = detail::expect_field<int>(in, "rows");
    h.cols = detail::expect_field<int>(in, "cols");
    return h;
}

// Refuses files whose header does not describe the environment's state space.
inline PolicyParams read_checkpoint(std::istream& in, const EnvConfig& env, CheckpointHeader* header_out = nullptr) {
    const CheckpointHeader h = read_checkpoint_header(in);
    const StateSpace space(env);
    const std::uint64_t want = space.hash();
    if (h.modulus != env.modulus || h.connectors != env.connectors || h.k_max != env.k_max ||
        h.hard_cap != env.hard_cap) {
        std::ostringstream d;
        d << "file m=" << h.modulus << " c=" << h.connectors << " k_max=" << h.k_max << " hard_cap=" << h.hard_cap
          << ", environment m=" << env.modulus << " c=" << env.connectors << " k_max=" << env.k_max
          << " hard_cap=" << env.hard_cap;
        throw CheckpointMismatch(h.hash, want, d.str());
    }
    if (h.hash != want) throw CheckpointMismatch(h.hash, want, "state-space layout differs");
    PolicyParams params(space, h.temperature);
    if (h.rows != params.logits.rows() || h.cols != params.logits.cols())
        throw CheckpointMismatch(h.hash, want, "table shape differs");
    std::string tok;
    for (int r = 0; r < h.rows; ++r) {
        auto row = params.logits.row(r);
        for (int c = 0; c < h.cols; ++c) {
            if (!(in >> tok)) throw std::runtime_error("checkpoint: truncated table");
            const double v = detail::parse_hex_double(tok);
            if (!std::isfinite(v)) throw NumericalError("checkpoint: non-finite logit in " + space.describe(r));
            row[static_cast<std::size_t>(c)] = v;
        }
    }
    if (header_out) *header_out = h;
    return params;
}

inline PolicyParams load_checkpoint(const std::string& path, const EnvConfig& env,
                                    CheckpointHeader* header_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
    return read_checkpoint(in, env, header_out);
}

inline nlohmann::json to_json(const StepRecord& r) {
    auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
    return {{"step", r.step},
            {"stage", r.stage},
            {"phase", std::string(to_string(r.phase))},
            {"temperature", r.temperature},
            {"mean_sequence_entropy", num(r.mean_sequence_entropy)},
            {"mean_token_entropy", num(r.mean_token_entropy)},
            {"mean_length", num(r.mean_length)},
            {"mean_correct_length", num(r.mean_correct_length)},
            {"median_correct_length", num(r.median_correct_length)},
            {"accuracy", num(r.accuracy)},
            {"compression_selected", r.compression_selected},
            {"accuracy_selected", r.accuracy_selected},
            {"positive_samples", r.positive_samples},
            {"mean_reward", num(r.mean_reward)},
            {"grad_norm", num(r.grad_norm)},
            {"connectors_per_trajectory", num(r.connectors_per_trajectory)},
            {"entropy_grad_pearson", num(r.entropy_grad_pearson)},
            {"noop", r.noop}};
}

// One JSON object per line, flushed per record so partial logs survive a failure.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    void write(const nlohmann::json& j) {
        out_ << j.dump() << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::vector<std::string> header) : out_(out), cols_(header.size()) {
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw UsageError("csv: row width differs from header");
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << escape(cells[i]);
        out_ << '\n';
    }

    static std::string escape(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    }

private:
    std::ostream& out_;
    std::size_t cols_;
};

inline std::vector<std::string> eval_csv_header() {
    return {"label", "n_problems", "n_samples", "accuracy", "mean_length", "median_length",
            "mean_correct_length", "mean_productive_steps", "compression_ratio", "connectors_per_trajectory",
            "mean_sequence_entropy", "base_length", "l_acc", "l_acc_clamped"};
}

inline std::vector<std::string> eval_csv_row(const std::string& label, const EvalMetrics& m,
                                             std::optional<double> base_length) {
    std::string base = "", lacc = "", clamped = "";
    if (base_length && m.n_problems > 0) {
        const LAccResult r = l_acc(m.accuracy, m.mean_length, *base_length);
        base = fmt_double(*base_length);
        lacc = fmt_double(r.value);
        clamped = r.clamped ? "1" : "0";
    }
    return {label, std::to_string(m.n_problems), std::to_string(m.n_samples), fmt_double(m.accuracy),
            fmt_double(m.mean_length), fmt_double(m.median_length), fmt_double(m.mean_correct_length),
            fmt_double(m.mean_productive_steps), fmt_double(m.compression_ratio),
            fmt_double(m.connectors_per_trajectory), fmt_double(m.mean_sequence_entropy), base, lacc, clamped};
}

inline std::vector<std::string> step_csv_header() {
    return {"step", "stage", "phase", "temperature", "mean_sequence_entropy", "mean_token_entropy",
            "mean_length", "mean_correct_length", "median_correct_length", "accuracy",
            "compression_selected", "accuracy_selected", "positive_samples", "mean_reward", "grad_norm",
            "connectors_per_trajectory", "entropy_grad_pearson", "noop"};
}

inline std::vector<std::string> step_csv_row(const StepRecord& r) {
    return {std::to_string(r.step), std::to_string(r.stage), std::string(to_string(r.phase)),
            fmt_double(r.temperature), fmt_double(r.mean_sequence_entropy), fmt_double(r.mean_token_entropy),
            fmt_double(r.mean_length), fmt_double(r.mean_correct_length), fmt_double(r.median_correct_length),
            fmt_double(r.accuracy), std::to_string(r.compression_selected), std::to_string(r.accuracy_selected),
            std::to_string(r.positive_samples), fmt_double(r.mean_reward), fmt_double(r.grad_norm),
            fmt_double(r.connectors_per_trajectory), fmt_double(r.entropy_grad_pearson), r.noop ? "1" : "0"};
}

inline void write_connector_csv(std::ostream& out, std::span<const TokenStat> table) {
    CsvWriter w(out, {"token", "name", "connector", "count", "per_trajectory", "mean_entropy"});
    for (const auto& t : table)
        w.row({std::to_string(t.token), t.name, t.connector ? "1" : "0", std::to_string(t.count),
               fmt_double(t.per_trajectory), fmt_double(t.mean_entropy)});
}

// Four group rows followed by a totals row.
inline void write_transition_csv(std::ostream& out, const TransitionGroups& g) {
    CsvWriter w(out, {"group", "count", "mean_length_before", "mean_length_after", "median_length_before",
                      "median_length_after", "mean_steps_before", "mean_steps_after"});
    auto emit = [&](const std::string& name, const std::vector<TransitionEntry>& xs) {
        double lb = 0, la = 0, sb = 0, sa = 0;
        for (const auto& e : xs) {
            lb += e.length_before;
            la += e.length_after;
            sb += e.steps_before;
            sa += e.steps_after;
        }
        const double n = xs.empty() ? 1.0 : static_cast<double>(xs.size());
        w.row({name, std::to_string(xs.size()), fmt_double(lb / n), fmt_double(la / n),
               fmt_double(median_length_before(xs)), fmt_double(median_length_after(xs)), fmt_double(sb / n),
               fmt_double(sa / n)});
    };
    emit("preserved", g.preserved);
    emit("lost", g.lost);
    emit("gained", g.gained);
    emit("failed", g.failed);
    std::vector<TransitionEntry> all;
    for (const auto* xs : {&g.preserved, &g.lost, &g.gained, &g.failed}) all.insert(all.end(), xs->begin(), xs->end());
    emit("total", all);
}

// Problems as JSONL for audit.
inline void write_problems_jsonl(std::ostream& out, std::span<const Problem> problems) {
    for (const auto& p : problems)
        out << nlohmann::json{{"operands", p.operands}, {"modulus", p.modulus}, {"target", p.target}, {"seed", p.seed}, {"slip", p.slip}}
                   .dump()
            << '\n';
}

} // namespace egc
