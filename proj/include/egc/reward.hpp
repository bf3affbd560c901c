#pragma once

// Length clipping and shaping for the compression stage, the decomposed
// reward of the exploration stage, and the length-discounted accuracy metric.

#include "egc/env.hpp"
#include "egc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

namespace egc {

enum class ShapingFamily { Exponent, Linear, Cosine };

inline std::string_view to_string(ShapingFamily f) {
    switch (f) {
    case ShapingFamily::Exponent: return "exponent";
    case ShapingFamily::Linear: return "linear";
    case ShapingFamily::Cosine: return "cosine";
    }
    return "exponent";
}

inline ShapingFamily shaping_family_from(std::string_view s) {
    if (s == "exponent") return ShapingFamily::Exponent;
    if (s == "linear") return ShapingFamily::Linear;
    if (s == "cosine") return ShapingFamily::Cosine;
    throw ConfigError("reward.shaping_family", "unknown family '" + std::string(s) + "'");
}

struct RewardConfig {
    int clip_length = 16;          // L, tokens
    double shaping_target = 0.25;  // r = f(L)
    ShapingFamily shaping_family = ShapingFamily::Exponent;
    double beta = 2.0;
    double format_weight = 0.5;
    double answer_weight = 1.0;
    double decay_per_kilotoken = 0.25;

    void validate() const {
        if (clip_length < 1) throw ConfigError("reward.clip_length_L", "must be >= 1");
        if (!(shaping_target > 0.0 && shaping_target < 1.0))
            throw ConfigError("reward.shaping_target_r", "must lie in (0, 1)");
        if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("reward.beta", "must be > 0");
        if (!std::isfinite(format_weight)) throw ConfigError("reward.stage2_format_weight", "must be finite");
        if (!std::isfinite(answer_weight)) throw ConfigError("reward.stage2_answer_weight", "must be finite");
        if (!(decay_per_kilotoken >= 0.0) || !std::isfinite(decay_per_kilotoken))
            throw ConfigError("reward.stage2_decay_per_kilotoken", "must be >= 0");
    }

    double lambda() const { return -std::log(shaping_target) / static_cast<double>(clip_length); }

    bool operator==(const RewardConfig&) const = default;
};

inline double clip_reward(double raw_reward, int length, const Verdict& verdict,
                          const RewardConfig& config) {
    if (length > config.clip_length || verdict.truncated) return 0.0;
    return raw_reward;
}

inline double shape_exponent(double length, const RewardConfig& config) {
    return std::exp(-config.lambda() * length);
}

inline double shape_linear(double length, const RewardConfig& config) {
    const double r = config.shaping_target;
    return std::max(r, 1.0 - (1.0 - r) * length / config.clip_length);
}

inline double shape_cosine(double length, const RewardConfig& config) {
    const double r = config.shaping_target;
    const double x = std::min(length, static_cast<double>(config.clip_length)) / config.clip_length;
    return r + (1.0 - r) * (1.0 + std::cos(std::numbers::pi * x)) / 2.0;
}

inline double shape(double length, const RewardConfig& config) {
    switch (config.shaping_family) {
    case ShapingFamily::Exponent: return shape_exponent(length, config);
    case ShapingFamily::Linear: return shape_linear(length, config);
    case ShapingFamily::Cosine: return shape_cosine(length, config);
    }
    return shape_exponent(length, config);
}

// Compression-stage reward: correctness times the shaping multiplier, clipped.
inline double stage1_reward(const Verdict& verdict, const RewardConfig& config) {
    double raw = verdict.correct ? shape(verdict.length, config) : 0.0;
    return clip_reward(raw, verdict.length, verdict, config);
}

struct RewardBreakdown {
    double r_format = 0.0;
    double r_answer = 0.0;
    double r_length = 0.0;
    double total = 0.0;
    bool clipped = false;
};

inline RewardBreakdown stage2_reward(const Verdict& verdict, int length, const RewardConfig& config) {
    RewardBreakdown b;
    b.r_format = verdict.well_formed ? config.format_weight : 0.0;
    b.r_answer = verdict.correct ? config.answer_weight : 0.0;
    const int excess = std::max(0, length - config.clip_length);
    b.r_length = -config.decay_per_kilotoken * static_cast<double>(excess) / 1000.0;
    b.total = b.r_format + b.r_answer + b.r_length;
    return b;
}

struct LAccResult {
    double value = 0.0;
    bool clamped = false; // mean_length exceeded base_length
};

// Acc * sqrt(1 - L / L_base), in the unit of Acc.
inline LAccResult l_acc(double accuracy, double mean_length, double base_length) {
    if (!(base_length > 0.0)) throw UsageError("l_acc: base_length must be > 0");
    if (mean_length < 0.0) throw UsageError("l_acc: mean_length must be >= 0");
    double inner = 1.0 - mean_length / base_length;
    LAccResult out;
    if (inner < 0.0) {
        inner = 0.0;
        out.clamped = true;
    }
    out.value = accuracy * std::sqrt(inner);
    return out;
}

} // namespace egc
