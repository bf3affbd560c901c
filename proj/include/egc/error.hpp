#pragma once

#include <stdexcept>
#include <string>

namespace egc {

// Invalid configuration value; `field` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)), reason_(what) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string field_;
    std::string reason_;
};

// Caller violated an operation's precondition.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Non-finite value detected during an update.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace egc
