#pragma once

#include <stdexcept>
#include <string>

namespace makeitso {

// Caller broke a documented precondition (shape mismatch, bad range, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Two parameter snapshots do not share an architecture hash.
class IncompatibleArchitecture : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed checkpoint, bank, report or manifest file. `field` names the
// offending JSON path when one is known.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what, std::string field = {})
        : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ContractViolation(message);
}

}  // namespace makeitso
