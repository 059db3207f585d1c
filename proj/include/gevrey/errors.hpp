#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace gevrey {

/// Short %g rendering for messages; std::to_string prints 1e-14 as 0.000000.
inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Iterative solver gave up; carries the last residual norm it saw.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, double last_residual)
        : std::runtime_error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

/// A caller broke an operation's precondition (e.g. a derivative table
/// is missing a lower-order entry).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or inadmissible user input (configs, nonlinearities, data).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace gevrey
