#pragma once

#include <stdexcept>
#include <string>

namespace dcrm {

// Inputs with inconsistent vector lengths / factor counts.
struct dimension_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad argument values (empty sample sets, nonpositive rates, ...).
struct input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A raw-mode drift field broke the metric bound |beta| < 1.
struct constraint_violation : std::runtime_error {
    double norm;
    explicit constraint_violation(double n)
        : std::runtime_error("drift field norm " + std::to_string(n) +
                             " breaks the |beta| < 1 bound"),
          norm(n) {}
};

// Sigma projection requested for a factor whose position block is zero.
struct projection_undefined : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Integration produced a non-finite state.
struct numeric_overflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Internal-time step requested past the end of the schedule.
struct schedule_exhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All sampled pairs were coincident; no Lipschitz ratio measurable.
struct estimation_failed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Too few usable points for an exponent fit.
struct fit_degenerate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config file problems; carries the offending key when known.
struct config_error : std::runtime_error {
    std::string key;
    config_error(std::string k, const std::string& msg)
        : std::runtime_error(msg), key(std::move(k)) {}
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dcrm
