#pragma once

#include <stdexcept>
#include <string>

namespace mcm {

// Error taxonomy used across the library. CLI maps these to exit codes.
struct ParameterError : std::invalid_argument {
    explicit ParameterError(const std::string& msg) : std::invalid_argument(msg) {}
};

struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Raised when inverting the forward process at a step where alpha_t is
// (numerically) zero. Callers are expected to use the consistency function
// or the guarded solver path instead.
struct SingularStepError : std::domain_error {
    explicit SingularStepError(const std::string& msg) : std::domain_error(msg) {}
};

// Training loss became non-finite. The training loops invoke their
// checkpoint callback with the last finite state before throwing this.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& msg, long step_) : std::runtime_error(msg), step(step_) {}
    long step;
};

struct UndefinedMotionError : std::domain_error {
    explicit UndefinedMotionError(const std::string& msg) : std::domain_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mcm
