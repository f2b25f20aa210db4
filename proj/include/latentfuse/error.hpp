#pragma once

#include <stdexcept>
#include <string>

namespace latentfuse {

// Base class for all engine errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or precondition violation detected before any compute.
// The CLI maps this to exit code 1.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Mismatched array shapes between operands.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Index (timestep, frame, ...) outside its valid range.
struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error(msg) {}
};

// Condition label not present in the world.
struct UnknownClassError : Error {
    explicit UnknownClassError(const std::string& msg) : Error(msg) {}
};

// Training diverged; carries the offending step.
struct TrainingError : Error {
    long step;
    TrainingError(const std::string& msg, long step_) : Error(msg), step(step_) {}
};

// Numerical failure (non-finite gradient, optimizer unable to descend).
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace latentfuse
