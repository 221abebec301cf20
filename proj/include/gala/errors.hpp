#pragma once

#include <stdexcept>
#include <string>

namespace gala {

// Invalid arguments, bad shapes, unusable configs. CLI maps this to exit code 1.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf surfacing, divergence, corrupt checkpoints. CLI maps this to exit code 2.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gala
