#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tetdiff {

// Shape/lattice size disagreement between two arguments.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An object is in the wrong mode for the requested operation
// (e.g. un-normalized SDF where +-1 values are required).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Text input that does not parse; carries the 1-based line number.
struct ParseError : std::runtime_error {
    int line;
    ParseError(const std::string& msg, int line_)
        : std::runtime_error(msg + " (line " + std::to_string(line_) + ")"), line(line_) {}
};

// Binary file with bad magic, version, or truncation.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf encountered mid-computation; `step` is the diffusion/optimizer step when known.
struct NumericError : std::runtime_error {
    int step;
    explicit NumericError(const std::string& msg, int step_ = -1)
        : std::runtime_error(msg), step(step_) {}
};

struct DivergenceError : std::runtime_error {
    std::vector<double> trace;
    DivergenceError(const std::string& msg, std::vector<double> trace_)
        : std::runtime_error(msg), trace(std::move(trace_)) {}
};

// Depth view with no usable hit pixels.
struct VisibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tetdiff
