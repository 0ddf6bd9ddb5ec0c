#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace invagg {

using Vector = std::vector<double>;

/// Model parameters w of the linear model h(x) = w^T x.
using WeightVector = Vector;

/// Per-round client update g = w_{t-1} - w_{t,i}.
using PseudoGradient = Vector;

/// Per-coordinate {0,1} filter.
using MaskVector = std::vector<std::uint8_t>;

struct Sample {
    Vector features;
    int label = 0;
};

using Dataset = std::vector<Sample>;

/// Raised when a configuration value is out of range. `field()` names the
/// offending key using the dotted config path (e.g. "aggregator.tau").
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace invagg
