#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmc/tensor.hpp"

namespace wmc {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckRow {
    std::string module;
    std::string layer;
    double max_relative_error = 0.0;
    std::string worst_parameter;
    Index entries = 0;
    double seconds = 0.0;
    bool passed = false;
};

/// Module names accepted by run_gradient_suite besides "all".
const std::vector<std::string>& gradient_suite_modules();

/// Finite-difference checks over seeded random small instances of each layer.
/// Throws ConfigError for an unknown scope.
std::vector<GradcheckRow> run_gradient_suite(const std::string& scope, std::uint64_t seed = 2024,
                                             double tolerance = kGradcheckTolerance);

}  // namespace wmc
