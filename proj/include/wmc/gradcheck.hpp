#pragma once

#include <functional>
#include <span>
#include <string>

#include "wmc/tensor.hpp"

namespace wmc {

/// Scalar loss over some parameters. When called with `accumulate_grad` set,
/// the function must also add dL/dθ into every parameter's `grad` tensor.
/// The checker zeroes those buffers before the analytic call.
using LossFunction = std::function<double(bool accumulate_grad)>;

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    Index worst_index = -1;
    Index entries_checked = 0;
};

inline constexpr double kGradcheckStep = 1e-5;

/// Compares analytic gradients against central differences.
///
/// The error for one entry is |g_a - g_n| / max(|g_a|, |g_n|, 1e-8); the result
/// carries the maximum over every entry of every parameter. Throws NumericError
/// if any loss evaluation is non-finite.
GradcheckResult gradcheck(const LossFunction& loss, std::span<Parameter* const> params,
                          double step = kGradcheckStep);

}  // namespace wmc
