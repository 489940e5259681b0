#include "wmc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace wmc {

namespace {

double finite_loss(const LossFunction& loss, bool accumulate) {
    const double v = loss(accumulate);
    if (!std::isfinite(v)) throw NumericError("gradcheck: loss evaluated to a non-finite value");
    return v;
}

}  // namespace

GradcheckResult gradcheck(const LossFunction& loss, std::span<Parameter* const> params, double step) {
    for (Parameter* p : params) p->zero_grad();
    finite_loss(loss, true);

    GradcheckResult result;
    for (Parameter* p : params) {
        const Vector analytic = p->grad.data();
        require_finite(analytic, "gradcheck analytic gradient of " + p->name);
        Vector& values = p->value.data();
        for (Index k = 0; k < values.size(); ++k) {
            const double saved = values[k];
            values[k] = saved + step;
            const double up = finite_loss(loss, false);
            values[k] = saved - step;
            const double down = finite_loss(loss, false);
            values[k] = saved;

            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
            const double err = std::abs(analytic[k] - numeric) / denom;
            ++result.entries_checked;
            if (result.worst_index < 0 || err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_parameter = p->name;
                result.worst_index = k;
            }
        }
    }
    return result;
}

}  // namespace wmc
