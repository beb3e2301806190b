#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vac/tensor.hpp"

namespace vac {

// Finite-difference validation of an analytic gradient. `loss` maps the
// flattened variable vector to a scalar; `analytic` is the gradient claimed by
// backprop at `x`. Central differences with step h, relative error per
// component:  |a - n| / max(|a|, |n|, floor).
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;

    bool ok(double tol) const { return max_rel_err <= tol; }
};

template <class S>
GradCheckResult grad_check(const std::function<double(const std::vector<S>&)>& loss,
                           std::vector<S> x, const std::vector<S>& analytic,
                           double h = 1e-5, double floor_ = 1e-8) {
    GradCheckResult r;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const S keep = x[i];
        x[i] = keep + S(h);
        const double fp = loss(x);
        x[i] = keep - S(h);
        const double fm = loss(x);
        x[i] = keep;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = double(analytic[i]);
        const double scale = std::max({std::abs(a), std::abs(numeric), floor_});
        const double rel = std::abs(a - numeric) / scale;
        if (rel >= r.max_rel_err) {
            r.max_rel_err = rel;
            r.worst_index = i;
            r.analytic_at_worst = a;
            r.numeric_at_worst = numeric;
        }
    }
    return r;
}

} // namespace vac
