#pragma once

#include "dragsplat/ad.hpp"

#include <cmath>
#include <functional>

namespace dragsplat::testing {

// Central finite differences of a scalar-valued graph builder with respect to
// one parameter tensor. Rebuilds the graph per probe.
inline Tensor numeric_grad(const std::function<ad::Var()>& build, const ad::Var& p,
                           double step = 1e-6) {
    Tensor g(p->val.shape);
    for (long i = 0; i < p->val.numel(); ++i) {
        double saved = p->val.d[i];
        p->val.d[i] = saved + step;
        double hi = build()->val.d[0];
        p->val.d[i] = saved - step;
        double lo = build()->val.d[0];
        p->val.d[i] = saved;
        g.d[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

// Relative error with a floor so that near-zero gradients compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-6) {
    double m = 0;
    for (long i = 0; i < a.numel(); ++i) m = std::max(m, rel_err(a.d[i], b.d[i], floor));
    return m;
}

}  // namespace dragsplat::testing
