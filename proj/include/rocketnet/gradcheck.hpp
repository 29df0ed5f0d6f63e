#pragma once

#include <cmath>
#include <functional>

#include "rocketnet/errors.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// Central finite differences: g_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
// The independent oracle every analytic gradient in this library is checked
// against.  Cost is two evaluations of f per entry of x.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-5) {
    if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
    Tensor g(x.rows(), x.cols());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const double up = f(probe);
        probe.data()[i] = orig - h;
        const double down = f(probe);
        probe.data()[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_grad: objective non-finite at probe " +
                               std::to_string(i));
        }
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Worst-case relative disagreement between two gradients, with the
// denominator floored so that near-zero entries compare absolutely.
inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
    if (!a.same_shape(b)) {
        throw DimensionError("max_relative_error: " + a.shape_str() + " vs " + b.shape_str());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double av = a.data()[i], bv = b.data()[i];
        const double denom = std::max({std::fabs(av), std::fabs(bv), floor});
        worst = std::max(worst, std::fabs(av - bv) / denom);
    }
    return worst;
}

}  // namespace rocket
