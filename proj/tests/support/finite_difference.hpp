#pragma once

// Central finite differences, evaluated in double precision. Independent of the
// tape: only forward evaluations of the function are used.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "deepfn/tensor.hpp"

namespace deepfn::testing {

/// d f / d param via (f(p+h) - f(p-h)) / 2h for every element of `param`.
inline std::vector<double> central_difference(const std::function<double()>& f, Tensor<double>& param,
                                              double h = 1e-3) {
    auto w = param.mutable_data();
    std::vector<double> grad(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + h;
        const double up = f();
        w[i] = saved - h;
        const double down = f();
        w[i] = saved;
        grad[i] = (up - down) / (2 * h);
    }
    return grad;
}

/// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
template <typename A, typename B>
double relative_error(const A& a, const B& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < std::size(a); ++i) {
        const double x = double(a[i]), y = double(b[i]);
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0 ? 0 : std::sqrt(diff) / scale;
}

}  // namespace deepfn::testing
