#pragma once

// Independent numeric oracles used by the test suites. These deliberately
// avoid the library's differentiation path: everything here is plain
// finite differences and brute-force arithmetic over raw values.

#include <cmath>
#include <functional>
#include <vector>

#include "gl/params.hpp"

namespace oracle {

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central finite difference d f / d x_i.
inline std::vector<double> fd_gradient(const ScalarFn& f, std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double keep = x[i];
        x[i] = keep + h;
        double up = f(x);
        x[i] = keep - h;
        double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Finite difference of an analytic gradient along a direction:
// (grad(x + h v) - grad(x - h v)) / 2h.
inline std::vector<double> fd_hvp(const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
                                  const std::vector<double>& x, const std::vector<double>& v,
                                  double h) {
    std::vector<double> up(x), down(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        up[i] += h * v[i];
        down[i] -= h * v[i];
    }
    std::vector<double> gu = grad_fn(up), gd = grad_fn(down);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (gu[i] - gd[i]) / (2.0 * h);
    return out;
}

inline double max_rel_err(const std::vector<double>& got, const std::vector<double>& want,
                          double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        double denom = std::max(std::abs(want[i]), floor);
        worst = std::max(worst, std::abs(got[i] - want[i]) / denom);
    }
    return worst;
}

inline double max_abs_err(const std::vector<double>& got, const std::vector<double>& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, std::abs(got[i] - want[i]));
    return worst;
}

inline std::vector<double> to_vec(std::span<const double> s) {
    return std::vector<double>(s.begin(), s.end());
}

}  // namespace oracle
