#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "qlink/errors.hpp"

// Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) on complex state
// vectors, with cubic Hermite dense output for sample grids.
namespace qlink::ode {

using State = Eigen::VectorXcd;
using Rhs = std::function<State(double, const State&)>;

struct Options {
    double rtol = 1e-8;
    double atol = 1e-10;
    double h_init = 1e-10;
    double h_min = 1e-18;
    long max_steps = 2'000'000;
};

// Integrates y' = f(t, y) over [t0, t1]; invokes `sample` via dense output at
// each requested time (sample_times must be sorted and lie within [t0, t1]).
State integrate(const Rhs& f, State y0, double t0, double t1,
                const std::vector<double>& sample_times,
                const std::function<void(double, const State&)>& sample,
                const Options& opts = {});

inline State integrate(const Rhs& f, State y0, double t0, double t1,
                       const Options& opts = {}) {
    return integrate(f, std::move(y0), t0, t1, {}, nullptr, opts);
}

} // namespace qlink::ode
