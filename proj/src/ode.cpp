#include "qlink/ode.hpp"

#include <algorithm>

namespace qlink::ode {

namespace {

// Dormand-Prince coefficients
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// embedded 4th-order weights
constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                 e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;

double error_norm(const State& err, const State& y0, const State& y1, const Options& o) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double scale =
            o.atol + o.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double e = std::abs(err[i]) / scale;
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(err.size()));
}

} // namespace

State integrate(const Rhs& f, State y0, double t0, double t1,
                const std::vector<double>& sample_times,
                const std::function<void(double, const State&)>& sample,
                const Options& opts) {
    if (t1 < t0) throw ValidationError("ode::integrate: t1 < t0");
    State y = std::move(y0);
    double t = t0;
    State k1 = f(t, y);
    std::size_t next_sample = 0;

    auto emit_samples_upto = [&](double t_lo, double t_hi, const State& y_lo,
                                 const State& y_hi, const State& f_lo, const State& f_hi) {
        // cubic Hermite on [t_lo, t_hi]
        while (sample && next_sample < sample_times.size() &&
               sample_times[next_sample] <= t_hi + 1e-18) {
            const double ts = std::clamp(sample_times[next_sample], t_lo, t_hi);
            const double h = t_hi - t_lo;
            if (h <= 0) {
                sample(sample_times[next_sample], y_hi);
            } else {
                const double s = (ts - t_lo) / h;
                const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
                const double h10 = s * (1 - s) * (1 - s);
                const double h01 = s * s * (3 - 2 * s);
                const double h11 = s * s * (s - 1);
                State ys = h00 * y_lo + (h10 * h) * f_lo + h01 * y_hi + (h11 * h) * f_hi;
                sample(sample_times[next_sample], ys);
            }
            ++next_sample;
        }
    };

    if (t1 == t0) {
        emit_samples_upto(t0, t0, y, y, k1, k1);
        return y;
    }

    double h = std::min(opts.h_init, t1 - t0);
    // crude initial step from the rhs magnitude
    {
        const double fn = k1.norm();
        const double yn = std::max(y.norm(), 1.0);
        if (fn > 0) h = std::min(std::max(1e-4 * yn / fn, opts.h_init), (t1 - t0));
    }

    for (long step = 0; step < opts.max_steps; ++step) {
        if (t >= t1) break;
        h = std::min(h, t1 - t);

        const State k2 = f(t + c2 * h, y + h * (a21 * k1));
        const State k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
        const State k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const State k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const State k6 =
            f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const State y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const State k7 = f(t + h, y_new); // FSAL
        const State y_low =
            y + h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        const double err = error_norm(y_new - y_low, y, y_new, opts);
        if (err <= 1.0) {
            emit_samples_upto(t, t + h, y, y_new, k1, k7);
            t += h;
            y = y_new;
            k1 = k7;
            const double grow = (err > 0) ? 0.9 * std::pow(err, -0.2) : 5.0;
            h *= std::clamp(grow, 0.2, 5.0);
        } else {
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
            if (h < opts.h_min)
                throw FitError("ode::integrate: step size underflow at t = " +
                               std::to_string(t) + " (err " + std::to_string(err) + ")");
        }
    }
    if (t < t1)
        throw FitError("ode::integrate: max step count exceeded at t = " + std::to_string(t));
    emit_samples_upto(t1, t1, y, y, k1, k1);
    return y;
}

} // namespace qlink::ode
