#pragma once

#include <functional>

#include <Eigen/Dense>

#include "qlink/errors.hpp"

// Small dense Levenberg-Marquardt solver for the handful of 2-5 parameter
// fits in this project (loss model, hanger resonance, exponential decay).
namespace qlink::fit {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct Options {
    int max_iterations = 200;
    double ftol = 1e-12;  // relative cost decrease
    double xtol = 1e-12;  // relative step size
    double lambda0 = 1e-3;
    double jacobian_step = 1e-7; // relative forward-difference step
};

struct Result {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance; // Gauss-Newton covariance at the solution
    double cost = 0.0;          // 0.5 * ||r||^2
    int iterations = 0;
    bool converged = false;
};

// Minimizes 0.5*||r(x)||^2. Throws FitError when the iteration limit is hit
// without meeting ftol/xtol; the message carries the last iterate.
Result levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd x0,
                           const Options& opts = {});

struct ExpFit {
    double amplitude = 0.0;
    double tau = 0.0; // decay time; +inf means no measurable decay
};

// Fits y = A * exp(-t/tau). Uses linear least squares on log(y) when all
// samples are positive, otherwise a bounded LM fallback. Decay times beyond
// `tau_cap` are reported as +inf (flat data).
ExpFit fit_exponential_decay(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                             double tau_cap = 1.0);

} // namespace qlink::fit
