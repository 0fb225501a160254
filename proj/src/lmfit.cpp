#include "qlink/lmfit.hpp"

#include <cmath>
#include <limits>

namespace qlink::fit {

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& r0, double rel_step) {
    const int n = static_cast<int>(x.size());
    const int m = static_cast<int>(r0.size());
    Eigen::MatrixXd jac(m, n);
    for (int j = 0; j < n; ++j) {
        const double h = rel_step * std::max(std::abs(x[j]), 1.0);
        Eigen::VectorXd xp = x;
        xp[j] += h;
        jac.col(j) = (f(xp) - r0) / h;
    }
    return jac;
}

} // namespace

Result levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd x0,
                           const Options& opts) {
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd r = residuals(x);
    double cost = 0.5 * r.squaredNorm();
    double lambda = opts.lambda0;

    Result out;
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd jac = numeric_jacobian(residuals, x, r, opts.jacobian_step);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;

        bool stepped = false;
        for (int trial = 0; trial < 40; ++trial) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd x_new = x + step;
            const Eigen::VectorXd r_new = residuals(x_new);
            const double cost_new = 0.5 * r_new.squaredNorm();
            if (std::isfinite(cost_new) && cost_new <= cost) {
                const double df = cost - cost_new;
                const double dx = step.norm() / std::max(x.norm(), 1.0);
                x = x_new;
                r = r_new;
                if (df <= opts.ftol * std::max(cost, 1e-300) || dx <= opts.xtol) converged = true;
                cost = cost_new;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!stepped) {
            // no downhill step found at any damping: treat as converged when
            // the gradient is already tiny, otherwise keep going uphill-free
            if (g.norm() <= 1e-10 * std::max(1.0, cost)) converged = true;
            break;
        }
    }

    if (!converged && it >= opts.max_iterations)
        throw FitError("levenberg_marquardt: no convergence after " +
                       std::to_string(opts.max_iterations) +
                       " iterations (last cost " + std::to_string(cost) + ")");

    out.params = x;
    out.cost = cost;
    out.iterations = it;
    out.converged = true;

    // Gauss-Newton covariance: (J^T J)^-1 scaled by residual variance.
    const Eigen::MatrixXd jac = numeric_jacobian(residuals, x, r, opts.jacobian_step);
    const int m = static_cast<int>(r.size());
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    const double s2 = (m > n) ? 2.0 * cost / (m - n) : 1.0;
    out.covariance = s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
    return out;
}

ExpFit fit_exponential_decay(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                             double tau_cap) {
    if (t.size() != y.size() || t.size() < 3)
        throw ValidationError("fit_exponential_decay: need >= 3 samples");

    const bool all_positive = (y.array() > 0.0).all();
    ExpFit fit;
    if (all_positive) {
        // linear LS on log y = log A - t/tau
        Eigen::MatrixXd a(t.size(), 2);
        a.col(0) = Eigen::VectorXd::Ones(t.size());
        a.col(1) = -t;
        const Eigen::VectorXd b = y.array().log().matrix();
        const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
        fit.amplitude = std::exp(sol[0]);
        const double rate = sol[1];
        fit.tau = (rate <= 1.0 / tau_cap) ? std::numeric_limits<double>::infinity() : 1.0 / rate;
        return fit;
    }

    // bounded fallback: parameters (A, log tau), tau clamped to (0, tau_cap]
    const double a0 = std::max(y.maxCoeff(), 1e-12);
    const double span = t[t.size() - 1] - t[0];
    Eigen::VectorXd x0(2);
    x0 << a0, std::log(std::max(span / 2.0, 1e-12));
    auto resid = [&](const Eigen::VectorXd& p) {
        const double amp = p[0];
        const double tau = std::exp(std::min(p[1], std::log(tau_cap)));
        return Eigen::VectorXd((amp * (-t.array() / tau).exp() - y.array()).matrix());
    };
    const Result res = levenberg_marquardt(resid, x0);
    fit.amplitude = res.params[0];
    const double tau = std::exp(std::min(res.params[1], std::log(tau_cap)));
    fit.tau = (tau >= tau_cap * (1.0 - 1e-9)) ? std::numeric_limits<double>::infinity() : tau;
    return fit;
}

} // namespace qlink::fit
