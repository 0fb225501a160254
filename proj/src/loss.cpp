#include "qlink/loss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "qlink/lmfit.hpp"
#include "qlink/units.hpp"

namespace qlink::loss {

namespace {

using cx = std::complex<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

// cos^2(beta_c * l_c) at a mode frequency; beta_c = omega * sqrt(L'C') of the CPW
double cos2_transformer(const device::CableParams& cable, double omega_rad) {
    const double slowness =
        std::sqrt(cable.l_cpw_nh_per_m * 1e-9 * cable.c_cpw_pf_per_m * 1e-12);
    const double phase = omega_rad * slowness * cable.len_cpw_m;
    const double c = std::cos(phase);
    return c * c;
}

double q_loss_at(const LossModel& model, double omega_rad, double l_m_nh) {
    const double c2 = cos2_transformer(model.cable, omega_rad);
    if (c2 == 0.0 || model.r_s_ohm == 0.0) return kInf;
    return omega_rad * l_m_nh * 1e-9 / (c2 * model.n_bonds * model.r_s_ohm);
}

double q_int_at(const LossModel& model, double omega_rad, double l_m_nh) {
    const double ql = q_loss_at(model, omega_rad, l_m_nh);
    if (std::isinf(ql)) return model.q_cb;
    return 1.0 / (1.0 / ql + 1.0 / model.q_cb);
}

double mode_l_m_nh(const device::CableParams& cable) {
    return 0.5 * (cable.l_cb_nh_per_m * cable.len_cb_m +
                  cable.n_cpw * cable.l_cpw_nh_per_m * cable.len_cpw_m);
}

} // namespace

void LossModel::validate() const {
    if (q_cb <= 0) throw ValidationError("LossModel: Q_cb must be > 0");
    if (r_s_ohm < 0) throw ValidationError("LossModel: R_s must be >= 0");
    if (n_bonds != 1 && n_bonds != 2) throw ValidationError("LossModel: n_bonds must be 1 or 2");
    cable.validate();
}

double q_loss(const LossModel& model, const device::StandingMode& mode) {
    model.validate();
    return q_loss_at(model, mode.omega_rad, mode.l_m_nh);
}

double q_int(const LossModel& model, const device::StandingMode& mode) {
    model.validate();
    return q_int_at(model, mode.omega_rad, mode.l_m_nh);
}

LossFitResult fit_loss_model(const std::vector<QDataPoint>& points, const LossModel& geometry) {
    geometry.validate();
    if (points.size() < 3)
        throw ValidationError("fit_loss_model: need >= 3 data points");
    for (const auto& p : points)
        if (p.q_int <= 0 || p.omega_rad <= 0)
            throw ValidationError("fit_loss_model: Q_int and omega must be > 0");

    const double l_m_nh = mode_l_m_nh(geometry.cable);
    const int n = static_cast<int>(points.size());

    // distinct mode frequencies (>= 2) and identifiability of R_s
    double max_c2 = 0.0;
    {
        double wmin = kInf, wmax = 0.0;
        for (const auto& p : points) {
            wmin = std::min(wmin, p.omega_rad);
            wmax = std::max(wmax, p.omega_rad);
            max_c2 = std::max(max_c2, cos2_transformer(geometry.cable, p.omega_rad));
        }
        if (wmax <= wmin)
            throw ValidationError("fit_loss_model: points must span >= 2 mode frequencies");
    }
    if (max_c2 < 1e-12)
        throw FitError("fit_loss_model: all points at the quarter-wave match, "
                       "R_s is unidentifiable");

    const double q_max = std::max_element(points.begin(), points.end(),
                                          [](const QDataPoint& a, const QDataPoint& b) {
                                              return a.q_int < b.q_int;
                                          })
                             ->q_int;

    // weights: 1/sigma when given, else Q_i / Q_max (see header)
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i)
        w[i] = points[i].sigma_rel > 0 ? 1.0 / points[i].sigma_rel : points[i].q_int / q_max;

    // initial guess: Q_cb <- max Q_int; R_s closed-form from the min-Q point,
    // or from the max-cos^2 point when the min sits at the match
    const double q_cb0 = q_max;
    int i_rs = 0;
    double q_min = kInf;
    for (int i = 0; i < n; ++i)
        if (points[i].q_int < q_min) {
            q_min = points[i].q_int;
            i_rs = i;
        }
    if (cos2_transformer(geometry.cable, points[i_rs].omega_rad) < 1e-9) {
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
            const double c2 = cos2_transformer(geometry.cable, points[i].omega_rad);
            if (c2 > best) {
                best = c2;
                i_rs = i;
            }
        }
    }
    double r_s0 = 0.02;
    {
        const auto& p = points[i_rs];
        const double inv_loss = std::max(1.0 / p.q_int - 1.0 / (2.0 * q_cb0), 1e-3 / p.q_int);
        const double c2 = cos2_transformer(geometry.cable, p.omega_rad);
        r_s0 = p.omega_rad * l_m_nh * 1e-9 * inv_loss / (c2 * geometry.n_bonds);
    }

    // fit in log parameters to keep both positive
    auto resid = [&](const Eigen::VectorXd& x) {
        LossModel m = geometry;
        m.q_cb = std::exp(x[0]);
        m.r_s_ohm = std::exp(x[1]);
        Eigen::VectorXd r(n);
        for (int i = 0; i < n; ++i)
            r[i] = w[i] * (std::log(q_int_at(m, points[i].omega_rad, l_m_nh)) -
                           std::log(points[i].q_int));
        return r;
    };
    Eigen::VectorXd x0(2);
    x0 << std::log(q_cb0), std::log(std::max(r_s0, 1e-9));
    const fit::Result res = fit::levenberg_marquardt(resid, x0);

    LossFitResult out;
    out.q_cb = std::exp(res.params[0]);
    out.r_s_ohm = std::exp(res.params[1]);
    out.covariance = res.covariance;
    return out;
}

double t1r_from_q(double q_int, double omega_rad) {
    if (q_int <= 0 || omega_rad <= 0) throw ValidationError("t1r_from_q: positive inputs required");
    return q_int / omega_rad;
}

double q_from_t1r(double t1r_s, double omega_rad) {
    if (t1r_s <= 0 || omega_rad <= 0) throw ValidationError("q_from_t1r: positive inputs required");
    return omega_rad * t1r_s;
}

double quarter_wave_impedance(double z0_ohm, double z_load_ohm) {
    if (z0_ohm <= 0) throw ValidationError("quarter_wave_impedance: Z0 must be > 0");
    if (z_load_ohm < 0) throw ValidationError("quarter_wave_impedance: Z_L must be >= 0");
    if (z_load_ohm == 0.0) return kInf;
    return z0_ohm * z0_ohm / z_load_ohm;
}

Eigen::VectorXcd s21_hanger(const Eigen::VectorXd& f_hz, const HangerResonance& r) {
    if (r.q_int <= 0 || r.q_c <= 0) throw ValidationError("s21_hanger: Q values must be > 0");
    const double q_l = 1.0 / (1.0 / r.q_int + 1.0 / r.q_c);
    const cx baseline = std::polar(r.baseline_amp, r.baseline_phase);
    Eigen::VectorXcd out(f_hz.size());
    for (Eigen::Index i = 0; i < f_hz.size(); ++i) {
        const cx denom(1.0, 2.0 * q_l * (f_hz[i] - r.f0_hz) / r.f0_hz);
        out[i] = baseline * (1.0 - (q_l / r.q_c) / denom);
    }
    return out;
}

HangerResonance fit_hanger(const Eigen::VectorXd& f_hz, const Eigen::VectorXcd& trace) {
    const int n = static_cast<int>(f_hz.size());
    if (n < 16 || trace.size() != n)
        throw ValidationError("fit_hanger: need a trace of >= 16 points");

    // baseline from the window edges
    const int n_edge = std::max(2, n / 20);
    cx base = 0.0;
    for (int i = 0; i < n_edge; ++i) base += trace[i] + trace[n - 1 - i];
    base /= 2.0 * n_edge;
    if (std::abs(base) < 1e-12) throw FitError("fit_hanger: vanishing baseline");

    // dip location
    int i_min = 0;
    double a_min = kInf;
    for (int i = 0; i < n; ++i)
        if (std::abs(trace[i]) < a_min) {
            a_min = std::abs(trace[i]);
            i_min = i;
        }
    if (i_min <= 2 || i_min >= n - 3)
        throw FitError("fit_hanger: resonance not inside the frequency window");

    const double depth = 1.0 - a_min / std::abs(base);
    if (depth <= 1e-6) throw FitError("fit_hanger: no resonance dip found");
    const double f0_guess = f_hz[i_min];

    // half-depth full width -> Q_l
    const double half = 1.0 - depth / 2.0;
    int i_lo = i_min, i_hi = i_min;
    while (i_lo > 0 && std::abs(trace[i_lo]) / std::abs(base) < half) --i_lo;
    while (i_hi < n - 1 && std::abs(trace[i_hi]) / std::abs(base) < half) ++i_hi;
    const double fwhm = std::max(f_hz[i_hi] - f_hz[i_lo], f_hz[1] - f_hz[0]);
    const double q_l_guess = f0_guess / fwhm;
    const double q_c_guess = q_l_guess / std::min(depth, 1.0 - 1e-6);
    const double q_int_guess = 1.0 / std::max(1.0 / q_l_guess - 1.0 / q_c_guess, 1e-12);

    // parameters: f0, log Q_int, log Q_c, log amp, phase
    auto resid = [&](const Eigen::VectorXd& x) {
        HangerResonance r;
        r.f0_hz = x[0];
        r.q_int = std::exp(x[1]);
        r.q_c = std::exp(x[2]);
        r.baseline_amp = std::exp(x[3]);
        r.baseline_phase = x[4];
        const Eigen::VectorXcd model = s21_hanger(f_hz, r);
        Eigen::VectorXd out(2 * n);
        for (int i = 0; i < n; ++i) {
            out[2 * i] = model[i].real() - trace[i].real();
            out[2 * i + 1] = model[i].imag() - trace[i].imag();
        }
        return out;
    };
    Eigen::VectorXd x0(5);
    x0 << f0_guess, std::log(q_int_guess), std::log(q_c_guess), std::log(std::abs(base)),
        std::arg(base);
    const fit::Result res = fit::levenberg_marquardt(resid, x0);

    HangerResonance out;
    out.f0_hz = res.params[0];
    out.q_int = std::exp(res.params[1]);
    out.q_c = std::exp(res.params[2]);
    out.baseline_amp = std::exp(res.params[3]);
    out.baseline_phase = res.params[4];
    if (out.f0_hz < f_hz[0] || out.f0_hz > f_hz[n - 1])
        throw FitError("fit_hanger: fitted resonance outside the window");
    return out;
}

std::vector<QDataRow> load_q_data(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ValidationError("load_q_data: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("load_q_data: empty file");

    std::vector<QDataRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
        if (vals.size() < 3) throw ValidationError("load_q_data: need mode_m,freq_ghz,q_int");
        QDataRow row;
        row.mode_m = static_cast<int>(vals[0]);
        row.point.omega_rad = units::ghz_to_rad(vals[1]);
        row.point.q_int = vals[2];
        row.point.sigma_rel = vals.size() > 3 ? vals[3] : 0.0;
        rows.push_back(row);
    }
    if (rows.empty()) throw ValidationError("load_q_data: no rows in " + csv_path);
    return rows;
}

} // namespace qlink::loss
