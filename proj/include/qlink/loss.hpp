#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlink/device.hpp"

// Forward model and fitter for interconnect internal quality factors:
// wirebond series-resistance loss filtered by the on-chip quarter-wave
// transformer, combined with the cable's intrinsic quality factor.
namespace qlink::loss {

struct LossModel {
    double q_cb = 1e6;          // intrinsic cable quality factor
    double r_s_ohm = 0.01;      // wirebond series resistance
    int n_bonds = 2;            // 1 = test chip, 2 = chip-cable-chip
    device::CableParams cable;  // supplies L_m and CPW propagation constant

    void validate() const;
};

struct QDataPoint {
    double omega_rad = 0.0; // mode angular frequency
    double q_int = 0.0;     // measured internal quality factor
    double sigma_rel = 0.0; // optional relative uncertainty (0 = unset)
};

struct HangerResonance {
    double f0_hz = 0.0;
    double q_int = 0.0;
    double q_c = 0.0;            // coupling quality factor
    double baseline_amp = 1.0;   // |S21| far from resonance
    double baseline_phase = 0.0; // radians
};

struct LossFitResult {
    double q_cb = 0.0;
    double r_s_ohm = 0.0;
    Eigen::Matrix2d covariance; // over (log Q_cb, log R_s)
};

// Wirebond loading quality factor of a standing mode:
//   Q_loss = omega_m L_m / (cos^2(beta_c l_c) n_bonds R_s),
// +inf at the quarter-wave match or for R_s = 0.
double q_loss(const LossModel& model, const device::StandingMode& mode);

// 1/Q_int = 1/Q_loss + 1/Q_cb.
double q_int(const LossModel& model, const device::StandingMode& mode);

// Weighted least squares on log(Q_int) residuals over (Q_cb, R_s).
// Weights: 1/sigma_rel when provided; otherwise Q_i/max(Q) — the high-Q
// points near the transformer match are the ones carrying information about
// the intrinsic-cable ceiling, and equal weights let the low-Q flanks drag
// the ceiling estimate. Deterministic initial guess: Q_cb from the largest
// Q_int, R_s closed-form from the smallest-Q point (falling back to the
// point with the largest cos^2 when that one sits at the match).
LossFitResult fit_loss_model(const std::vector<QDataPoint>& points, const LossModel& geometry);

// Q = omega * T1r and back.
double t1r_from_q(double q_int, double omega_rad);
double q_from_t1r(double t1r_s, double omega_rad);

// Quarter-wave transformer input impedance Z0^2 / Z_L (Eq. of the on-chip
// diplexer analysis); Z_L = 0 maps to +inf.
double quarter_wave_impedance(double z0_ohm, double z_load_ohm);

// Hanger transmission: S21(f) = b * (1 - (Ql/Qc) / (1 + 2i Ql (f-f0)/f0)),
// 1/Ql = 1/Q_int + 1/Q_c, b the complex baseline.
Eigen::VectorXcd s21_hanger(const Eigen::VectorXd& f_hz, const HangerResonance& r);

// Least squares on real/imag parts; requires the dip inside the window.
HangerResonance fit_hanger(const Eigen::VectorXd& f_hz, const Eigen::VectorXcd& trace);

// CSV ingestion, columns: mode_m, freq_ghz, q_int [, sigma]
struct QDataRow {
    int mode_m = 0;
    QDataPoint point;
};
std::vector<QDataRow> load_q_data(const std::string& csv_path);

} // namespace qlink::loss
