#include "qlink/device.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "qlink/units.hpp"

namespace qlink::device {

void QubitParams::validate() const {
    if (t1_us <= 0 || tphi_us <= 0) throw ValidationError(label + ": T1 and Tphi must be > 0");
    if (f0 < 0 || f0 > 1 || f1 < 0 || f1 > 1)
        throw ValidationError(label + ": readout fidelities must be in [0,1]");
    if (omega10_ghz < omega_min_ghz || omega10_ghz > omega_max_ghz)
        throw ValidationError(label + ": omega10 outside tuning range");
    if (lq_nh <= 0) throw ValidationError(label + ": Lq must be > 0");
}

void CouplerParams::validate() const {
    if (lg_nh <= 0 || lt_nh <= 0) throw ValidationError("coupler: Lg and L_T must be > 0");
    if (lw_nh < 0) throw ValidationError("coupler: Lw must be >= 0");
}

void CableParams::validate() const {
    if (c_cb_pf_per_m <= 0 || l_cb_nh_per_m <= 0 || len_cb_m <= 0 || c_cpw_pf_per_m <= 0 ||
        l_cpw_nh_per_m <= 0 || len_cpw_m < 0)
        throw ValidationError("cable: all geometry parameters must be > 0");
    if (n_cpw != 1 && n_cpw != 2) throw ValidationError("cable: n_cpw must be 1 or 2");
}

double fsr(const CableParams& cable) {
    cable.validate();
    const double delay_cb =
        cable.len_cb_m * std::sqrt(cable.l_cb_nh_per_m * 1e-9 * cable.c_cb_pf_per_m * 1e-12);
    const double delay_cpw =
        cable.len_cpw_m * std::sqrt(cable.l_cpw_nh_per_m * 1e-9 * cable.c_cpw_pf_per_m * 1e-12);
    const double round_trip = 2.0 * (delay_cb + cable.n_cpw * delay_cpw);
    return units::two_pi / round_trip;
}

StandingMode mode_params(const CableParams& cable, int m) {
    cable.validate();
    if (m < 1) throw ValidationError("mode_params: m must be >= 1");
    StandingMode mode;
    mode.m = m;
    mode.l_m_nh =
        0.5 * (cable.l_cb_nh_per_m * cable.len_cb_m + cable.n_cpw * cable.l_cpw_nh_per_m * cable.len_cpw_m);
    mode.omega_rad = m * fsr(cable);
    mode.c_m_ff = 1.0 / (mode.omega_rad * mode.omega_rad * mode.l_m_nh * 1e-9) * 1e15;
    mode.parity_sign = (m % 2 == 0) ? +1 : -1;
    return mode;
}

InterconnectModel build_interconnect(const CableParams& cable, int m_min, int m_max) {
    if (m_min < 1 || m_max < m_min)
        throw ValidationError("build_interconnect: need 1 <= m_min <= m_max");
    InterconnectModel model;
    model.cable = cable;
    model.omega_fsr_rad = fsr(cable);
    for (int m = m_min; m <= m_max; ++m) model.modes.push_back(mode_params(cable, m));
    return model;
}

double mutual_inductance(const CouplerParams& c) {
    c.validate();
    const double cosd = std::cos(c.delta_rad);
    if (cosd == 0.0) return 0.0;
    const double denom = 2.0 * c.lg_nh + c.lw_nh + c.lt_nh / cosd;
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return c.lg_nh * c.lg_nh / denom;
}

double coupling_strength(const QubitParams& q, const StandingMode& mode,
                         const CouplerParams& c) {
    if (q.lq_nh <= 0) throw ValidationError("coupling_strength: Lq must be > 0");
    const double m_nh = mutual_inductance(c);
    if (m_nh == 0.0) return 0.0;
    const double w_q = units::ghz_to_rad(q.omega10_ghz);
    const double num = mode.omega_rad * w_q;
    const double den = (c.lg_nh + q.lq_nh) * (c.lg_nh + mode.l_m_nh) * 1e-18;
    return -(m_nh * 1e-9 / 2.0) * std::sqrt(num / den);
}

double solve_coupler_bias(double target_g_rad, const QubitParams& q,
                          const StandingMode& mode, CouplerParams c) {
    const double half_pi = std::numbers::pi / 2.0;
    const double target = std::abs(target_g_rad);
    if (target == 0.0) return half_pi;

    c.delta_rad = 0.0;
    const double g_max = std::abs(coupling_strength(q, mode, c));
    if (target > g_max)
        throw RangeError("solve_coupler_bias: target |g|/2pi = " +
                         std::to_string(units::rad_to_mhz(target)) +
                         " MHz exceeds max achievable " +
                         std::to_string(units::rad_to_mhz(g_max)) + " MHz");

    auto g_at = [&](double delta) {
        c.delta_rad = delta;
        return std::abs(coupling_strength(q, mode, c));
    };
    // |g| decreases monotonically from g_max at delta=0 to 0 at pi/2; run the
    // bisection to interval exhaustion so the bias itself is pinned, not just g
    double lo = 0.0, hi = half_pi;
    for (int it = 0; it < 120; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g_at(mid) > target ? lo : hi) = mid;
    }
    const double delta = 0.5 * (lo + hi);
    if (std::abs(g_at(delta) - target) > units::two_pi * 1.0)
        throw RangeError("solve_coupler_bias: bisection failed to reach 1 Hz tolerance");
    return delta;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        // trim whitespace
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    return fields;
}

} // namespace

std::vector<QubitParams> load_qubit_table(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ValidationError("load_qubit_table: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("load_qubit_table: empty file");
    const auto header = split_csv_line(line);

    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ValidationError("load_qubit_table: missing column " + name);
        return static_cast<int>(it - header.begin());
    };
    const int c_label = col("label"), c_w = col("omega10_ghz"), c_eta = col("eta_ghz"),
              c_t1 = col("t1_us"), c_tphi = col("tphi_us"), c_f0 = col("f0"), c_f1 = col("f1");

    std::vector<QubitParams> table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        QubitParams q;
        q.label = f.at(c_label);
        q.omega10_ghz = std::stod(f.at(c_w));
        q.eta_ghz = std::stod(f.at(c_eta));
        q.t1_us = std::stod(f.at(c_t1));
        q.tphi_us = std::stod(f.at(c_tphi));
        q.f0 = std::stod(f.at(c_f0));
        q.f1 = std::stod(f.at(c_f1));
        q.validate();
        table.push_back(std::move(q));
    }
    if (table.empty()) throw ValidationError("load_qubit_table: no rows in " + csv_path);
    return table;
}

const QubitParams& find_qubit(const std::vector<QubitParams>& table, const std::string& label) {
    for (const auto& q : table)
        if (q.label == label) return q;
    throw ValidationError("find_qubit: no qubit labeled " + label);
}

} // namespace qlink::device
