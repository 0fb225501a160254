#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qlink/errors.hpp"

// Parameter model of the physical network: qubits, gmon couplers, coaxial
// cables and CPW impedance transformers. Computes standing-wave mode
// parameters of the shorted chip-cable-chip line and qubit-mode couplings.
namespace qlink::device {

struct QubitParams {
    std::string label;          // e.g. Q1A
    double omega10_ghz = 0.0;   // operating frequency, GHz
    double eta_ghz = 0.0;       // anharmonicity, GHz (negative)
    double t1_us = 0.0;         // energy relaxation time
    double tphi_us = 0.0;       // pure dephasing time
    double f0 = 1.0;            // readout fidelity of |0>
    double f1 = 1.0;            // readout fidelity of |1>
    double alpha = 5.3;         // junction asymmetry E_J1/E_J2
    double lq_nh = 8.0;         // qubit junction inductance (repo default, not a paper value)
    double omega_min_ghz = 4.2; // tuning range envelope of the device table
    double omega_max_ghz = 5.2;

    void validate() const;
};

struct CouplerParams {
    double lg_nh = 0.2;   // linear inductance (repo default)
    double lw_nh = 0.06;  // stray inductance
    double lt_nh = 0.6;   // junction inductance at delta = 0 (repo default)
    double delta_rad = 0; // junction phase, the control variable

    void validate() const;
};

struct CableParams {
    double c_cb_pf_per_m = 86.5; // cable specific capacitance
    double l_cb_nh_per_m = 216;  // cable specific inductance
    double len_cb_m = 0.25;      // cable length
    double c_cpw_pf_per_m = 173; // CPW specific capacitance
    double l_cpw_nh_per_m = 402; // CPW specific inductance
    double len_cpw_m = 6.5e-3;   // CPW transformer length
    int n_cpw = 2;               // 1 = test chip, 2 = chip-cable-chip

    void validate() const;
};

struct StandingMode {
    int m = 0;              // mode number
    double omega_rad = 0;   // angular frequency, rad/s
    double l_m_nh = 0;      // lumped inductance
    double c_m_ff = 0;      // lumped capacitance
    int parity_sign = +1;   // (-1)^m, applied to the far-end coupling
};

struct InterconnectModel {
    CableParams cable;
    std::vector<StandingMode> modes; // sorted by m, constant spacing
    double omega_fsr_rad = 0;
};

// Free spectral range of the composite shorted-shorted line: inverse
// round-trip delay, 2*pi / (2 * (l_cb*sqrt(LC)_cb + n_cpw*l_c*sqrt(LC)_cpw)).
double fsr(const CableParams& cable);

// Lumped series-LC parameters of the m-th standing wave mode:
// L_m = (l_cb*L_cb + n_cpw*l_c*L_cpw)/2, omega_m = m*omega_FSR, C_m = 1/(w^2 L_m).
StandingMode mode_params(const CableParams& cable, int m);

InterconnectModel build_interconnect(const CableParams& cable, int m_min, int m_max);

// Tunable mutual inductance of the gmon coupler in nH:
// M = Lg^2 / (2 Lg + Lw + L_T / cos(delta)); continuous through delta = pi/2.
double mutual_inductance(const CouplerParams& c);

// Qubit-mode coupling, rad/s: g = -(M/2) sqrt(w_m w_q / ((Lg+Lq)(Lg+L_m))).
// The far-end qubit multiplies this by mode.parity_sign.
double coupling_strength(const QubitParams& q, const StandingMode& mode,
                         const CouplerParams& c);

// Inverse of coupling_strength on the monotone branch delta in [0, pi/2):
// finds the bias giving |g| = |target_g| within 1 Hz. A target of zero maps
// to the off bias pi/2. Unreachable targets throw RangeError naming max |g|.
double solve_coupler_bias(double target_g_rad, const QubitParams& q,
                          const StandingMode& mode, CouplerParams c);

// Device parameter table, one row per qubit (Table S2 field names).
std::vector<QubitParams> load_qubit_table(const std::string& csv_path);
const QubitParams& find_qubit(const std::vector<QubitParams>& table, const std::string& label);

} // namespace qlink::device
