#pragma once

#include <optional>
#include <vector>

#include "qlink/hilbert.hpp"

// Time-domain Lindblad simulation of the qubit-cable-qubit system in the
// rotating frame anchored at the communication-mode frequency, and the
// pulse-level transfer/entanglement protocols built on it.
namespace qlink::dynamics {

// One standing-wave mode kept in the simulation. Protocol simulations keep
// only the communication mode; extra modes can be added to check the
// single-mode truncation.
struct ModeSpec {
    double detuning_rad = 0.0;   // relative to the rotating frame
    int parity_sign = +1;        // (-1)^m, multiplies the qubit-2 coupling
    double coupling_scale = 1.0; // per-mode multiplier on the scheduled g
    double kappa = 0.0;          // photon loss rate, 1/T1r
    int truncation = 3;          // Fock truncation d >= 2
};

struct RotatingFrameModel {
    std::vector<ModeSpec> modes{ModeSpec{}};
    double gamma1_q1 = 0.0;    // 1/T1 of the sending qubit
    double gamma_phi_q1 = 0.0; // 1/Tphi
    double gamma1_q2 = 0.0;
    double gamma_phi_q2 = 0.0;
    // optional thermal initialization of each subsystem's excited level
    double thermal_population = 0.0;

    void validate() const;
    HilbertSpace space() const; // [qubit1, modes..., qubit2]
    int qubit2_index() const { return static_cast<int>(modes.size()) + 1; }
};

// Channel setpoints, all rad/s.
struct Setpoints {
    double dw_q1 = 0.0;
    double dw_q2 = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;
};

enum class EdgeProfile { rectangular, raised_cosine };

// Piecewise channel program. Durations are flat-top hold times; with
// raised-cosine edges every transition (including the initial turn-on from
// zero) inserts `ramp_s` of wall time during which channels interpolate
// smoothly, so a single pulse of stated duration T carries effective area
// (T + ramp) * amplitude.
struct ControlSchedule {
    struct Segment {
        double duration_s = 0.0;
        Setpoints values;
    };
    std::vector<Segment> segments;
    EdgeProfile edges = EdgeProfile::rectangular;
    double ramp_s = 4e-9;

    void validate() const;
    double total_duration() const;
    Setpoints at(double t) const;
    // integration breakpoints (segment and ramp boundaries)
    std::vector<double> breakpoints() const;
};

struct EvolutionResult {
    std::vector<double> times;
    // excited-state population of qubit 1, each mode, qubit 2 at the samples
    std::vector<std::vector<double>> populations;
    std::vector<Matrix> sampled_rho; // filled when keep_states is set
    DensityMatrix final_state;
};

struct EvolveOptions {
    bool keep_states = false;
    double rtol = 1e-8;
    double atol = 1e-10;
};

// Integrates drho/dt = -i[H(t),rho] + sum_k D[c_k] rho with collapse
// operators {sqrt(gamma1) sigma, sqrt(gamma_phi/2) sigma_z, sqrt(kappa) a}.
EvolutionResult evolve_lindblad(const RotatingFrameModel& model, const DensityMatrix& rho0,
                                const ControlSchedule& schedule,
                                const std::vector<double>& sample_times,
                                const EvolveOptions& opts = {});

// Initial state |1>_q1 (x) vacuum (x) |0>_q2, with optional thermal mixture.
DensityMatrix excited_sender_state(const RotatingFrameModel& model);
DensityMatrix ground_state(const RotatingFrameModel& model);

struct ChevronResult {
    std::vector<double> detunings_rad;
    std::vector<double> times_s;
    // p1[i][j]: qubit-1 excited population at detuning i, time j
    std::vector<std::vector<double>> p1;
};

// Vacuum Rabi map: qubit 1 initialized in |1>, coupler on at g0, qubit
// detuning swept across the mode.
ChevronResult vacuum_rabi_chevron(const RotatingFrameModel& model, double g0_rad,
                                  const std::vector<double>& detunings_rad,
                                  const std::vector<double>& times_s);

struct RingdownResult {
    std::vector<double> wait_times_s;
    std::vector<double> p1;
    double t1r_fitted_s = 0.0; // +inf when no measurable decay
};

// Swap a photon into the mode, idle, swap back, fit the exponential decay of
// the recovered population.
RingdownResult t1r_ringdown(const RotatingFrameModel& model, double g_swap_rad,
                            const std::vector<double>& wait_times_s);

// Simultaneous resonant interaction of both qubits with the mode for tau
// (flat-top duration; raised-cosine ramps extend the effective area to
// tau + ramp, absorbing the difference between the nominal 66 ns and the
// analytic optimum pi/(sqrt(2) g0) = 70.7 ns). Returns the two-qubit state.
DensityMatrix qst_protocol(const RotatingFrameModel& model, double g0_rad, double tau_s,
                           const DensityMatrix& rho0, EdgeProfile edges,
                           double ramp_s = 4e-9);

struct BellResult {
    DensityMatrix rho;    // two-qubit state, mode traced out
    double phase = 0.0;   // deterministic phase of <01|rho|10>
    double fidelity = 0.0; // against (|01> + e^{i phase}|10>)/sqrt(2) with phase = 0
};

// Half-photon swap from qubit 1 into the mode for tau_B, then a full swap
// from the mode to qubit 2 (duration pi/(2 g0)). Stage durations are
// area-calibrated: with raised-cosine edges the flat-top is shortened by one
// ramp so the stated time equals the effective interaction time.
BellResult bell_protocol(const RotatingFrameModel& model, double g0_rad, double tau_b_s,
                         EdgeProfile edges, double ramp_s = 4e-9);

} // namespace qlink::dynamics
