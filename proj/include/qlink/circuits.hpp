#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qlink/hilbert.hpp"
#include "qlink/rng.hpp"
#include "qlink/tomo.hpp"

// Gate-level noisy simulation of multi-module circuits: GHZ protocol
// construction, trajectory sampling with Kraus noise, parity measurements
// and the GHZ fidelity estimator.
//
// Bitstring convention: qubit 0 is the most significant bit, matching the
// subsystem-0-slowest ordering of the hilbert layer.
namespace qlink::circuits {

struct QubitInfo {
    std::string label;  // e.g. Q1A
    std::string module; // e.g. A
};

struct Gate {
    enum class Kind {
        rotation,  // equatorial rotation exp(-i angle/2 (cos(phi) X + sin(phi) Y)),
                   // or a virtual Z frame rotation when axis_z is set
        cz,
        cnot,      // macro: (-Y/2 on target) CZ (Y/2 on target)
        bell_link, // inter-module half-photon swap: |10> -> (|10>+|01>)/sqrt2
        qst_link,  // inter-module transfer: moves qubit a's state to qubit b
        measure_all
    };

    Kind kind = Kind::rotation;
    int q0 = -1; // rotation target / control / link sender
    int q1 = -1; // CZ-CNOT target / link receiver
    double angle = 0.0;
    double phi = 0.0;   // equatorial axis angle; 0 = X, pi/2 = Y
    bool axis_z = false; // zero-duration virtual Z by `angle`
    std::string link_id; // interconnect name for *_link gates

    static Gate rotation(int q, double angle, double phi = 0.0);
    static Gate virtual_z(int q, double angle);
    static Gate cz_gate(int a, int b);
    static Gate cnot_macro(int control, int target);
    static Gate bell(int sender, int receiver, std::string link);
    static Gate qst(int sender, int receiver, std::string link);
    static Gate measure();

    std::vector<int> qubits() const;
};

struct Circuit {
    std::vector<QubitInfo> qubits;
    std::vector<std::vector<Gate>> layers; // gates within a layer act on disjoint qubits

    int n_qubits() const { return static_cast<int>(qubits.size()); }
    void validate() const;
    int index_of(const std::string& label) const;
};

// Expands CNOT macros into physical layers and merges adjacent layers that
// hold only disjoint single-qubit gates.
Circuit expand_macros(const Circuit& c);

struct NoiseModel {
    struct QubitNoise {
        double t1_s = 0.0;   // 0 disables the channel
        double tphi_s = 0.0;
        tomo::ConfusionMatrix readout;
    };
    std::vector<QubitNoise> qubits; // one per circuit qubit

    double p1 = 0.0; // depolarizing attached to single-qubit gates
    double p2 = 0.0; // attached to CZ
    double t_1q_s = 25e-9;
    double t_cz_s = 40e-9;
    double t_bell_link_s = 75e-9;
    double t_qst_link_s = 74e-9;
    std::map<std::string, double> link_epsilon; // amplitude-damping per interconnect

    // Decoherence is attached to gate execution: each gate's qubits receive
    // amplitude damping 1-exp(-t_gate/T1) and dephasing with coherence factor
    // exp(-t_gate/Tphi) for that gate's duration. Virtual Z is free.
    void validate(int n_qubits) const;
    double gate_duration(const Gate& g) const;
    double gate_epsilon(const Gate& g) const;
};

NoiseModel noiseless(int n_qubits);

// p = (1 - F) d / (d - 1): depolarizing probability reproducing an average
// gate fidelity F on a d-dimensional gate space.
double calibrate_depolarizing(double avg_gate_fidelity, int dim);

// Finds the link amplitude-damping epsilon such that the two-qubit circuit
// [X(sender); bell_link] simulated exactly under `noise` reaches the target
// Bell fidelity. Returns 0 when decoherence alone is already below target.
double calibrate_link_epsilon(const NoiseModel& two_qubit_noise, double bell_fidelity_target);

// Ideal statevector simulation (noise-free, links as their ideal unitaries).
StateVector simulate_statevector(const Circuit& c);

// Exact density-matrix propagation of the noisy circuit (<= 6 qubits).
DensityMatrix simulate_density(const Circuit& c, const NoiseModel& noise);

struct ShotRecord {
    std::map<std::uint64_t, std::int64_t> counts; // observed bitstrings
    std::int64_t shots = 0;
    std::uint64_t seed = 0;

    void merge(const ShotRecord& other);
};

struct TrajectoryResult {
    ShotRecord record;
    std::optional<Matrix> averaged_rho; // when requested and <= 6 qubits
};

struct TrajectoryOptions {
    int n_trajectories = 1;
    int shots_per_trajectory = 1;
    std::uint64_t seed = 0;
    bool average_rho = false;
    int threads = 1;
};

// Monte Carlo wavefunction sampling of the noisy circuit. Trajectory k draws
// its randomness from substream (seed, k), so results are bit-reproducible
// for a fixed seed regardless of thread count.
TrajectoryResult simulate_trajectories(const Circuit& c, const NoiseModel& noise,
                                       const TrajectoryOptions& opts);

// GHZ protocol of the five-module processor. Steps I..IV entangle 4, 6, 10
// and 12 qubits. The exact qubit-to-gate assignment is a repo default; the
// receiver side of the entangling link gets a local X so every step targets
// the standard (|0...0> + |1...1>)/sqrt2 form.
struct GhzLayout {
    struct Link {
        std::string id;
        std::string sender, receiver;
        int mode_m = 0;
        double bell_fidelity_target = 1.0; // used to calibrate epsilon
    };
    Link link_ab{"A-B", "Q1A", "Q3B", 11, 0.989};
    Link link_ae{"A-E", "Q4A", "Q1E", 10, 0.991};

    // fan-out CNOTs per step (control, target), applied in parallel pairs
    std::vector<std::pair<std::string, std::string>> step1{{"Q1A", "Q3A"}, {"Q3B", "Q2B"}};
    std::vector<std::pair<std::string, std::string>> step2{{"Q3A", "Q4A"}, {"Q2B", "Q1B"}};
    std::vector<std::pair<std::string, std::string>> step3a{{"Q1E", "Q2E"}, {"Q3A", "Q2A"}};
    std::vector<std::pair<std::string, std::string>> step3b{{"Q1E", "Q3E"}, {"Q2E", "Q4E"}};
    std::vector<std::pair<std::string, std::string>> step4{{"Q1A", "Q4A"}, {"Q3B", "Q4B"}};
};

struct GhzCircuit {
    Circuit circuit;
    std::vector<int> members; // indices of the qubits forming the GHZ state
};

GhzCircuit build_ghz_circuit(int step, const GhzLayout& layout = {});

// (|0...0> + |1...1>)/sqrt2 on n qubits.
StateVector ghz_state(int n_qubits);

// Exact parity expectation <(x)_q (cos g X_q + sin g Y_q)> on a pure state.
double parity_expectation(const StateVector& psi, double gamma);

// Parity from a shot record taken after the gamma prerotations, optionally
// readout-corrected through the per-qubit confusions (weighted parity).
double parity_expectation(const ShotRecord& record, int n_qubits);
double parity_expectation_corrected(const ShotRecord& record,
                                    const std::vector<tomo::ConfusionMatrix>& confusions);

// Prerotation axis for measuring cos(g) X + sin(g) Y via Z readout:
// an equatorial pi/2 rotation about axis phi = gamma - pi/2.
Gate parity_prerotation(int qubit, double gamma);

struct GhzEstimate {
    double fidelity = 0.0;
    double rho_offdiag = 0.0; // |rho_{1...1,0...0}|
    double phi0 = 0.0;
};

// F_N = (P_00 + P_11 + 2|rho_offdiag|)/2, the off-diagonal magnitude taken
// from the frequency-N Fourier component of the parity oscillation. The
// gamma grid must hold >= 2N+1 uniform points on [0, 2pi).
GhzEstimate estimate_ghz_fidelity(double p_all0, double p_all1,
                                  const std::vector<double>& gammas,
                                  const std::vector<double>& parities, int n_ghz);

struct GhzExperiment {
    int step = 1;
    GhzLayout layout;
    int n_trajectories = 2000;
    int shots_per_trajectory = 2;
    int gamma_points = 60;
    std::uint64_t seed = 1;
    int threads = 1;
    bool readout_noise = true;
};

struct GhzExperimentResult {
    GhzEstimate estimate;
    double p_all0 = 0.0, p_all1 = 0.0;
    std::vector<double> gammas;
    std::vector<double> parities;
    std::vector<int> members;
    double stderr_fidelity = 0.0; // batch-wise standard error
};

// Full chain: trajectories -> confusion-sampled shots -> readout-corrected
// P_00/P_11 and parity scan -> GHZ fidelity estimate.
GhzExperimentResult run_ghz_experiment(const GhzExperiment& cfg, const NoiseModel& noise);

} // namespace qlink::circuits
