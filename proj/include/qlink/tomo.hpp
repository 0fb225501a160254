#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qlink/hilbert.hpp"
#include "qlink/rng.hpp"

// Measurement analysis: readout-error mitigation, constrained state and
// process tomography, and fidelity metrics.
//
// Measurement convention (pinned by the tests): a prerotation G followed by
// Z-basis readout measures G^dag Z G, so the gate set {I, X/2, Y/2} measures
// {Z, Y, -X}. Settings enumerate prerotations lexicographically with qubit 0
// as the most significant digit and per-qubit digit order (I, X/2, Y/2).
namespace qlink::tomo {

enum class Prerotation { I = 0, X2 = 1, Y2 = 2 };

struct TomographySettings {
    int shots = 3000;               // per setting; 6000 for 12-qubit runs
    bool exact_expectations = true; // false: multinomial sampling of outcomes
};

// Per-qubit readout confusion: columns are the true state, rows the observed
// one, diag (F0, F1), off-diag (1-F1, 1-F0).
struct ConfusionMatrix {
    double f0 = 1.0;
    double f1 = 1.0;

    Eigen::Matrix2d matrix() const;
    Eigen::Matrix2d inverse() const; // throws when F0 + F1 <= 1 (singular)
};

// chi matrix in the {I, X, Y, Z} operator basis; Hermitian, unit trace, PSD.
struct ProcessMatrix {
    Matrix chi; // 4x4

    explicit ProcessMatrix(Matrix chi_in);
};

using Probabilities = Eigen::VectorXd; // over 2^N bitstrings, qubit 0 = MSB

// All 3^N prerotation settings in the canonical order.
std::vector<std::vector<Prerotation>> all_settings(int n_qubits);

Matrix prerotation_unitary(Prerotation g);

// Outcome probabilities of Z-readout after applying the setting's
// prerotations to rho.
Probabilities measurement_probabilities(const DensityMatrix& rho,
                                        const std::vector<Prerotation>& setting);

// Pushes probabilities through the tensor-product confusion map (true -> observed).
Probabilities apply_confusion(const Probabilities& p,
                              const std::vector<ConfusionMatrix>& confusions);

// Multinomial sample of `shots` outcomes; returns empirical probabilities.
Probabilities sample_probabilities(const Probabilities& p, int shots, Rng& rng);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

// Inverse confusion map followed by simplex projection.
Probabilities readout_correct(const Probabilities& observed,
                              const std::vector<ConfusionMatrix>& confusions);

// Linear inversion over corrected outcome probabilities for all 3^N settings
// (canonical order), then eigenvalue projection onto the PSD trace-1 cone.
DensityMatrix state_tomography(const std::vector<Probabilities>& outcome_per_setting,
                               const std::vector<ConfusionMatrix>& confusions);

// Convenience: simulate the full tomography experiment for a known state.
DensityMatrix tomography_experiment(const DensityMatrix& rho,
                                    const std::vector<ConfusionMatrix>& confusions,
                                    const TomographySettings& settings, Rng& rng);

// The four process-tomography input states |0>, (|0>-i|1>)/sqrt2,
// (|0>+|1>)/sqrt2, |1> on one qubit.
std::vector<StateVector> process_input_states();

// Reconstructs chi from the reconstructed outputs for the four fixed inputs,
// then projects to Hermitian-PSD-unit-trace.
ProcessMatrix process_tomography(const std::vector<DensityMatrix>& outputs);

ProcessMatrix identity_process();

// Re Tr(chi * chi_ideal), clipped to [0,1] within 1e-9 slack.
double process_fidelity(const ProcessMatrix& chi, const ProcessMatrix& chi_ideal);

struct RepeatStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> values;
};

// Runs a seedable experiment n times and reports mean and sample stddev.
RepeatStats bootstrap_repeats(const std::function<double(std::uint64_t)>& experiment,
                              int n_repeats, std::uint64_t base_seed);

} // namespace qlink::tomo
