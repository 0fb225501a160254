#include "qlink/tomo.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qlink::tomo {

namespace {

constexpr cx kI{0.0, 1.0};

int checked_n_qubits(Eigen::Index size) {
    int n = 0;
    while ((Eigen::Index{1} << n) < size) ++n;
    if ((Eigen::Index{1} << n) != size)
        throw ValidationError("tomo: probability vector length must be a power of 2");
    return n;
}

Matrix pauli(int which) {
    switch (which) {
        case 0: return ops::identity(2);
        case 1: return ops::sigma_x();
        case 2: return ops::sigma_y();
        default: return ops::sigma_z();
    }
}

// eigenvalue projection onto {lambda >= 0, sum lambda = 1}
Matrix project_to_density_cone(const Matrix& m) {
    const Matrix herm = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
    Eigen::VectorXd lam = es.eigenvalues();
    const Eigen::VectorXd lam_proj = project_to_simplex(lam);
    return es.eigenvectors() * lam_proj.asDiagonal() * es.eigenvectors().adjoint();
}

} // namespace

Eigen::Matrix2d ConfusionMatrix::matrix() const {
    Eigen::Matrix2d m;
    m << f0, 1.0 - f1, 1.0 - f0, f1;
    return m;
}

Eigen::Matrix2d ConfusionMatrix::inverse() const {
    const double det = f0 + f1 - 1.0;
    if (det <= 0.0)
        throw ValidationError("ConfusionMatrix: F0 + F1 <= 1, correction is singular");
    Eigen::Matrix2d inv;
    inv << f1, f1 - 1.0, f0 - 1.0, f0;
    return inv / det;
}

ProcessMatrix::ProcessMatrix(Matrix chi_in) : chi(std::move(chi_in)) {
    if (chi.rows() != 4 || chi.cols() != 4)
        throw ValidationError("ProcessMatrix: chi must be 4x4");
    if ((chi - chi.adjoint()).cwiseAbs().maxCoeff() > 1e-8)
        throw ValidationError("ProcessMatrix: chi not Hermitian");
    if (std::abs(chi.trace() - cx(1.0)) > 1e-6)
        throw ValidationError("ProcessMatrix: trace(chi) != 1");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (chi + chi.adjoint()),
                                             Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw ValidationError("ProcessMatrix: chi not PSD");
}

std::vector<std::vector<Prerotation>> all_settings(int n_qubits) {
    if (n_qubits < 1) throw ValidationError("all_settings: need >= 1 qubit");
    std::size_t total = 1;
    for (int q = 0; q < n_qubits; ++q) total *= 3;
    std::vector<std::vector<Prerotation>> out;
    out.reserve(total);
    for (std::size_t s = 0; s < total; ++s) {
        std::vector<Prerotation> setting(n_qubits);
        std::size_t rem = s;
        for (int q = n_qubits - 1; q >= 0; --q) {
            setting[q] = static_cast<Prerotation>(rem % 3);
            rem /= 3;
        }
        out.push_back(std::move(setting));
    }
    return out;
}

Matrix prerotation_unitary(Prerotation g) {
    Matrix m(2, 2);
    const double s = 1.0 / std::sqrt(2.0);
    switch (g) {
        case Prerotation::I: return ops::identity(2);
        case Prerotation::X2:
            m << s, -kI * s, -kI * s, s;
            return m;
        case Prerotation::Y2:
            m << s, -s, s, s;
            return m;
    }
    throw ValidationError("prerotation_unitary: bad gate");
}

Probabilities measurement_probabilities(const DensityMatrix& rho,
                                        const std::vector<Prerotation>& setting) {
    const int n = static_cast<int>(setting.size());
    if (rho.space().total_dim() != (Eigen::Index{1} << n))
        throw ValidationError("measurement_probabilities: setting size does not match space");
    Matrix u = Matrix::Identity(1, 1);
    for (int q = 0; q < n; ++q) u = kron(u, prerotation_unitary(setting[q]));
    const Matrix rotated = u * rho.entries() * u.adjoint();
    Probabilities p(rotated.rows());
    for (Eigen::Index i = 0; i < rotated.rows(); ++i)
        p[i] = std::max(0.0, std::real(rotated(i, i)));
    const double tot = p.sum();
    if (tot > 0) p /= tot;
    return p;
}

Probabilities apply_confusion(const Probabilities& p,
                              const std::vector<ConfusionMatrix>& confusions) {
    const int n = checked_n_qubits(p.size());
    if (static_cast<int>(confusions.size()) != n)
        throw ValidationError("apply_confusion: need one confusion matrix per qubit");
    Probabilities cur = p;
    for (int q = 0; q < n; ++q) {
        const Eigen::Matrix2d c = confusions[q].matrix();
        Probabilities next = Probabilities::Zero(cur.size());
        const Eigen::Index stride = Eigen::Index{1} << (n - 1 - q);
        for (Eigen::Index i = 0; i < cur.size(); ++i) {
            const int bit = static_cast<int>((i / stride) & 1);
            const Eigen::Index base = i - bit * stride;
            next[base] += c(0, bit) * cur[i];
            next[base + stride] += c(1, bit) * cur[i];
        }
        cur = std::move(next);
    }
    return cur;
}

Probabilities sample_probabilities(const Probabilities& p, int shots, Rng& rng) {
    if (shots < 1) throw ValidationError("sample_probabilities: shots >= 1");
    Eigen::VectorXd cdf(p.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += std::max(0.0, p[i]);
        cdf[i] = acc;
    }
    Probabilities counts = Probabilities::Zero(p.size());
    for (int s = 0; s < shots; ++s) {
        const double u = rng.uniform() * acc;
        const auto it = std::lower_bound(cdf.data(), cdf.data() + cdf.size(), u);
        Eigen::Index idx = it - cdf.data();
        if (idx >= p.size()) idx = p.size() - 1;
        counts[idx] += 1.0;
    }
    return counts / static_cast<double>(shots);
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, theta = 0.0;
    int k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        css += u[i];
        const double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0) {
            k = static_cast<int>(i + 1);
            theta = t;
        }
    }
    if (k == 0) { // all mass below threshold; fall back to uniform
        return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    }
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = std::max(v[i] - theta, 0.0);
    return out;
}

Probabilities readout_correct(const Probabilities& observed,
                              const std::vector<ConfusionMatrix>& confusions) {
    const int n = checked_n_qubits(observed.size());
    if (static_cast<int>(confusions.size()) != n)
        throw ValidationError("readout_correct: need one confusion matrix per qubit");
    if (std::abs(observed.sum() - 1.0) > 1e-6)
        throw ValidationError("readout_correct: probabilities must sum to 1");
    Probabilities cur = observed;
    for (int q = 0; q < n; ++q) {
        const Eigen::Matrix2d cinv = confusions[q].inverse();
        Probabilities next = Probabilities::Zero(cur.size());
        const Eigen::Index stride = Eigen::Index{1} << (n - 1 - q);
        for (Eigen::Index i = 0; i < cur.size(); ++i) {
            const int bit = static_cast<int>((i / stride) & 1);
            const Eigen::Index base = i - bit * stride;
            next[base] += cinv(0, bit) * cur[i];
            next[base + stride] += cinv(1, bit) * cur[i];
        }
        cur = std::move(next);
    }
    if ((cur.array() < 0.0).any() || std::abs(cur.sum() - 1.0) > 1e-12)
        cur = project_to_simplex(cur);
    return cur;
}

DensityMatrix state_tomography(const std::vector<Probabilities>& outcome_per_setting,
                               const std::vector<ConfusionMatrix>& confusions) {
    const int n = static_cast<int>(confusions.size());
    std::size_t expected = 1;
    for (int q = 0; q < n; ++q) expected *= 3;
    if (outcome_per_setting.size() != expected)
        throw ValidationError("state_tomography: need all 3^N settings in canonical order");
    const Eigen::Index dim = Eigen::Index{1} << n;
    for (const auto& p : outcome_per_setting)
        if (p.size() != dim)
            throw ValidationError("state_tomography: outcome vector length mismatch");

    std::vector<Probabilities> corrected;
    corrected.reserve(expected);
    for (const auto& p : outcome_per_setting) corrected.push_back(readout_correct(p, confusions));

    // designated setting per Pauli string: Z->I, Y->X/2, X->Y/2 (sign -1 per X)
    Matrix rho = Matrix::Zero(dim, dim);
    std::vector<int> string(n, 0); // 0=I 1=X 2=Y 3=Z
    const std::size_t total_paulis = std::size_t{1} << (2 * n);
    for (std::size_t sidx = 0; sidx < total_paulis; ++sidx) {
        std::size_t rem = sidx;
        for (int q = n - 1; q >= 0; --q) {
            string[q] = static_cast<int>(rem & 3);
            rem >>= 2;
        }
        // setting index in base 3 and the measurement sign
        std::size_t setting = 0;
        double sign = 1.0;
        for (int q = 0; q < n; ++q) {
            int digit = 0; // prerotation I
            if (string[q] == 1) { // X measured via Y/2 with sign -1
                digit = 2;
                sign = -sign;
            } else if (string[q] == 2) { // Y via X/2
                digit = 1;
            }
            setting = setting * 3 + static_cast<std::size_t>(digit);
        }
        const Probabilities& p = corrected[setting];
        double expect = 0.0;
        for (Eigen::Index b = 0; b < dim; ++b) {
            int par = 0;
            for (int q = 0; q < n; ++q)
                if (string[q] != 0) par ^= static_cast<int>((b >> (n - 1 - q)) & 1);
            expect += (par ? -1.0 : 1.0) * p[b];
        }
        expect *= sign;

        Matrix term = Matrix::Identity(1, 1);
        for (int q = 0; q < n; ++q) term = kron(term, pauli(string[q]));
        rho += expect * term;
    }
    rho /= static_cast<double>(dim);

    Matrix projected = project_to_density_cone(rho);
    std::vector<int> dims(n, 2);
    return {HilbertSpace(dims), std::move(projected)};
}

DensityMatrix tomography_experiment(const DensityMatrix& rho,
                                    const std::vector<ConfusionMatrix>& confusions,
                                    const TomographySettings& settings, Rng& rng) {
    const int n = static_cast<int>(confusions.size());
    std::vector<Probabilities> outcomes;
    for (const auto& setting : all_settings(n)) {
        Probabilities p = measurement_probabilities(rho, setting);
        p = apply_confusion(p, confusions);
        if (!settings.exact_expectations) p = sample_probabilities(p, settings.shots, rng);
        outcomes.push_back(std::move(p));
    }
    return state_tomography(outcomes, confusions);
}

std::vector<StateVector> process_input_states() {
    const HilbertSpace q({2});
    const double s = 1.0 / std::sqrt(2.0);
    Vector zero(2), minus_i(2), plus(2), one(2);
    zero << 1, 0;
    minus_i << s, -kI * s;
    plus << s, s;
    one << 0, 1;
    return {StateVector(q, zero), StateVector(q, minus_i), StateVector(q, plus),
            StateVector(q, one)};
}

ProcessMatrix process_tomography(const std::vector<DensityMatrix>& outputs) {
    if (outputs.size() != 4)
        throw ValidationError("process_tomography: need outputs for the 4 fixed inputs");
    const auto inputs = process_input_states();

    // E(rho) = sum_{mn} chi_mn P_m rho P_n^dag, 16 complex unknowns
    Eigen::MatrixXcd a(16, 16);
    Eigen::VectorXcd b(16);
    int row = 0;
    for (int k = 0; k < 4; ++k) {
        const Matrix rho_in =
            inputs[k].amplitudes() * inputs[k].amplitudes().adjoint();
        const Matrix& rho_out = outputs[k].entries();
        for (int oi = 0; oi < 2; ++oi)
            for (int oj = 0; oj < 2; ++oj) {
                for (int m = 0; m < 4; ++m)
                    for (int nn = 0; nn < 4; ++nn)
                        a(row, m * 4 + nn) = (pauli(m) * rho_in * pauli(nn).adjoint())(oi, oj);
                b(row) = rho_out(oi, oj);
                ++row;
            }
    }
    const Eigen::VectorXcd chi_vec = a.colPivHouseholderQr().solve(b);
    Matrix chi(4, 4);
    for (int m = 0; m < 4; ++m)
        for (int nn = 0; nn < 4; ++nn) chi(m, nn) = chi_vec(m * 4 + nn);

    return ProcessMatrix(project_to_density_cone(chi));
}

ProcessMatrix identity_process() {
    Matrix chi = Matrix::Zero(4, 4);
    chi(0, 0) = 1.0;
    return ProcessMatrix(std::move(chi));
}

double process_fidelity(const ProcessMatrix& chi, const ProcessMatrix& chi_ideal) {
    double f = std::real((chi.chi * chi_ideal.chi).trace());
    if (f < 0.0) {
        if (f < -1e-9) throw ValidationError("process_fidelity: below 0 beyond tolerance");
        f = 0.0;
    }
    if (f > 1.0) {
        if (f > 1.0 + 1e-9) throw ValidationError("process_fidelity: above 1 beyond tolerance");
        f = 1.0;
    }
    return f;
}

RepeatStats bootstrap_repeats(const std::function<double(std::uint64_t)>& experiment,
                              int n_repeats, std::uint64_t base_seed) {
    if (n_repeats < 2) throw ValidationError("bootstrap_repeats: need >= 2 repeats");
    RepeatStats stats;
    stats.values.reserve(n_repeats);
    for (int k = 0; k < n_repeats; ++k)
        stats.values.push_back(experiment(Rng::substream(base_seed, k)));
    const double mean =
        std::accumulate(stats.values.begin(), stats.values.end(), 0.0) / n_repeats;
    double var = 0.0;
    for (double v : stats.values) var += (v - mean) * (v - mean);
    stats.mean = mean;
    stats.stddev = std::sqrt(var / (n_repeats - 1));
    return stats;
}

} // namespace qlink::tomo
