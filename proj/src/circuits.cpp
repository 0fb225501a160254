#include "qlink/circuits.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <future>
#include <numbers>
#include <set>
#include <tuple>

#include "qlink/units.hpp"

namespace qlink::circuits {

namespace {

constexpr cx kI{0.0, 1.0};
constexpr double kPi = std::numbers::pi;

Matrix rotation_matrix(double angle, double phi) {
    // exp(-i angle/2 (cos(phi) X + sin(phi) Y))
    Matrix axis = std::cos(phi) * ops::sigma_x() + std::sin(phi) * ops::sigma_y();
    return std::cos(angle / 2) * ops::identity(2) - kI * std::sin(angle / 2) * axis;
}

Matrix virtual_z_matrix(double angle) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = std::exp(-kI * angle / 2.0);
    m(1, 1) = std::exp(kI * angle / 2.0);
    return m;
}

Matrix cz_matrix() {
    Matrix m = Matrix::Identity(4, 4);
    m(3, 3) = -1.0;
    return m;
}

// basis order |q0 q1>: 00, 01, 10, 11
Matrix bell_link_matrix() {
    Matrix m = Matrix::Identity(4, 4);
    const double s = 1.0 / std::sqrt(2.0);
    m(1, 1) = s;
    m(1, 2) = s;
    m(2, 1) = -s;
    m(2, 2) = s;
    return m;
}

Matrix qst_link_matrix() {
    Matrix m = Matrix::Identity(4, 4);
    m(1, 1) = 0;
    m(2, 2) = 0;
    m(1, 2) = 1.0;
    m(2, 1) = -1.0;
    return m;
}

Matrix gate_unitary_1q(const Gate& g) {
    return g.axis_z ? virtual_z_matrix(g.angle) : rotation_matrix(g.angle, g.phi);
}

Matrix gate_unitary_2q(const Gate& g) {
    switch (g.kind) {
        case Gate::Kind::cz: return cz_matrix();
        case Gate::Kind::bell_link: return bell_link_matrix();
        case Gate::Kind::qst_link: return qst_link_matrix();
        case Gate::Kind::cnot: {
            // (-Y/2 on target) CZ (Y/2 on target)
            const Matrix pre = kron(ops::identity(2), rotation_matrix(-kPi / 2, kPi / 2));
            const Matrix post = kron(ops::identity(2), rotation_matrix(kPi / 2, kPi / 2));
            return post * cz_matrix() * pre;
        }
        default: throw ValidationError("gate_unitary_2q: not a two-qubit gate");
    }
}

// ---- statevector engine ------------------------------------------------

struct SvEngine {
    int n = 0;
    Vector psi;

    explicit SvEngine(int n_qubits) : n(n_qubits) {
        if (n_qubits > 14) throw CapacityError("statevector capacity is 14 qubits");
        psi = Vector::Zero(Eigen::Index{1} << n);
        psi[0] = 1.0;
    }

    Eigen::Index stride(int q) const { return Eigen::Index{1} << (n - 1 - q); }

    void apply_1q(const Matrix& u, int q) {
        const Eigen::Index s = stride(q);
        const Eigen::Index dim = psi.size();
        for (Eigen::Index base = 0; base < dim; ++base) {
            if (base & s) continue;
            const cx a0 = psi[base], a1 = psi[base + s];
            psi[base] = u(0, 0) * a0 + u(0, 1) * a1;
            psi[base + s] = u(1, 0) * a0 + u(1, 1) * a1;
        }
    }

    void apply_2q(const Matrix& u, int qa, int qb) {
        const Eigen::Index sa = stride(qa), sb = stride(qb);
        const Eigen::Index dim = psi.size();
        for (Eigen::Index base = 0; base < dim; ++base) {
            if ((base & sa) || (base & sb)) continue;
            const Eigen::Index i00 = base, i01 = base + sb, i10 = base + sa,
                               i11 = base + sa + sb;
            const cx a00 = psi[i00], a01 = psi[i01], a10 = psi[i10], a11 = psi[i11];
            psi[i00] = u(0, 0) * a00 + u(0, 1) * a01 + u(0, 2) * a10 + u(0, 3) * a11;
            psi[i01] = u(1, 0) * a00 + u(1, 1) * a01 + u(1, 2) * a10 + u(1, 3) * a11;
            psi[i10] = u(2, 0) * a00 + u(2, 1) * a01 + u(2, 2) * a10 + u(2, 3) * a11;
            psi[i11] = u(3, 0) * a00 + u(3, 1) * a01 + u(3, 2) * a10 + u(3, 3) * a11;
        }
    }

    void apply_gate(const Gate& g) {
        switch (g.kind) {
            case Gate::Kind::rotation: apply_1q(gate_unitary_1q(g), g.q0); break;
            case Gate::Kind::measure_all: break;
            default: apply_2q(gate_unitary_2q(g), g.q0, g.q1); break;
        }
    }

    double excited_population(int q) const {
        const Eigen::Index s = stride(q);
        double p = 0.0;
        for (Eigen::Index i = 0; i < psi.size(); ++i)
            if (i & s) p += std::norm(psi[i]);
        return p;
    }

    // trajectory amplitude damping with probability p on qubit q
    void amplitude_damp(int q, double p, Rng& rng) {
        if (p <= 0) return;
        const double pop = excited_population(q);
        const double p_jump = p * pop;
        const Eigen::Index s = stride(q);
        if (pop > 0 && rng.uniform() < p_jump) {
            // jump: the lowered amplitudes replace the bit=0 sector entirely
            const double scale = 1.0 / std::sqrt(pop);
            for (Eigen::Index i = 0; i < psi.size(); ++i) {
                if (i & s) {
                    psi[i - s] = psi[i] * scale;
                    psi[i] = 0.0;
                }
            }
        } else {
            const double keep = std::sqrt(1.0 - p);
            const double renorm = 1.0 / std::sqrt(std::max(1.0 - p_jump, 1e-300));
            for (Eigen::Index i = 0; i < psi.size(); ++i)
                psi[i] = (i & s) ? psi[i] * keep * renorm : psi[i] * renorm;
        }
    }

    void dephase(int q, double p_z, Rng& rng) {
        if (p_z <= 0) return;
        if (rng.uniform() < p_z) {
            const Eigen::Index s = stride(q);
            for (Eigen::Index i = 0; i < psi.size(); ++i)
                if (i & s) psi[i] = -psi[i];
        }
    }

    void depolarize_1q(int q, double p, Rng& rng) {
        if (p <= 0 || rng.uniform() >= p) return;
        switch (rng.integer(4)) {
            case 1: apply_1q(ops::sigma_x(), q); break;
            case 2: apply_1q(ops::sigma_y(), q); break;
            case 3: apply_1q(ops::sigma_z(), q); break;
            default: break;
        }
    }

    void depolarize_2q(int qa, int qb, double p, Rng& rng) {
        if (p <= 0 || rng.uniform() >= p) return;
        const auto pick = [&](int which, int q) {
            switch (which) {
                case 1: apply_1q(ops::sigma_x(), q); break;
                case 2: apply_1q(ops::sigma_y(), q); break;
                case 3: apply_1q(ops::sigma_z(), q); break;
                default: break;
            }
        };
        const auto k = rng.integer(16);
        pick(static_cast<int>(k / 4), qa);
        pick(static_cast<int>(k % 4), qb);
    }

    std::uint64_t sample_bitstring(Rng& rng) const {
        double u = rng.uniform();
        double acc = 0.0;
        for (Eigen::Index i = 0; i < psi.size(); ++i) {
            acc += std::norm(psi[i]);
            if (u < acc) return static_cast<std::uint64_t>(i);
        }
        return static_cast<std::uint64_t>(psi.size() - 1);
    }
};

// ---- exact density engine (<= 6 qubits) ---------------------------------

struct DmEngine {
    int n = 0;
    Matrix rho;

    explicit DmEngine(int n_qubits) : n(n_qubits) {
        if (n_qubits > 6) throw CapacityError("exact density propagation capped at 6 qubits");
        const Eigen::Index dim = Eigen::Index{1} << n;
        rho = Matrix::Zero(dim, dim);
        rho(0, 0) = 1.0;
    }

    Matrix lift_1q(const Matrix& u, int q) const {
        Matrix m = Matrix::Identity(1, 1);
        for (int k = 0; k < n; ++k)
            m = kron(m, k == q ? u : Matrix(ops::identity(2)));
        return m;
    }

    Matrix lift_2q(const Matrix& u, int qa, int qb) const {
        // build via basis mapping to support arbitrary (qa, qb) order
        const Eigen::Index dim = Eigen::Index{1} << n;
        Matrix full = Matrix::Zero(dim, dim);
        const int sa = n - 1 - qa, sb = n - 1 - qb;
        for (Eigen::Index i = 0; i < dim; ++i) {
            const int ia = static_cast<int>((i >> sa) & 1), ib = static_cast<int>((i >> sb) & 1);
            for (int oa = 0; oa < 2; ++oa)
                for (int ob = 0; ob < 2; ++ob) {
                    Eigen::Index j = i & ~((Eigen::Index{1} << sa) | (Eigen::Index{1} << sb));
                    j |= (Eigen::Index{oa} << sa) | (Eigen::Index{ob} << sb);
                    full(j, i) += u(oa * 2 + ob, ia * 2 + ib);
                }
        }
        return full;
    }

    void unitary_1q(const Matrix& u, int q) {
        const Matrix full = lift_1q(u, q);
        rho = full * rho * full.adjoint();
    }

    void unitary_2q(const Matrix& u, int qa, int qb) {
        const Matrix full = lift_2q(u, qa, qb);
        rho = full * rho * full.adjoint();
    }

    void kraus_1q(const std::vector<Matrix>& ks, int q) {
        Matrix out = Matrix::Zero(rho.rows(), rho.cols());
        for (const auto& k : ks) {
            const Matrix full = lift_1q(k, q);
            out += full * rho * full.adjoint();
        }
        rho = std::move(out);
    }

    void amplitude_damp(int q, double p) {
        if (p <= 0) return;
        Matrix k0 = Matrix::Zero(2, 2), k1 = Matrix::Zero(2, 2);
        k0(0, 0) = 1.0;
        k0(1, 1) = std::sqrt(1.0 - p);
        k1(0, 1) = std::sqrt(p);
        kraus_1q({k0, k1}, q);
    }

    void dephase(int q, double p_z) {
        if (p_z <= 0) return;
        kraus_1q({std::sqrt(1.0 - p_z) * ops::identity(2), std::sqrt(p_z) * ops::sigma_z()}, q);
    }

    void depolarize_1q(int q, double p) {
        if (p <= 0) return;
        kraus_1q({std::sqrt(1.0 - 0.75 * p) * ops::identity(2), std::sqrt(p / 4) * ops::sigma_x(),
                  std::sqrt(p / 4) * ops::sigma_y(), std::sqrt(p / 4) * ops::sigma_z()},
                 q);
    }

    void depolarize_2q(int qa, int qb, double p) {
        if (p <= 0) return;
        Matrix acc = Matrix::Zero(rho.rows(), rho.cols());
        const Matrix paulis[4] = {ops::identity(2), ops::sigma_x(), ops::sigma_y(),
                                  ops::sigma_z()};
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                const Matrix full = lift_1q(paulis[a], qa) * lift_1q(paulis[b], qb);
                acc += full * rho * full.adjoint();
            }
        rho = (1.0 - p) * rho + (p / 16.0) * acc;
    }
};

void apply_gate_noise(SvEngine& eng, const Gate& g, const NoiseModel& noise, Rng& rng) {
    const double t = noise.gate_duration(g);
    switch (g.kind) {
        case Gate::Kind::rotation:
            if (!g.axis_z) eng.depolarize_1q(g.q0, noise.p1, rng);
            break;
        case Gate::Kind::cz:
            eng.depolarize_2q(g.q0, g.q1, noise.p2, rng);
            break;
        case Gate::Kind::bell_link: {
            const double eps = noise.gate_epsilon(g);
            eng.amplitude_damp(g.q0, eps, rng);
            eng.amplitude_damp(g.q1, eps, rng);
            break;
        }
        case Gate::Kind::qst_link:
            eng.amplitude_damp(g.q1, noise.gate_epsilon(g), rng);
            break;
        default: break;
    }
    if (g.kind == Gate::Kind::bell_link || g.kind == Gate::Kind::qst_link) return;
    // decoherence attached to the gate's qubits for its duration
    for (int q : g.qubits()) {
        const auto& qn = noise.qubits[q];
        if (t > 0 && qn.t1_s > 0) eng.amplitude_damp(q, 1.0 - std::exp(-t / qn.t1_s), rng);
        if (t > 0 && qn.tphi_s > 0)
            eng.dephase(q, 0.5 * (1.0 - std::exp(-t / qn.tphi_s)), rng);
    }
}

void apply_gate_noise_exact(DmEngine& eng, const Gate& g, const NoiseModel& noise) {
    const double t = noise.gate_duration(g);
    switch (g.kind) {
        case Gate::Kind::rotation:
            if (!g.axis_z) eng.depolarize_1q(g.q0, noise.p1);
            break;
        case Gate::Kind::cz:
            eng.depolarize_2q(g.q0, g.q1, noise.p2);
            break;
        case Gate::Kind::bell_link: {
            const double eps = noise.gate_epsilon(g);
            eng.amplitude_damp(g.q0, eps);
            eng.amplitude_damp(g.q1, eps);
            break;
        }
        case Gate::Kind::qst_link:
            eng.amplitude_damp(g.q1, noise.gate_epsilon(g));
            break;
        default: break;
    }
    if (g.kind == Gate::Kind::bell_link || g.kind == Gate::Kind::qst_link) return;
    for (int q : g.qubits()) {
        const auto& qn = noise.qubits[q];
        if (t > 0 && qn.t1_s > 0) eng.amplitude_damp(q, 1.0 - std::exp(-t / qn.t1_s));
        if (t > 0 && qn.tphi_s > 0) eng.dephase(q, 0.5 * (1.0 - std::exp(-t / qn.tphi_s)));
    }
}

} // namespace

// ---- Gate / Circuit ------------------------------------------------------

Gate Gate::rotation(int q, double angle, double phi) {
    Gate g;
    g.kind = Kind::rotation;
    g.q0 = q;
    g.angle = angle;
    g.phi = phi;
    return g;
}

Gate Gate::virtual_z(int q, double angle) {
    Gate g;
    g.kind = Kind::rotation;
    g.q0 = q;
    g.angle = angle;
    g.axis_z = true;
    return g;
}

Gate Gate::cz_gate(int a, int b) {
    Gate g;
    g.kind = Kind::cz;
    g.q0 = a;
    g.q1 = b;
    return g;
}

Gate Gate::cnot_macro(int control, int target) {
    Gate g;
    g.kind = Kind::cnot;
    g.q0 = control;
    g.q1 = target;
    return g;
}

Gate Gate::bell(int sender, int receiver, std::string link) {
    Gate g;
    g.kind = Kind::bell_link;
    g.q0 = sender;
    g.q1 = receiver;
    g.link_id = std::move(link);
    return g;
}

Gate Gate::qst(int sender, int receiver, std::string link) {
    Gate g;
    g.kind = Kind::qst_link;
    g.q0 = sender;
    g.q1 = receiver;
    g.link_id = std::move(link);
    return g;
}

Gate Gate::measure() {
    Gate g;
    g.kind = Kind::measure_all;
    return g;
}

std::vector<int> Gate::qubits() const {
    if (kind == Kind::measure_all) return {};
    if (kind == Kind::rotation) return {q0};
    return {q0, q1};
}

int Circuit::index_of(const std::string& label) const {
    for (int i = 0; i < n_qubits(); ++i)
        if (qubits[i].label == label) return i;
    throw ValidationError("Circuit: no qubit labeled " + label);
}

void Circuit::validate() const {
    if (qubits.empty()) throw ValidationError("Circuit: no qubits");
    for (const auto& layer : layers) {
        std::set<int> used;
        for (const auto& g : layer) {
            for (int q : g.qubits()) {
                if (q < 0 || q >= n_qubits())
                    throw ValidationError("Circuit: gate qubit index out of range");
                if (!used.insert(q).second)
                    throw ValidationError("Circuit: gates within a layer must be disjoint");
            }
            if (g.kind == Gate::Kind::bell_link || g.kind == Gate::Kind::qst_link) {
                if (qubits[g.q0].module == qubits[g.q1].module)
                    throw ValidationError("Circuit: link gates must join distinct modules");
                if (g.link_id.empty())
                    throw ValidationError("Circuit: link gates need a declared interconnect");
            }
        }
    }
}

Circuit expand_macros(const Circuit& c) {
    c.validate();
    Circuit out;
    out.qubits = c.qubits;
    for (const auto& layer : c.layers) {
        std::vector<Gate> pre, mid, post, other;
        bool has_macro = false;
        for (const auto& g : layer) {
            if (g.kind == Gate::Kind::cnot) {
                has_macro = true;
                pre.push_back(Gate::rotation(g.q1, -kPi / 2, kPi / 2));
                mid.push_back(Gate::cz_gate(g.q0, g.q1));
                post.push_back(Gate::rotation(g.q1, kPi / 2, kPi / 2));
            } else {
                other.push_back(g);
            }
        }
        if (!has_macro) {
            out.layers.push_back(layer);
            continue;
        }
        // non-macro single-qubit gates ride in the first sublayer
        for (const auto& g : other) pre.push_back(g);
        out.layers.push_back(std::move(pre));
        out.layers.push_back(std::move(mid));
        out.layers.push_back(std::move(post));
    }

    // merge consecutive layers holding only disjoint single-qubit gates
    Circuit merged;
    merged.qubits = out.qubits;
    for (const auto& layer : out.layers) {
        auto only_1q = [](const std::vector<Gate>& l) {
            return std::all_of(l.begin(), l.end(),
                               [](const Gate& g) { return g.kind == Gate::Kind::rotation; });
        };
        if (!merged.layers.empty() && only_1q(layer) && only_1q(merged.layers.back())) {
            std::set<int> used;
            for (const auto& g : merged.layers.back()) used.insert(g.q0);
            const bool disjoint = std::all_of(layer.begin(), layer.end(), [&](const Gate& g) {
                return used.find(g.q0) == used.end();
            });
            if (disjoint) {
                auto& back = merged.layers.back();
                back.insert(back.end(), layer.begin(), layer.end());
                continue;
            }
        }
        merged.layers.push_back(layer);
    }
    merged.validate();
    return merged;
}

// ---- noise ----------------------------------------------------------------

void NoiseModel::validate(int n_qubits) const {
    if (static_cast<int>(qubits.size()) != n_qubits)
        throw ValidationError("NoiseModel: need per-qubit noise for every circuit qubit");
    if (p1 < 0 || p1 > 1 || p2 < 0 || p2 > 1)
        throw ValidationError("NoiseModel: probabilities must be in [0,1]");
    for (const auto& [id, eps] : link_epsilon)
        if (eps < 0 || eps > 1)
            throw ValidationError("NoiseModel: link epsilon out of [0,1] for " + id);
    for (const auto& q : qubits)
        if (q.t1_s < 0 || q.tphi_s < 0)
            throw ValidationError("NoiseModel: negative decoherence time");
}

double NoiseModel::gate_duration(const Gate& g) const {
    switch (g.kind) {
        case Gate::Kind::rotation: return g.axis_z ? 0.0 : t_1q_s;
        case Gate::Kind::cz:
        case Gate::Kind::cnot: return t_cz_s;
        case Gate::Kind::bell_link: return t_bell_link_s;
        case Gate::Kind::qst_link: return t_qst_link_s;
        case Gate::Kind::measure_all: return 0.0;
    }
    return 0.0;
}

double NoiseModel::gate_epsilon(const Gate& g) const {
    const auto it = link_epsilon.find(g.link_id);
    return it == link_epsilon.end() ? 0.0 : it->second;
}

NoiseModel noiseless(int n_qubits) {
    NoiseModel nm;
    nm.qubits.resize(n_qubits);
    return nm;
}

double calibrate_depolarizing(double avg_gate_fidelity, int dim) {
    if (avg_gate_fidelity <= 0.0 || avg_gate_fidelity > 1.0)
        throw ValidationError("calibrate_depolarizing: fidelity must be in (0,1]");
    if (dim != 2 && dim != 4)
        throw ValidationError("calibrate_depolarizing: dim must be 2 or 4");
    return (1.0 - avg_gate_fidelity) * dim / (dim - 1);
}

double calibrate_link_epsilon(const NoiseModel& two_qubit_noise, double bell_fidelity_target) {
    if (bell_fidelity_target <= 0.5 || bell_fidelity_target > 1.0)
        throw ValidationError("calibrate_link_epsilon: target must be in (0.5, 1]");

    Circuit c;
    c.qubits = {{"sender", "A"}, {"receiver", "B"}};
    c.layers.push_back({Gate::rotation(0, kPi, 0.0)}); // X prep
    c.layers.push_back({Gate::bell(0, 1, "cal")});

    Vector bell(4);
    bell << 0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0;
    const StateVector target(HilbertSpace({2, 2}), bell);

    auto fidelity_at = [&](double eps) {
        NoiseModel nm = two_qubit_noise;
        nm.link_epsilon["cal"] = eps;
        return fidelity_pure(simulate_density(c, nm), target);
    };

    if (fidelity_at(0.0) <= bell_fidelity_target) return 0.0;
    double lo = 0.0, hi = 0.5;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (fidelity_at(mid) > bell_fidelity_target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ---- simulators -----------------------------------------------------------

StateVector simulate_statevector(const Circuit& c) {
    const Circuit phys = expand_macros(c);
    SvEngine eng(phys.n_qubits());
    for (const auto& layer : phys.layers)
        for (const auto& g : layer) eng.apply_gate(g);
    std::vector<int> dims(phys.n_qubits(), 2);
    return {HilbertSpace(dims), eng.psi, /*normalize=*/true};
}

DensityMatrix simulate_density(const Circuit& c, const NoiseModel& noise) {
    const Circuit phys = expand_macros(c);
    noise.validate(phys.n_qubits());
    DmEngine eng(phys.n_qubits());
    for (const auto& layer : phys.layers) {
        for (const auto& g : layer) {
            switch (g.kind) {
                case Gate::Kind::rotation: eng.unitary_1q(gate_unitary_1q(g), g.q0); break;
                case Gate::Kind::measure_all: break;
                default: eng.unitary_2q(gate_unitary_2q(g), g.q0, g.q1); break;
            }
            apply_gate_noise_exact(eng, g, noise);
        }
    }
    std::vector<int> dims(phys.n_qubits(), 2);
    DensityMatrix::Tolerances tol;
    tol.hermiticity = 1e-9;
    tol.trace = 1e-9;
    tol.min_eigenvalue = -1e-9;
    return {HilbertSpace(dims), 0.5 * (eng.rho + eng.rho.adjoint()), tol};
}

void ShotRecord::merge(const ShotRecord& other) {
    for (const auto& [bits, n] : other.counts) counts[bits] += n;
    shots += other.shots;
}

namespace {

std::uint64_t apply_readout_confusion(std::uint64_t true_bits, int n_qubits,
                                      const NoiseModel& noise, Rng& rng) {
    std::uint64_t observed = 0;
    for (int q = 0; q < n_qubits; ++q) {
        const int bit = static_cast<int>((true_bits >> (n_qubits - 1 - q)) & 1);
        const auto& cm = noise.qubits[q].readout;
        const double p_correct = bit == 0 ? cm.f0 : cm.f1;
        const int obs = (rng.uniform() < p_correct) ? bit : 1 - bit;
        observed |= static_cast<std::uint64_t>(obs) << (n_qubits - 1 - q);
    }
    return observed;
}

void run_trajectory(SvEngine& eng, const Circuit& phys, const NoiseModel& noise, Rng& rng) {
    for (const auto& layer : phys.layers) {
        for (const auto& g : layer) {
            eng.apply_gate(g);
            apply_gate_noise(eng, g, noise, rng);
        }
    }
}

} // namespace

TrajectoryResult simulate_trajectories(const Circuit& c, const NoiseModel& noise,
                                       const TrajectoryOptions& opts) {
    if (opts.n_trajectories < 1)
        throw ValidationError("simulate_trajectories: n_trajectories >= 1");
    if (opts.shots_per_trajectory < 1)
        throw ValidationError("simulate_trajectories: shots_per_trajectory >= 1");
    const Circuit phys = expand_macros(c);
    const int n = phys.n_qubits();
    noise.validate(n);
    const bool want_rho = opts.average_rho && n <= 6;

    // fixed chunking keeps the reduction order independent of thread count
    constexpr int kChunk = 64;
    const int n_chunks = (opts.n_trajectories + kChunk - 1) / kChunk;

    struct ChunkOut {
        ShotRecord record;
        Matrix rho_sum;
    };
    auto run_chunk = [&](int chunk) {
        ChunkOut out;
        if (want_rho) out.rho_sum = Matrix::Zero(Eigen::Index{1} << n, Eigen::Index{1} << n);
        const int lo = chunk * kChunk;
        const int hi = std::min(lo + kChunk, opts.n_trajectories);
        for (int k = lo; k < hi; ++k) {
            Rng rng(Rng::substream(opts.seed, static_cast<std::uint64_t>(k)));
            SvEngine eng(n);
            run_trajectory(eng, phys, noise, rng);
            if (want_rho) out.rho_sum += eng.psi * eng.psi.adjoint();
            for (int s = 0; s < opts.shots_per_trajectory; ++s) {
                const std::uint64_t bits = eng.sample_bitstring(rng);
                const std::uint64_t obs = apply_readout_confusion(bits, n, noise, rng);
                out.record.counts[obs] += 1;
                out.record.shots += 1;
            }
        }
        return out;
    };

    std::vector<ChunkOut> outs(n_chunks);
    const int threads = std::max(1, opts.threads);
    if (threads == 1) {
        for (int chunk = 0; chunk < n_chunks; ++chunk) outs[chunk] = run_chunk(chunk);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t)
            futs.push_back(std::async(std::launch::async, [&]() {
                for (;;) {
                    const int chunk = next.fetch_add(1);
                    if (chunk >= n_chunks) return;
                    outs[chunk] = run_chunk(chunk);
                }
            }));
        for (auto& f : futs) f.get();
    }

    TrajectoryResult result;
    result.record.seed = opts.seed;
    Matrix rho_sum;
    if (want_rho) rho_sum = Matrix::Zero(Eigen::Index{1} << n, Eigen::Index{1} << n);
    for (auto& out : outs) {
        result.record.merge(out.record);
        if (want_rho) rho_sum += out.rho_sum;
    }
    if (want_rho) result.averaged_rho = rho_sum / static_cast<double>(opts.n_trajectories);
    return result;
}

// ---- GHZ protocol ----------------------------------------------------------

namespace {

std::string module_of(const std::string& label) { return label.substr(label.size() - 1); }

} // namespace

GhzCircuit build_ghz_circuit(int step, const GhzLayout& layout) {
    if (step < 1 || step > 4) throw ValidationError("build_ghz_circuit: step must be 1..4");
    if (layout.link_ab.sender.empty() || layout.link_ab.receiver.empty())
        throw ValidationError("build_ghz_circuit: layout is missing the A-B interconnect");
    if (step >= 3 && (layout.link_ae.sender.empty() || layout.link_ae.receiver.empty()))
        throw ValidationError("build_ghz_circuit: steps III/IV need the A-E interconnect");

    // qubit registry in join order
    std::vector<std::string> registry{layout.link_ab.sender, layout.link_ab.receiver};
    auto add = [&](const std::string& label) {
        if (std::find(registry.begin(), registry.end(), label) == registry.end())
            registry.push_back(label);
    };
    auto add_pairs = [&](const std::vector<std::pair<std::string, std::string>>& pairs) {
        for (const auto& [c, t] : pairs) {
            add(c);
            add(t);
        }
    };
    add_pairs(layout.step1);
    if (step >= 2) add_pairs(layout.step2);
    if (step >= 3) {
        add(layout.link_ae.sender);
        add(layout.link_ae.receiver);
        add_pairs(layout.step3a);
        add_pairs(layout.step3b);
    }
    if (step >= 4) add_pairs(layout.step4);

    Circuit c;
    for (const auto& label : registry) c.qubits.push_back({label, module_of(label)});

    const int sender = c.index_of(layout.link_ab.sender);
    const int receiver = c.index_of(layout.link_ab.receiver);
    c.layers.push_back({Gate::rotation(sender, kPi, 0.0)}); // X prep
    c.layers.push_back({Gate::bell(sender, receiver, layout.link_ab.id)});
    // local flip aligns the link's singlet output with the GHZ convention
    c.layers.push_back({Gate::rotation(receiver, kPi, 0.0)});

    auto cnot_layer = [&](const std::vector<std::pair<std::string, std::string>>& pairs) {
        std::vector<Gate> layer;
        for (const auto& [ctrl, tgt] : pairs)
            layer.push_back(Gate::cnot_macro(c.index_of(ctrl), c.index_of(tgt)));
        c.layers.push_back(std::move(layer));
    };
    cnot_layer(layout.step1);
    std::set<std::string> freed;
    if (step >= 2) cnot_layer(layout.step2);
    if (step >= 3) {
        c.layers.push_back({Gate::qst(c.index_of(layout.link_ae.sender),
                                      c.index_of(layout.link_ae.receiver), layout.link_ae.id)});
        freed.insert(layout.link_ae.sender);
        cnot_layer(layout.step3a);
        cnot_layer(layout.step3b);
    }
    if (step >= 4) {
        cnot_layer(layout.step4);
        for (const auto& pair : layout.step4) freed.erase(pair.second);
    }
    c.layers.push_back({Gate::measure()});
    c.validate();

    GhzCircuit out;
    out.circuit = std::move(c);
    for (int q = 0; q < out.circuit.n_qubits(); ++q)
        if (freed.find(out.circuit.qubits[q].label) == freed.end()) out.members.push_back(q);
    return out;
}

StateVector ghz_state(int n_qubits) {
    std::vector<int> dims(n_qubits, 2);
    const HilbertSpace space(dims);
    Vector v = Vector::Zero(space.total_dim());
    v[0] = 1.0 / std::sqrt(2.0);
    v[space.total_dim() - 1] = 1.0 / std::sqrt(2.0);
    return {space, std::move(v)};
}

double parity_expectation(const StateVector& psi, double gamma) {
    const int n = psi.space().subsystem_count();
    Matrix o = std::cos(gamma) * ops::sigma_x() + std::sin(gamma) * ops::sigma_y();
    Vector phi = psi.amplitudes();
    // apply o on every qubit successively
    for (int q = 0; q < n; ++q) {
        const Eigen::Index s = Eigen::Index{1} << (n - 1 - q);
        for (Eigen::Index base = 0; base < phi.size(); ++base) {
            if (base & s) continue;
            const cx a0 = phi[base], a1 = phi[base + s];
            phi[base] = o(0, 0) * a0 + o(0, 1) * a1;
            phi[base + s] = o(1, 0) * a0 + o(1, 1) * a1;
        }
    }
    return std::real(psi.amplitudes().dot(phi));
}

double parity_expectation(const ShotRecord& record, int n_qubits) {
    if (record.shots <= 0) throw ValidationError("parity_expectation: empty record");
    double acc = 0.0;
    for (const auto& [bits, count] : record.counts) {
        int parity = 0;
        for (int q = 0; q < n_qubits; ++q) parity ^= static_cast<int>((bits >> q) & 1);
        acc += (parity ? -1.0 : 1.0) * static_cast<double>(count);
    }
    return acc / static_cast<double>(record.shots);
}

namespace {

double corrected_parity(const ShotRecord& record,
                        const std::vector<tomo::ConfusionMatrix>& confusions,
                        const std::vector<int>& members) {
    if (record.shots <= 0) throw ValidationError("corrected parity: empty record");
    const int n = static_cast<int>(confusions.size());
    // per-qubit +-1 observable pulled back through the inverse confusion map
    std::vector<Eigen::Vector2d> w(n);
    for (int q = 0; q < n; ++q) {
        const Eigen::Matrix2d cinv = confusions[q].inverse();
        // value assigned to observed bit b: sum_s (+-1)_s * Cinv(s, b)
        w[q][0] = cinv(0, 0) - cinv(1, 0);
        w[q][1] = cinv(0, 1) - cinv(1, 1);
    }
    double acc = 0.0;
    for (const auto& [bits, count] : record.counts) {
        double prod = 1.0;
        for (int q : members) {
            const int b = static_cast<int>((bits >> (n - 1 - q)) & 1);
            prod *= w[q][b];
        }
        acc += prod * static_cast<double>(count);
    }
    return acc / static_cast<double>(record.shots);
}

double corrected_all_bit_probability(const ShotRecord& record,
                                     const std::vector<tomo::ConfusionMatrix>& confusions,
                                     const std::vector<int>& members, int target_bit) {
    const int n = static_cast<int>(confusions.size());
    double acc = 0.0;
    for (const auto& [bits, count] : record.counts) {
        double prod = 1.0;
        for (int q : members) {
            const Eigen::Matrix2d cinv = confusions[q].inverse();
            const int b = static_cast<int>((bits >> (n - 1 - q)) & 1);
            prod *= cinv(target_bit, b);
        }
        acc += prod * static_cast<double>(count);
    }
    return acc / static_cast<double>(record.shots);
}

} // namespace

double parity_expectation_corrected(const ShotRecord& record,
                                    const std::vector<tomo::ConfusionMatrix>& confusions) {
    std::vector<int> members(confusions.size());
    for (std::size_t i = 0; i < confusions.size(); ++i) members[i] = static_cast<int>(i);
    return corrected_parity(record, confusions, members);
}

Gate parity_prerotation(int qubit, double gamma) {
    return Gate::rotation(qubit, kPi / 2, gamma - kPi / 2);
}

GhzEstimate estimate_ghz_fidelity(double p_all0, double p_all1,
                                  const std::vector<double>& gammas,
                                  const std::vector<double>& parities, int n_ghz) {
    const int k = static_cast<int>(gammas.size());
    if (k != static_cast<int>(parities.size()))
        throw ValidationError("estimate_ghz_fidelity: grid/sample size mismatch");
    if (k < 2 * n_ghz + 1)
        throw ValidationError("estimate_ghz_fidelity: gamma grid too coarse (aliasing); "
                              "need >= 2N+1 uniform points");
    for (int i = 0; i < k; ++i) {
        const double expected = units::two_pi * i / k;
        if (std::abs(gammas[i] - expected) > 1e-9)
            throw ValidationError("estimate_ghz_fidelity: gamma grid must uniformly cover [0, 2pi)");
    }
    cx a = 0.0;
    for (int i = 0; i < k; ++i)
        a += parities[i] * std::exp(-kI * (static_cast<double>(n_ghz) * gammas[i]));
    a /= static_cast<double>(k);

    GhzEstimate est;
    est.rho_offdiag = std::abs(a);
    est.phi0 = std::arg(a);
    est.fidelity = 0.5 * (p_all0 + p_all1) + est.rho_offdiag;
    return est;
}

GhzExperimentResult run_ghz_experiment(const GhzExperiment& cfg, const NoiseModel& noise) {
    const GhzCircuit ghz = build_ghz_circuit(cfg.step, cfg.layout);
    const Circuit phys = expand_macros(ghz.circuit);
    const int n = phys.n_qubits();
    noise.validate(n);
    const int n_members = static_cast<int>(ghz.members.size());
    if (cfg.gamma_points < 2 * n_members + 1)
        throw ValidationError("run_ghz_experiment: gamma grid too coarse for this step");

    std::vector<double> gammas(cfg.gamma_points);
    for (int i = 0; i < cfg.gamma_points; ++i) gammas[i] = units::two_pi * i / cfg.gamma_points;

    std::vector<tomo::ConfusionMatrix> confusions(n);
    for (int q = 0; q < n; ++q)
        confusions[q] = cfg.readout_noise ? noise.qubits[q].readout : tomo::ConfusionMatrix{};

    NoiseModel effective = noise;
    if (!cfg.readout_noise)
        for (auto& qn : effective.qubits) qn.readout = tomo::ConfusionMatrix{};

    constexpr int kChunk = 64;
    const int n_chunks = (cfg.n_trajectories + kChunk - 1) / kChunk;

    struct ChunkOut {
        ShotRecord measure_all;
        std::vector<ShotRecord> per_gamma;
    };

    auto run_chunk = [&](int chunk) {
        ChunkOut out;
        out.per_gamma.resize(gammas.size());
        const int lo = chunk * kChunk;
        const int hi = std::min(lo + kChunk, cfg.n_trajectories);
        for (int k = lo; k < hi; ++k) {
            Rng rng(Rng::substream(cfg.seed, static_cast<std::uint64_t>(k)));
            SvEngine eng(n);
            run_trajectory(eng, phys, effective, rng);

            for (int s = 0; s < cfg.shots_per_trajectory; ++s) {
                const std::uint64_t bits = eng.sample_bitstring(rng);
                out.measure_all.counts[apply_readout_confusion(bits, n, effective, rng)] += 1;
                out.measure_all.shots += 1;
            }
            for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
                SvEngine rotated = eng;
                for (int q : ghz.members)
                    rotated.apply_1q(gate_unitary_1q(parity_prerotation(q, gammas[gi])), q);
                for (int s = 0; s < cfg.shots_per_trajectory; ++s) {
                    const std::uint64_t bits = rotated.sample_bitstring(rng);
                    out.per_gamma[gi].counts[apply_readout_confusion(bits, n, effective, rng)] += 1;
                    out.per_gamma[gi].shots += 1;
                }
            }
        }
        return out;
    };

    std::vector<ChunkOut> outs(n_chunks);
    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        for (int chunk = 0; chunk < n_chunks; ++chunk) outs[chunk] = run_chunk(chunk);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<int> next{0};
        for (int t = 0; t < threads; ++t)
            futs.push_back(std::async(std::launch::async, [&]() {
                for (;;) {
                    const int chunk = next.fetch_add(1);
                    if (chunk >= n_chunks) return;
                    outs[chunk] = run_chunk(chunk);
                }
            }));
        for (auto& f : futs) f.get();
    }

    // batch-wise estimates give the standard error; pooled data the central value
    GhzExperimentResult result;
    result.members = ghz.members;
    result.gammas = gammas;

    ShotRecord all;
    std::vector<ShotRecord> per_gamma(gammas.size());
    std::vector<double> batch_f;
    const int batches = std::min(10, n_chunks);
    std::vector<ShotRecord> batch_all(batches);
    std::vector<std::vector<ShotRecord>> batch_gamma(batches,
                                                     std::vector<ShotRecord>(gammas.size()));
    for (int chunk = 0; chunk < n_chunks; ++chunk) {
        const int b = chunk % batches;
        all.merge(outs[chunk].measure_all);
        batch_all[b].merge(outs[chunk].measure_all);
        for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
            per_gamma[gi].merge(outs[chunk].per_gamma[gi]);
            batch_gamma[b][gi].merge(outs[chunk].per_gamma[gi]);
        }
    }

    struct Estimate {
        GhzEstimate est;
        double p00 = 0, p11 = 0;
        std::vector<double> parities;
    };
    auto estimate_from = [&](const ShotRecord& rec_all,
                             const std::vector<ShotRecord>& rec_gamma) {
        Estimate e;
        e.p00 = std::clamp(corrected_all_bit_probability(rec_all, confusions, ghz.members, 0),
                           0.0, 1.0);
        e.p11 = std::clamp(corrected_all_bit_probability(rec_all, confusions, ghz.members, 1),
                           0.0, 1.0);
        e.parities.resize(gammas.size());
        for (std::size_t gi = 0; gi < gammas.size(); ++gi)
            e.parities[gi] = corrected_parity(rec_gamma[gi], confusions, ghz.members);
        e.est = estimate_ghz_fidelity(e.p00, e.p11, gammas, e.parities, n_members);
        return e;
    };

    const Estimate pooled = estimate_from(all, per_gamma);
    result.estimate = pooled.est;
    result.p_all0 = pooled.p00;
    result.p_all1 = pooled.p11;
    result.parities = pooled.parities;

    if (batches >= 2) {
        for (int b = 0; b < batches; ++b) {
            if (batch_all[b].shots == 0) continue;
            batch_f.push_back(estimate_from(batch_all[b], batch_gamma[b]).est.fidelity);
        }
        if (batch_f.size() >= 2) {
            double mean = 0.0;
            for (double f : batch_f) mean += f;
            mean /= static_cast<double>(batch_f.size());
            double var = 0.0;
            for (double f : batch_f) var += (f - mean) * (f - mean);
            var /= static_cast<double>(batch_f.size() - 1);
            result.stderr_fidelity = std::sqrt(var / static_cast<double>(batch_f.size()));
        }
    }
    return result;
}

} // namespace qlink::circuits
