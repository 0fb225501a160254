#include "qlink/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qlink/lmfit.hpp"
#include "qlink/ode.hpp"
#include "qlink/units.hpp"

namespace qlink::dynamics {

void RotatingFrameModel::validate() const {
    if (modes.empty()) throw ValidationError("RotatingFrameModel: need >= 1 mode");
    for (const auto& m : modes) {
        if (m.truncation < 2) throw ValidationError("RotatingFrameModel: truncation d >= 2");
        if (m.kappa < 0) throw ValidationError("RotatingFrameModel: kappa >= 0");
        if (m.coupling_scale <= 0)
            throw ValidationError("RotatingFrameModel: coupling_scale > 0");
    }
    if (gamma1_q1 < 0 || gamma_phi_q1 < 0 || gamma1_q2 < 0 || gamma_phi_q2 < 0)
        throw ValidationError("RotatingFrameModel: rates must be >= 0");
    if (thermal_population < 0 || thermal_population >= 0.5)
        throw ValidationError("RotatingFrameModel: thermal population in [0, 0.5)");
}

HilbertSpace RotatingFrameModel::space() const {
    std::vector<int> dims{2};
    for (const auto& m : modes) dims.push_back(m.truncation);
    dims.push_back(2);
    return HilbertSpace(dims);
}

void ControlSchedule::validate() const {
    if (segments.empty()) throw ValidationError("ControlSchedule: no segments");
    for (const auto& s : segments) {
        if (!(s.duration_s > 0)) throw ValidationError("ControlSchedule: durations must be > 0");
        for (double v : {s.values.dw_q1, s.values.dw_q2, s.values.g1, s.values.g2})
            if (!std::isfinite(v)) throw ValidationError("ControlSchedule: setpoints must be finite");
    }
    if (edges == EdgeProfile::raised_cosine && !(ramp_s > 0))
        throw ValidationError("ControlSchedule: ramp time must be > 0");
}

double ControlSchedule::total_duration() const {
    double t = 0.0;
    for (const auto& s : segments) t += s.duration_s;
    if (edges == EdgeProfile::raised_cosine) t += ramp_s * static_cast<double>(segments.size());
    return t;
}

namespace {

Setpoints lerp(const Setpoints& a, const Setpoints& b, double w) {
    Setpoints out;
    out.dw_q1 = a.dw_q1 + (b.dw_q1 - a.dw_q1) * w;
    out.dw_q2 = a.dw_q2 + (b.dw_q2 - a.dw_q2) * w;
    out.g1 = a.g1 + (b.g1 - a.g1) * w;
    out.g2 = a.g2 + (b.g2 - a.g2) * w;
    return out;
}

} // namespace

Setpoints ControlSchedule::at(double t) const {
    const Setpoints zero{};
    if (edges == EdgeProfile::rectangular) {
        double t0 = 0.0;
        for (const auto& s : segments) {
            if (t < t0 + s.duration_s) return s.values;
            t0 += s.duration_s;
        }
        return segments.back().values;
    }
    // raised cosine: [ramp][flat][ramp][flat]...
    const Setpoints* prev = &zero;
    double t0 = 0.0;
    for (const auto& s : segments) {
        if (t < t0 + ramp_s) {
            const double x = (t - t0) / ramp_s;
            const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * x));
            return lerp(*prev, s.values, w);
        }
        t0 += ramp_s;
        if (t < t0 + s.duration_s) return s.values;
        t0 += s.duration_s;
        prev = &s.values;
    }
    return segments.back().values;
}

std::vector<double> ControlSchedule::breakpoints() const {
    std::vector<double> pts{0.0};
    double t = 0.0;
    for (const auto& s : segments) {
        if (edges == EdgeProfile::raised_cosine) {
            t += ramp_s;
            pts.push_back(t);
        }
        t += s.duration_s;
        pts.push_back(t);
    }
    return pts;
}

namespace {

struct ModelOps {
    HilbertSpace space;
    Matrix n_q1, n_q2;                    // number operators of the qubits
    std::vector<Matrix> n_mode;           // per mode
    std::vector<Matrix> swap_q1, swap_q2; // sigma_i a_m^dag + sigma_i^dag a_m
    std::vector<std::pair<double, Matrix>> collapse; // (rate, op)

    explicit ModelOps(const RotatingFrameModel& model) : space(model.space()) {
        const int n_modes = static_cast<int>(model.modes.size());
        const int q2 = model.qubit2_index();
        const Operator sm_q1 = embed({HilbertSpace({2}), ops::sigma_minus()}, 0, space);
        const Operator sm_q2 = embed({HilbertSpace({2}), ops::sigma_minus()}, q2, space);
        n_q1 = sm_q1.entries().adjoint() * sm_q1.entries();
        n_q2 = sm_q2.entries().adjoint() * sm_q2.entries();

        for (int k = 0; k < n_modes; ++k) {
            const int d = model.modes[k].truncation;
            const Operator a =
                embed({HilbertSpace({d}), ops::annihilation(d)}, 1 + k, space);
            n_mode.push_back(a.entries().adjoint() * a.entries());
            swap_q1.push_back(sm_q1.entries() * a.entries().adjoint() +
                              sm_q1.entries().adjoint() * a.entries());
            swap_q2.push_back(sm_q2.entries() * a.entries().adjoint() +
                              sm_q2.entries().adjoint() * a.entries());
            if (model.modes[k].kappa > 0) collapse.emplace_back(model.modes[k].kappa, a.entries());
        }
        if (model.gamma1_q1 > 0) collapse.emplace_back(model.gamma1_q1, sm_q1.entries());
        if (model.gamma1_q2 > 0) collapse.emplace_back(model.gamma1_q2, sm_q2.entries());
        if (model.gamma_phi_q1 > 0)
            collapse.emplace_back(model.gamma_phi_q1 / 2.0,
                                  embed({HilbertSpace({2}), ops::sigma_z()}, 0, space).entries());
        if (model.gamma_phi_q2 > 0)
            collapse.emplace_back(model.gamma_phi_q2 / 2.0,
                                  embed({HilbertSpace({2}), ops::sigma_z()}, q2, space).entries());
    }

    Matrix hamiltonian(const RotatingFrameModel& model, const Setpoints& u) const {
        Matrix h = u.dw_q1 * n_q1 + u.dw_q2 * n_q2;
        for (std::size_t k = 0; k < model.modes.size(); ++k) {
            const auto& m = model.modes[k];
            if (m.detuning_rad != 0.0) h += m.detuning_rad * n_mode[k];
            h += (u.g1 * m.coupling_scale) * swap_q1[k];
            h += (u.g2 * m.coupling_scale * static_cast<double>(m.parity_sign)) * swap_q2[k];
        }
        return h;
    }
};

} // namespace

EvolutionResult evolve_lindblad(const RotatingFrameModel& model, const DensityMatrix& rho0,
                                const ControlSchedule& schedule,
                                const std::vector<double>& sample_times,
                                const EvolveOptions& opts) {
    model.validate();
    schedule.validate();
    if (rho0.space() != model.space())
        throw ValidationError("evolve_lindblad: rho0 space does not match the model");

    const ModelOps mops(model);
    const auto dim = model.space().total_dim();

    // precompute c^dag c for the dissipators
    std::vector<std::pair<double, Matrix>> cdc;
    cdc.reserve(mops.collapse.size());
    for (const auto& [rate, c] : mops.collapse) cdc.emplace_back(rate, Matrix(c.adjoint() * c));

    auto rhs = [&](double t, const ode::State& y) {
        const Eigen::Map<const Matrix> rho(y.data(), dim, dim);
        const Matrix h = mops.hamiltonian(model, schedule.at(t));
        Matrix drho = cx(0, -1) * (h * rho - rho * h);
        for (std::size_t k = 0; k < mops.collapse.size(); ++k) {
            const auto& [rate, c] = mops.collapse[k];
            const auto& [rate2, cc] = cdc[k];
            drho.noalias() += rate * (c * rho * c.adjoint());
            drho.noalias() -= (0.5 * rate) * (cc * rho + rho * cc);
        }
        ode::State out(dim * dim);
        Eigen::Map<Matrix>(out.data(), dim, dim) = drho;
        return out;
    };

    std::vector<double> samples = sample_times;
    std::sort(samples.begin(), samples.end());
    const double t_end = schedule.total_duration();
    if (!samples.empty() && (samples.front() < 0 || samples.back() > t_end + 1e-15))
        throw ValidationError("evolve_lindblad: sample times outside the schedule window");

    EvolutionResult result{
        {}, {}, {}, DensityMatrix(model.space(), Matrix::Identity(dim, dim) / double(dim))};

    auto record = [&](double t, const ode::State& y) {
        const Eigen::Map<const Matrix> rho(y.data(), dim, dim);
        result.times.push_back(t);
        std::vector<double> pops;
        pops.push_back(std::real((mops.n_q1 * rho).trace()));
        for (const auto& nm : mops.n_mode) pops.push_back(std::real((nm * rho).trace()));
        pops.push_back(std::real((mops.n_q2 * rho).trace()));
        result.populations.push_back(std::move(pops));
        if (opts.keep_states) result.sampled_rho.push_back(rho);
    };

    ode::State y(dim * dim);
    Eigen::Map<Matrix>(y.data(), dim, dim) = rho0.entries();

    // integrate piecewise between schedule breakpoints so each segment's
    // Hamiltonian is smooth over every step
    ode::Options oopts;
    oopts.rtol = opts.rtol;
    oopts.atol = opts.atol;
    auto bps = schedule.breakpoints();
    if (bps.back() < t_end) bps.push_back(t_end);
    for (std::size_t b = 0; b + 1 < bps.size(); ++b) {
        std::vector<double> seg_samples;
        for (double ts : samples)
            if (ts >= bps[b] - 1e-15 && ts < bps[b + 1] - 1e-15) seg_samples.push_back(ts);
        if (b + 2 == bps.size()) {
            for (double ts : samples)
                if (ts >= bps[b + 1] - 1e-15) seg_samples.push_back(ts);
        }
        y = ode::integrate(rhs, std::move(y), bps[b], bps[b + 1], seg_samples, record, oopts);
    }

    Eigen::Map<Matrix> rho_final(y.data(), dim, dim);
    Matrix sym = 0.5 * (Matrix(rho_final) + Matrix(rho_final).adjoint());
    DensityMatrix::Tolerances tol;
    tol.hermiticity = 1e-6;
    tol.trace = 1e-6;
    tol.min_eigenvalue = -1e-6;
    result.final_state = DensityMatrix(model.space(), std::move(sym), tol);
    return result;
}

DensityMatrix excited_sender_state(const RotatingFrameModel& model) {
    model.validate();
    const HilbertSpace space = model.space();
    std::vector<int> levels(space.subsystem_count(), 0);
    levels[0] = 1;
    Matrix rho = Matrix::Zero(space.total_dim(), space.total_dim());
    if (model.thermal_population == 0.0) {
        rho(space.flat_index(levels), space.flat_index(levels)) = 1.0;
        return {space, std::move(rho)};
    }
    // product of per-subsystem thermal mixtures, sender inverted
    const double p = model.thermal_population;
    Matrix acc = Matrix::Identity(1, 1);
    for (int k = 0; k < space.subsystem_count(); ++k) {
        const int d = space.dim(k);
        Matrix sub = Matrix::Zero(d, d);
        if (k == 0) {
            sub(1, 1) = 1.0 - p;
            sub(0, 0) = p;
        } else {
            sub(0, 0) = 1.0 - p;
            sub(1, 1) = p;
        }
        acc = kron(acc, sub);
    }
    return {space, std::move(acc)};
}

DensityMatrix ground_state(const RotatingFrameModel& model) {
    const HilbertSpace space = model.space();
    std::vector<int> levels(space.subsystem_count(), 0);
    return DensityMatrix::from_pure(StateVector::basis(space, levels));
}

ChevronResult vacuum_rabi_chevron(const RotatingFrameModel& model, double g0_rad,
                                  const std::vector<double>& detunings_rad,
                                  const std::vector<double>& times_s) {
    if (detunings_rad.empty() || times_s.empty())
        throw ValidationError("vacuum_rabi_chevron: grids must be non-empty");
    ChevronResult out;
    out.detunings_rad = detunings_rad;
    out.times_s = times_s;
    const double t_max = *std::max_element(times_s.begin(), times_s.end());
    for (double dw : detunings_rad) {
        ControlSchedule sched;
        sched.segments.push_back({t_max + 1e-12, Setpoints{dw, 0.0, g0_rad, 0.0}});
        const auto evo = evolve_lindblad(model, excited_sender_state(model), sched, times_s);
        std::vector<double> row;
        row.reserve(evo.populations.size());
        for (const auto& pops : evo.populations) row.push_back(pops.front());
        out.p1.push_back(std::move(row));
    }
    return out;
}

RingdownResult t1r_ringdown(const RotatingFrameModel& model, double g_swap_rad,
                            const std::vector<double>& wait_times_s) {
    if (wait_times_s.empty()) throw ValidationError("t1r_ringdown: empty wait grid");
    if (g_swap_rad <= 0) throw ValidationError("t1r_ringdown: g must be > 0");
    const double t_swap = std::numbers::pi / (2.0 * g_swap_rad);

    RingdownResult out;
    out.wait_times_s = wait_times_s;
    for (double tau_r : wait_times_s) {
        ControlSchedule sched; // rectangular swap-in / idle / swap-out
        sched.segments.push_back({t_swap, Setpoints{0, 0, g_swap_rad, 0}});
        if (tau_r > 0) sched.segments.push_back({tau_r, Setpoints{}});
        sched.segments.push_back({t_swap, Setpoints{0, 0, g_swap_rad, 0}});
        const auto evo =
            evolve_lindblad(model, excited_sender_state(model), sched, {sched.total_duration()});
        out.p1.push_back(evo.populations.back().front());
    }

    Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(wait_times_s.data(),
                                                          static_cast<long>(wait_times_s.size()));
    Eigen::VectorXd y =
        Eigen::Map<const Eigen::VectorXd>(out.p1.data(), static_cast<long>(out.p1.size()));
    const auto fit = fit::fit_exponential_decay(t, y, /*tau_cap=*/10.0);
    out.t1r_fitted_s = fit.tau;
    return out;
}

namespace {

DensityMatrix two_qubit_state(const RotatingFrameModel& model, const DensityMatrix& rho_full) {
    std::vector<int> keep{0, model.qubit2_index()};
    Matrix reduced = partial_trace_raw(rho_full.entries(), rho_full.space(), keep);
    DensityMatrix::Tolerances tol;
    tol.hermiticity = 1e-6;
    tol.trace = 1e-6;
    tol.min_eigenvalue = -1e-6;
    return {HilbertSpace({2, 2}), std::move(reduced), tol};
}

} // namespace

DensityMatrix qst_protocol(const RotatingFrameModel& model, double g0_rad, double tau_s,
                           const DensityMatrix& rho0, EdgeProfile edges, double ramp_s) {
    if (g0_rad <= 0) throw ValidationError("qst_protocol: g0 must be > 0");
    ControlSchedule sched;
    sched.edges = edges;
    sched.ramp_s = ramp_s;
    if (tau_s > 0) sched.segments.push_back({tau_s, Setpoints{0, 0, g0_rad, g0_rad}});
    // trailing off-segment so ramped pulses close before the state is read out
    sched.segments.push_back({edges == EdgeProfile::raised_cosine ? ramp_s : 1e-12, Setpoints{}});
    const auto evo = evolve_lindblad(model, rho0, sched, {});
    return two_qubit_state(model, evo.final_state);
}

BellResult bell_protocol(const RotatingFrameModel& model, double g0_rad, double tau_b_s,
                         EdgeProfile edges, double ramp_s) {
    if (g0_rad <= 0) throw ValidationError("bell_protocol: g0 must be > 0");
    const double t_swap = std::numbers::pi / (2.0 * g0_rad);
    const bool ramped = edges == EdgeProfile::raised_cosine;
    // area calibration: with ramps, each stated stage time is the effective
    // interaction time, so the flat-top is shortened by one ramp
    const double stage1 = ramped ? tau_b_s - ramp_s : tau_b_s;
    const double stage2 = ramped ? t_swap - ramp_s : t_swap;
    if (stage1 <= 0 || stage2 <= 0)
        throw ValidationError("bell_protocol: stage durations must exceed the ramp time");

    ControlSchedule sched;
    sched.edges = edges;
    sched.ramp_s = ramp_s;
    sched.segments.push_back({stage1, Setpoints{0, 0, g0_rad, 0}});
    sched.segments.push_back({stage2, Setpoints{0, 0, 0, g0_rad}});
    if (ramped) sched.segments.push_back({ramp_s, Setpoints{}});

    const auto evo = evolve_lindblad(model, excited_sender_state(model), sched, {});
    BellResult out{two_qubit_state(model, evo.final_state), 0.0, 0.0};

    // basis order |q1 q2>: coherence between |01> (index 1) and |10> (index 2)
    const cx coh = out.rho.entries()(1, 2);
    out.phase = std::arg(coh == cx(0) ? cx(1) : coh);
    Vector bell(4);
    bell << 0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0;
    out.fidelity = fidelity_pure(out.rho, StateVector(HilbertSpace({2, 2}), bell));
    return out;
}

} // namespace qlink::dynamics
