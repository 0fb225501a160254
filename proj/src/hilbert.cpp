#include "qlink/hilbert.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace qlink {

HilbertSpace::HilbertSpace(std::vector<int> subsystem_dims) : dims_(std::move(subsystem_dims)) {
    if (dims_.empty()) throw ValidationError("HilbertSpace: no subsystems");
    total_dim_ = 1;
    for (int d : dims_) {
        if (d < 2) throw ValidationError("HilbertSpace: subsystem dim must be >= 2");
        total_dim_ *= d;
        if (total_dim_ > kDimCap)
            throw CapacityError("HilbertSpace: total dimension exceeds cap " +
                                std::to_string(kDimCap));
    }
}

int HilbertSpace::dim(int subsystem) const {
    if (subsystem < 0 || subsystem >= subsystem_count())
        throw ValidationError("HilbertSpace: subsystem index out of range");
    return dims_[subsystem];
}

std::int64_t HilbertSpace::flat_index(const std::vector<int>& levels) const {
    if (static_cast<int>(levels.size()) != subsystem_count())
        throw ValidationError("flat_index: wrong number of levels");
    std::int64_t idx = 0;
    for (int k = 0; k < subsystem_count(); ++k) {
        if (levels[k] < 0 || levels[k] >= dims_[k])
            throw ValidationError("flat_index: level out of range");
        idx = idx * dims_[k] + levels[k];
    }
    return idx;
}

Operator::Operator(HilbertSpace space, Matrix entries, OpUnits units)
    : space_(std::move(space)), m_(std::move(entries)), units_(units) {
    if (m_.rows() != m_.cols() || m_.rows() != space_.total_dim())
        throw ValidationError("Operator: entries must be square with side = space dim");
}

StateVector::StateVector(HilbertSpace space, Vector amplitudes, bool normalize)
    : space_(std::move(space)), v_(std::move(amplitudes)) {
    if (v_.size() != space_.total_dim())
        throw ValidationError("StateVector: amplitude count must equal space dim");
    const double n = v_.norm();
    if (normalize) {
        if (n == 0.0) throw ValidationError("StateVector: cannot normalize zero vector");
        v_ /= n;
    } else if (std::abs(n - 1.0) > 1e-10) {
        throw ValidationError("StateVector: amplitudes not normalized (|norm-1| = " +
                              std::to_string(std::abs(n - 1.0)) + ")");
    }
}

StateVector StateVector::basis(const HilbertSpace& space, const std::vector<int>& levels) {
    Vector v = Vector::Zero(space.total_dim());
    v[space.flat_index(levels)] = 1.0;
    return {space, std::move(v)};
}

DensityMatrix::DensityMatrix(HilbertSpace space, Matrix entries, Tolerances tol)
    : space_(std::move(space)), m_(std::move(entries)) {
    if (m_.rows() != m_.cols() || m_.rows() != space_.total_dim())
        throw ValidationError("DensityMatrix: entries must be square with side = space dim");
    const double herm = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol.hermiticity)
        throw ValidationError("DensityMatrix: not Hermitian (dev " + std::to_string(herm) + ")");
    const double tr_dev = std::abs(m_.trace() - cx(1.0));
    if (tr_dev > tol.trace)
        throw ValidationError("DensityMatrix: trace != 1 (dev " + std::to_string(tr_dev) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m_ + m_.adjoint()),
                                             Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < tol.min_eigenvalue)
        throw ValidationError("DensityMatrix: negative eigenvalue " + std::to_string(min_eig));
}

DensityMatrix DensityMatrix::from_pure(const StateVector& psi) {
    return {psi.space(), psi.amplitudes() * psi.amplitudes().adjoint()};
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Vector kron(const Vector& a, const Vector& b) {
    Vector out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a[i] * b;
    return out;
}

namespace {

std::vector<int> concat_dims(const HilbertSpace& a, const HilbertSpace& b) {
    std::vector<int> dims = a.dims();
    dims.insert(dims.end(), b.dims().begin(), b.dims().end());
    return dims;
}

} // namespace

Operator tensor(const Operator& a, const Operator& b) {
    if (a.space().total_dim() * b.space().total_dim() > HilbertSpace::kDimCap)
        throw CapacityError("tensor: product dimension exceeds cap");
    OpUnits units = (a.units() == OpUnits::rad_per_s || b.units() == OpUnits::rad_per_s)
                        ? OpUnits::rad_per_s
                        : OpUnits::dimensionless;
    return {HilbertSpace(concat_dims(a.space(), b.space())), kron(a.entries(), b.entries()),
            units};
}

StateVector tensor(const StateVector& a, const StateVector& b) {
    if (a.space().total_dim() * b.space().total_dim() > HilbertSpace::kDimCap)
        throw CapacityError("tensor: product dimension exceeds cap");
    return {HilbertSpace(concat_dims(a.space(), b.space())),
            kron(a.amplitudes(), b.amplitudes())};
}

Operator embed(const Operator& op, int subsystem, const HilbertSpace& space) {
    if (subsystem < 0 || subsystem >= space.subsystem_count())
        throw ValidationError("embed: subsystem index out of range");
    if (op.space().total_dim() != space.dim(subsystem))
        throw ValidationError("embed: operator dim does not match subsystem dim");
    Matrix m = Matrix::Identity(1, 1);
    for (int k = 0; k < space.subsystem_count(); ++k) {
        if (k == subsystem)
            m = kron(m, op.entries());
        else
            m = kron(m, Matrix::Identity(space.dim(k), space.dim(k)));
    }
    return {space, std::move(m), op.units()};
}

Matrix partial_trace_raw(const Matrix& rho, const HilbertSpace& space,
                         const std::vector<int>& keep) {
    const int n = space.subsystem_count();
    if (keep.empty()) throw ValidationError("partial_trace: keep set must be non-empty");
    std::vector<bool> kept(n, false);
    for (int k : keep) {
        if (k < 0 || k >= n) throw ValidationError("partial_trace: subsystem index out of range");
        if (kept[k]) throw ValidationError("partial_trace: duplicate subsystem index");
        kept[k] = true;
    }

    std::vector<int> keep_sorted, traced;
    for (int k = 0; k < n; ++k) (kept[k] ? keep_sorted : traced).push_back(k);

    std::int64_t dim_keep = 1, dim_tr = 1;
    for (int k : keep_sorted) dim_keep *= space.dim(k);
    for (int k : traced) dim_tr *= space.dim(k);

    // strides of each subsystem in the flat index
    std::vector<std::int64_t> stride(n, 1);
    for (int k = n - 2; k >= 0; --k) stride[k] = stride[k + 1] * space.dim(k + 1);

    // enumerate (kept multi-index, traced multi-index) -> flat index
    auto build_offsets = [&](const std::vector<int>& subs, std::int64_t count) {
        std::vector<std::int64_t> offs(count, 0);
        for (std::int64_t flat = 0; flat < count; ++flat) {
            std::int64_t rem = flat, off = 0;
            for (int i = static_cast<int>(subs.size()) - 1; i >= 0; --i) {
                const int d = space.dim(subs[i]);
                off += (rem % d) * stride[subs[i]];
                rem /= d;
            }
            offs[flat] = off;
        }
        return offs;
    };
    const auto keep_offs = build_offsets(keep_sorted, dim_keep);
    const auto tr_offs = build_offsets(traced, dim_tr);

    Matrix out = Matrix::Zero(dim_keep, dim_keep);
    for (std::int64_t i = 0; i < dim_keep; ++i)
        for (std::int64_t j = 0; j < dim_keep; ++j) {
            cx s = 0.0;
            for (std::int64_t t = 0; t < dim_tr; ++t)
                s += rho(keep_offs[i] + tr_offs[t], keep_offs[j] + tr_offs[t]);
            out(i, j) = s;
        }
    return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
    Matrix out = partial_trace_raw(rho.entries(), rho.space(), keep);
    std::vector<bool> kept(rho.space().subsystem_count(), false);
    for (int k : keep) kept[k] = true;
    std::vector<int> dims;
    for (int k = 0; k < rho.space().subsystem_count(); ++k)
        if (kept[k]) dims.push_back(rho.space().dim(k));
    return {HilbertSpace(dims), std::move(out)};
}

double fidelity_pure(const DensityMatrix& rho, const StateVector& psi) {
    if (rho.space() != psi.space())
        throw ValidationError("fidelity_pure: mismatched spaces");
    const cx val = (psi.amplitudes().adjoint() * rho.entries() * psi.amplitudes())(0);
    double f = val.real();
    if (f < 0.0) {
        if (f < -1e-9) throw ValidationError("fidelity_pure: value below 0 beyond tolerance");
        f = 0.0;
    }
    if (f > 1.0) {
        if (f > 1.0 + 1e-9) throw ValidationError("fidelity_pure: value above 1 beyond tolerance");
        f = 1.0;
    }
    return f;
}

namespace ops {

Matrix identity(int dim) { return Matrix::Identity(dim, dim); }

Matrix sigma_x() {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

Matrix sigma_y() {
    Matrix m(2, 2);
    m << 0, cx(0, -1), cx(0, 1), 0;
    return m;
}

Matrix sigma_z() {
    Matrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

Matrix sigma_minus() {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = 1.0;
    return m;
}

Matrix sigma_plus() { return sigma_minus().adjoint(); }

Matrix annihilation(int dim) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
    return m;
}

Matrix creation(int dim) { return annihilation(dim).adjoint(); }

Matrix number(int dim) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) m(n, n) = static_cast<double>(n);
    return m;
}

} // namespace ops

} // namespace qlink
