#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "qlink/errors.hpp"

// Dense complex linear algebra for small composite Hilbert spaces built from
// qubits and truncated oscillator modes. Subsystem 0 is the slowest-varying
// index in the flattened basis ordering; all values are immutable after
// construction and safe to share across threads.
namespace qlink {

using cx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class HilbertSpace {
public:
    // Total dimension is capped; the largest supported objects are a 12-qubit
    // statevector and 3-subsystem density matrices.
    static constexpr std::int64_t kDimCap = std::int64_t{1} << 14;

    explicit HilbertSpace(std::vector<int> subsystem_dims);

    int subsystem_count() const { return static_cast<int>(dims_.size()); }
    int dim(int subsystem) const;
    std::int64_t total_dim() const { return total_dim_; }
    const std::vector<int>& dims() const { return dims_; }

    // Flat index of a multi-index (subsystem 0 slowest-varying).
    std::int64_t flat_index(const std::vector<int>& levels) const;

    bool operator==(const HilbertSpace& other) const { return dims_ == other.dims_; }
    bool operator!=(const HilbertSpace& other) const { return !(*this == other); }

private:
    std::vector<int> dims_;
    std::int64_t total_dim_ = 0;
};

// Units tag for operator entries; Hamiltonian terms carry rad/s.
enum class OpUnits { dimensionless, rad_per_s };

class Operator {
public:
    Operator(HilbertSpace space, Matrix entries, OpUnits units = OpUnits::dimensionless);

    const HilbertSpace& space() const { return space_; }
    const Matrix& entries() const { return m_; }
    OpUnits units() const { return units_; }

    Operator adjoint() const { return {space_, m_.adjoint(), units_}; }

private:
    HilbertSpace space_;
    Matrix m_;
    OpUnits units_;
};

class StateVector {
public:
    // Normalized constructor: rejects amplitudes whose 2-norm is off by more
    // than 1e-10 unless normalize=true, which rescales.
    StateVector(HilbertSpace space, Vector amplitudes, bool normalize = false);

    // Computational basis state |levels[0], levels[1], ...>.
    static StateVector basis(const HilbertSpace& space, const std::vector<int>& levels);

    const HilbertSpace& space() const { return space_; }
    const Vector& amplitudes() const { return v_; }

private:
    HilbertSpace space_;
    Vector v_;
};

class DensityMatrix {
public:
    struct Tolerances {
        double hermiticity = 1e-10;
        double trace = 1e-8;
        double min_eigenvalue = -1e-8;
    };

    // Enforces Hermiticity, unit trace and positivity; violation throws.
    DensityMatrix(HilbertSpace space, Matrix entries)
        : DensityMatrix(std::move(space), std::move(entries), Tolerances{}) {}
    DensityMatrix(HilbertSpace space, Matrix entries, Tolerances tol);

    static DensityMatrix from_pure(const StateVector& psi);

    const HilbertSpace& space() const { return space_; }
    const Matrix& entries() const { return m_; }

private:
    HilbertSpace space_;
    Matrix m_;
};

// Kronecker product of raw matrices/vectors in the declared subsystem order.
Matrix kron(const Matrix& a, const Matrix& b);
Vector kron(const Vector& a, const Vector& b);

// Tensor product; operand spaces are concatenated.
Operator tensor(const Operator& a, const Operator& b);
StateVector tensor(const StateVector& a, const StateVector& b);

// Lift a single-subsystem operator into the full space (identity elsewhere).
Operator embed(const Operator& op, int subsystem, const HilbertSpace& space);

// Trace out all subsystems not in `keep`; kept subsystems stay in their
// original relative order.
DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep);
Matrix partial_trace_raw(const Matrix& rho, const HilbertSpace& space,
                         const std::vector<int>& keep);

// <psi| rho |psi>, clipped to [0,1] when within 1e-9 of the bounds.
double fidelity_pure(const DensityMatrix& rho, const StateVector& psi);

// Fixed single-subsystem operators. Convention: |1> is the excited state,
// sigma_minus = |0><1| lowers, sigma_z = diag(+1, -1).
namespace ops {

Matrix identity(int dim);
Matrix sigma_x();
Matrix sigma_y();
Matrix sigma_z();
Matrix sigma_minus();
Matrix sigma_plus();
Matrix annihilation(int dim);
Matrix creation(int dim);
Matrix number(int dim);

} // namespace ops

} // namespace qlink
