#include <doctest.h>

#include "qlink/hilbert.hpp"
#include "qlink/rng.hpp"

using namespace qlink;

namespace {

// independent Kronecker oracle by explicit index arithmetic
Matrix kron_oracle(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            for (Eigen::Index k = 0; k < b.rows(); ++k)
                for (Eigen::Index l = 0; l < b.cols(); ++l)
                    out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
    return out;
}

Matrix random_density(int dim, Rng& rng) {
    Matrix a(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) a(i, j) = cx(rng.normal(), rng.normal());
    Matrix rho = a * a.adjoint();
    return rho / rho.trace();
}

} // namespace

TEST_CASE("tensor of identities and flips") {
    const HilbertSpace q({2});
    const Operator i2{q, ops::identity(2)};
    const Operator x{q, ops::sigma_x()};

    const Operator i4 = tensor(i2, i2);
    CHECK((i4.entries() - Matrix::Identity(4, 4)).norm() == 0.0);

    // sigma_x (x) sigma_x maps |00> to |11>
    const StateVector s00 = StateVector::basis(HilbertSpace({2, 2}), {0, 0});
    const Vector flipped = tensor(x, x).entries() * s00.amplitudes();
    CHECK(std::abs(flipped[3] - cx(1.0)) < 1e-15);
    CHECK(flipped.head(3).norm() == 0.0);
}

TEST_CASE("tensor matches the brute-force Kronecker oracle") {
    const HilbertSpace mode({3});
    const HilbertSpace q({2});
    const Operator adag{mode, ops::creation(3)};
    const Operator i2{q, ops::identity(2)};

    const Operator lifted = tensor(adag, i2);
    CHECK((lifted.entries() - kron_oracle(ops::creation(3), ops::identity(2))).norm() < 1e-15);

    // a^dag (x) I on |0,0> gives |1,0> with amplitude 1
    const StateVector vac = StateVector::basis(HilbertSpace({3, 2}), {0, 0});
    const Vector out = lifted.entries() * vac.amplitudes();
    CHECK(std::abs(out[HilbertSpace({3, 2}).flat_index({1, 0})] - cx(1.0)) < 1e-15);

    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a(2, 2), b(3, 3);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) a(i, j) = cx(rng.normal(), rng.normal());
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) b(i, j) = cx(rng.normal(), rng.normal());
        CHECK((kron(a, b) - kron_oracle(a, b)).norm() < 1e-13);
    }
}

TEST_CASE("tensor is associative with exact index arithmetic") {
    Rng rng(3);
    const Matrix a = random_density(2, rng), b = random_density(3, rng),
                 c = random_density(2, rng);
    const Matrix left = kron(kron(a, b), c);
    const Matrix right = kron(a, kron(b, c));
    CHECK((left - right).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tensor capacity cap") {
    const HilbertSpace big({2, 2, 2, 2, 2, 2, 2}); // dim 128
    const Operator op{big, Matrix::Identity(128, 128)};
    const Operator acc = tensor(op, op); // dim 2^14, exactly at the cap
    CHECK(acc.space().total_dim() == 16384);
    CHECK_THROWS_AS(tensor(acc, Operator{HilbertSpace({2}), ops::identity(2)}), CapacityError);
}

TEST_CASE("embed conventions") {
    const HilbertSpace two_q({2, 2});
    const Operator sz{HilbertSpace({2}), ops::sigma_z()};

    // |1> is excited and gets eigenvalue -1
    const Operator sz0 = embed(sz, 0, two_q);
    const StateVector s10 = StateVector::basis(two_q, {1, 0});
    const Vector out = sz0.entries() * s10.amplitudes();
    CHECK(std::abs(out[two_q.flat_index({1, 0})] - cx(-1.0)) < 1e-15);

    const Operator id_emb = embed(Operator{HilbertSpace({3}), ops::identity(3)}, 1,
                                  HilbertSpace({2, 3, 2}));
    CHECK((id_emb.entries() - Matrix::Identity(12, 12)).norm() == 0.0);

    // embed(a, 1, [2,3,2]) equals I2 (x) a (x) I2
    const Operator a_emb =
        embed(Operator{HilbertSpace({3}), ops::annihilation(3)}, 1, HilbertSpace({2, 3, 2}));
    const Matrix oracle =
        kron_oracle(kron_oracle(ops::identity(2), ops::annihilation(3)), ops::identity(2));
    CHECK((a_emb.entries() - oracle).norm() < 1e-15);

    CHECK_THROWS_AS(embed(sz, 3, two_q), ValidationError);
}

TEST_CASE("embed commutes with tensor") {
    Rng rng(11);
    Matrix a(2, 2), b(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            a(i, j) = cx(rng.normal(), rng.normal());
            b(i, j) = cx(rng.normal(), rng.normal());
        }
    const HilbertSpace two_q({2, 2});
    const Matrix lhs = embed(Operator{HilbertSpace({2}), a}, 0, two_q).entries() *
                       embed(Operator{HilbertSpace({2}), b}, 1, two_q).entries();
    CHECK((lhs - kron(a, b)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("partial trace of product and entangled states") {
    Rng rng(5);
    const Matrix rho1 = random_density(2, rng);
    const Matrix rho2 = random_density(3, rng);
    const DensityMatrix joint{HilbertSpace({2, 3}), kron(rho1, rho2)};

    const DensityMatrix left = partial_trace(joint, {0});
    CHECK((left.entries() - rho1).cwiseAbs().maxCoeff() < 1e-12);
    const DensityMatrix right = partial_trace(joint, {1});
    CHECK((right.entries() - rho2).cwiseAbs().maxCoeff() < 1e-12);

    // either side of a Bell pair is maximally mixed
    Vector bell = Vector::Zero(4);
    bell[0] = bell[3] = 1.0 / std::sqrt(2.0);
    const DensityMatrix bell_rho =
        DensityMatrix::from_pure(StateVector(HilbertSpace({2, 2}), bell));
    for (int keep : {0, 1}) {
        const DensityMatrix reduced = partial_trace(bell_rho, {keep});
        CHECK((reduced.entries() - 0.5 * Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("partial trace preserves trace and hermiticity on random states") {
    Rng rng(17);
    for (int rep = 0; rep < 25; ++rep) {
        DensityMatrix::Tolerances tol; // random_density can sit at the strict trace edge
        tol.trace = 1e-6;
        const DensityMatrix full{HilbertSpace({2, 3, 2}), random_density(12, rng), tol};
        const DensityMatrix red = partial_trace(full, {0, 2});
        CHECK(std::abs(red.entries().trace() - cx(1.0)) < 1e-12);
        CHECK((red.entries() - red.entries().adjoint()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(red.space().dims() == std::vector<int>{2, 2});
    }
}

TEST_CASE("fidelity_pure limits") {
    const HilbertSpace two_q({2, 2});
    Vector ghz = Vector::Zero(4);
    ghz[0] = ghz[3] = 1.0 / std::sqrt(2.0);
    const StateVector psi(two_q, ghz);

    CHECK(fidelity_pure(DensityMatrix::from_pure(psi), psi) ==
          doctest::Approx(1.0).epsilon(1e-12));

    const DensityMatrix mixed{two_q, 0.25 * Matrix::Identity(4, 4)};
    CHECK(fidelity_pure(mixed, psi) == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(fidelity_pure(mixed, StateVector::basis(HilbertSpace({2}), {0})),
                    ValidationError);
}

TEST_CASE("density matrix invariants are enforced") {
    const HilbertSpace q({2});
    Matrix bad(2, 2);
    bad << 1.0, 0.5, 0.1, 0.0; // not Hermitian
    CHECK_THROWS_AS(DensityMatrix(q, bad), ValidationError);

    const Matrix wrong_trace = 0.7 * Matrix::Identity(2, 2);
    CHECK_THROWS_AS(DensityMatrix(q, wrong_trace), ValidationError);

    Matrix negative(2, 2);
    negative << 1.5, 0, 0, -0.5;
    CHECK_THROWS_AS(DensityMatrix(q, negative), ValidationError);
}

TEST_CASE("state vector normalization contract") {
    const HilbertSpace q({2});
    Vector v(2);
    v << 0.6, 0.8; // already normalized
    CHECK_NOTHROW(StateVector(q, v));
    v << 1.0, 1.0;
    CHECK_THROWS_AS(StateVector(q, v), ValidationError);
    const StateVector fixed(q, v, /*normalize=*/true);
    CHECK(fixed.amplitudes().norm() == doctest::Approx(1.0).epsilon(1e-12));
}
