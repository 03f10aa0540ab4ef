#include <aogl/matrix_core.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace aogl;

TEST(Vech, TwoByTwo)
{
    Matrix m(2, 2);
    m << 1, 2, 2, 3;
    EXPECT_EQ(vech(SymmetricMatrix::from_full(m)), Vector::LinSpaced(3, 1, 3));
    EXPECT_EQ(vech(SymmetricMatrix::from_full(Matrix::Identity(2, 2))), (Vector(3) << 1, 0, 1).finished());
}

TEST(Vech, MatchesPseudoInverseOfExplicitDuplication)
{
    std::mt19937_64 rng(11);
    const Matrix dp = oracle::pinv(oracle::duplication(3));
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix m = oracle::random_symmetric(rng, 3);
        const Vector got = vech(SymmetricMatrix::from_full(m));
        EXPECT_LT((got - dp * oracle::vec(m)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(SymmetricMatrix, RejectsAsymmetricAndNonFinite)
{
    Matrix m(2, 2);
    m << 1, 2, 2.0000001, 3;
    EXPECT_THROW(SymmetricMatrix::from_full(m), std::invalid_argument);
    m(1, 0) = 2.0;
    m(0, 0) = std::nan("");
    EXPECT_THROW(SymmetricMatrix::from_full(m), std::invalid_argument);
    EXPECT_THROW(SymmetricMatrix::from_vech(Vector::Zero(4)), std::invalid_argument);
}

TEST(SymmetricMatrix, RoundTrip)
{
    std::mt19937_64 rng(3);
    const Matrix m = oracle::random_symmetric(rng, 5);
    const auto s = SymmetricMatrix::from_vech(oracle::vech(m));
    EXPECT_EQ(s.full(), m);
    EXPECT_EQ(s(1, 3), m(3, 1));
}

TEST(Commutation, Trivial)
{
    EXPECT_EQ(commutation_matrix(1, 1), Matrix::Ones(1, 1));
    Matrix m(2, 2);
    m << 1, 2, 3, 4; // a b / c d
    const Vector got = commutation_matrix(2, 2) * vec(m);
    EXPECT_EQ(got, vec(Matrix(m.transpose())));
    EXPECT_EQ(got, (Vector(4) << 1, 2, 3, 4).finished());
}

TEST(Commutation, ThreeByTwoTransposes)
{
    std::mt19937_64 rng(5);
    const Matrix w = commutation_matrix(3, 2);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix m = oracle::random_matrix(rng, 3, 2);
        EXPECT_EQ(w * oracle::vec(m), oracle::vec(m.transpose()));
        EXPECT_EQ(apply_commutation(3, 2, oracle::vec(m)), oracle::vec(m.transpose()));
    }
}

TEST(Commutation, OrthogonalPermutationAndMatchesOracle)
{
    for (Index p = 1; p <= 6; ++p)
        for (Index q = 1; q <= 6; ++q) {
            const Matrix w = commutation_matrix(p, q);
            EXPECT_LT((w * w.transpose() - Matrix::Identity(p * q, p * q)).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_EQ(w, oracle::commutation(p, q));
            EXPECT_EQ(w.rowwise().sum(), Vector::Ones(p * q));
            EXPECT_EQ(w.colwise().sum().transpose(), Vector::Ones(p * q));
        }
}

TEST(Duplication, SmallCases)
{
    EXPECT_EQ(duplication_pinv(1), Matrix::Ones(1, 1));
    Matrix m(2, 2);
    m << 1, 2, 2, 3;
    EXPECT_EQ(duplication_pinv(2) * vec(m), (Vector(3) << 1, 2, 3).finished());
}

TEST(Duplication, PinvTimesDIsIdentity)
{
    for (Index p = 1; p <= 6; ++p) {
        const Matrix d = duplication_matrix(p);
        EXPECT_EQ(d, oracle::duplication(p));
        const Index n = p * (p + 1) / 2;
        EXPECT_LT((duplication_pinv(p) * d - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((duplication_pinv(p) - oracle::pinv(oracle::duplication(p))).cwiseAbs().maxCoeff(), 1e-12);
    }
    const Matrix d4 = oracle::duplication(4);
    EXPECT_LT((duplication_pinv(4) * d4 - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Duplication, ExactOnSymmetricInput)
{
    std::mt19937_64 rng(17);
    for (Index p = 1; p <= 6; ++p) {
        const Matrix m = oracle::random_symmetric(rng, p);
        EXPECT_EQ(duplication_pinv(p) * oracle::vec(m), oracle::vech(m));
        EXPECT_EQ(apply_duplication_pinv(p, oracle::vec(m)), oracle::vech(m));
    }
}

TEST(Np, SmallCases)
{
    EXPECT_EQ(np_operator(1), Matrix::Ones(1, 1));
    Matrix m(2, 2);
    m << 1, 2, 5, 3;
    Matrix s(2, 2);
    s << 1, 3.5, 3.5, 3;
    EXPECT_LT((np_operator(2) * vec(m) - oracle::vech(s)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Np, SymmetrizeThenVech)
{
    std::mt19937_64 rng(23);
    for (Index p = 1; p <= 6; ++p)
        for (int rep = 0; rep < 20; ++rep) {
            const Matrix m = oracle::random_matrix(rng, p, p);
            const Vector want = oracle::vech(0.5 * (m + m.transpose()));
            EXPECT_LT((np_operator(p) * oracle::vec(m) - want).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((apply_np(p, oracle::vec(m)) - want).cwiseAbs().maxCoeff(), 1e-12);
        }
}

TEST(Kronecker, VecIdentity)
{
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 30; ++rep) {
        const Index ar = 1 + rep % 4, ac = 2 + rep % 3, br = 1 + rep % 5, bc = ac;
        const Matrix a = oracle::random_matrix(rng, ar, ac);
        const Matrix m = oracle::random_matrix(rng, ac, bc);
        const Matrix b = oracle::random_matrix(rng, br, bc);
        const Vector lhs = oracle::vec(a * m * b.transpose());
        const Vector rhs = kronecker(b, a) * oracle::vec(m);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_EQ(kronecker(a, b), oracle::kron(a, b));
    }
}

TEST(DenseLimit, Refuses)
{
    EXPECT_THROW(commutation_matrix(33, 2), std::invalid_argument);
    EXPECT_THROW(duplication_pinv(0), std::invalid_argument);
    Vector v = Vector::LinSpaced(40 * 40, 0, 1599);
    EXPECT_EQ(apply_commutation(40, 40, v)(1), v(40));
}

TEST(VecUnvec, RoundTrip)
{
    std::mt19937_64 rng(31);
    const Matrix m = oracle::random_matrix(rng, 3, 4);
    EXPECT_EQ(unvec(vec(m), 3, 4), m);
    EXPECT_THROW(unvec(vec(m), 5, 2), std::invalid_argument);
    EXPECT_EQ(vech_index(3, 2, 1), 4);
    EXPECT_EQ(vech_index(3, 1, 2), 4);
}
