#include <aogl/design.hpp>
#include <aogl/groups.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace aogl;

TEST(Dimensions, WorkedExampleAndEmpiricalSizes)
{
    const auto s = dimensions(2, 1, 1);
    EXPECT_EQ(s.d11(), 3);
    EXPECT_EQ(s.d12(), 2);
    EXPECT_EQ(s.d21(), 4);
    EXPECT_EQ(s.d22(), 2);
    EXPECT_EQ(s.d(), 11);
    EXPECT_EQ(s.d1(), 5);
    EXPECT_EQ(s.d2(), 6);
    EXPECT_EQ(dimensions(4, 6, 13).d(), 199);
    EXPECT_EQ(dimensions(5, 6, 13).d(), 219);
    EXPECT_THROW(dimensions(0, 1, 1), std::invalid_argument);
    EXPECT_THROW(dimensions(1, -1, 1), std::invalid_argument);
    EXPECT_EQ(dimensions(1, 0, 0).d(), 2);
}

TEST(BuildX1, WorkedExample)
{
    const auto s = dimensions(2, 1, 1);
    const double z = 0.7, c = -1.3;
    const Vector x = build_x1(s, Vector::Constant(1, z), Vector::Constant(1, c));
    const Vector want = (Vector(5) << 1, 2 * z, z * z, c, z * c).finished();
    EXPECT_EQ(x, want);
    EXPECT_EQ(build_x1(s, Vector::Zero(1), Vector::Zero(1)), (Vector(5) << 1, 0, 0, 0, 0).finished());
}

TEST(BuildX1, MatchesExplicitConstruction)
{
    std::mt19937_64 rng(41);
    const auto s = dimensions(1, 2, 2);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector z = oracle::random_vector(rng, 2), zi = oracle::random_vector(rng, 2);
        Vector zt(3);
        zt << 1, z;
        // X_t with 2 Zt_k Zt_l off the diagonal: 2 zz' - diag(zz')
        const Matrix outer = zt * zt.transpose();
        const Matrix xt = 2.0 * outer - Matrix(outer.diagonal().asDiagonal());
        Vector want(s.d1());
        want << oracle::vech(xt), oracle::kron(zt, zi);
        EXPECT_LT((build_x1(s, z, zi) - want).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(BuildX2, WorkedExampleOrdering)
{
    const auto s = dimensions(2, 1, 1);
    const double f1 = 0.3, f2 = -0.2, z = 1.5, c = 0.4;
    const Vector x = build_x2(s, (Vector(2) << f1, f2).finished(), Vector::Constant(1, z), Vector::Constant(1, c));
    const Vector want = (Vector(6) << f1, z * f1, f2, z * f2, c * f1, c * f2).finished();
    EXPECT_EQ(x, want);
    EXPECT_TRUE(build_x2(s, Vector::Zero(2), Vector::Constant(1, z), Vector::Constant(1, c)).isZero());
}

TEST(BuildX2, MatchesKroneckerOracle)
{
    std::mt19937_64 rng(43);
    const auto s = dimensions(3, 2, 1);
    for (int rep = 0; rep < 20; ++rep) {
        const Vector f = oracle::random_vector(rng, 3), z = oracle::random_vector(rng, 2),
                     zi = oracle::random_vector(rng, 1);
        Vector zt(3);
        zt << 1, z;
        Vector want(s.d2());
        want << oracle::kron(f, zt), oracle::kron(f, zi);
        EXPECT_LT((build_x2(s, f, z, zi) - want).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(BuildX, RejectsBadInput)
{
    const auto s = dimensions(2, 1, 1);
    EXPECT_THROW(build_x1(s, Vector::Zero(2), Vector::Zero(1)), std::invalid_argument);
    EXPECT_THROW(build_x2(s, Vector::Zero(3), Vector::Zero(1), Vector::Zero(1)), std::invalid_argument);
    Vector bad = Vector::Zero(1);
    bad(0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(build_x1(s, bad, Vector::Zero(1)), std::invalid_argument);
}

TEST(BuildX, LengthFirstEntryAndDiagonalPositions)
{
    std::mt19937_64 rng(47);
    for (Index K = 1; K <= 3; ++K)
        for (Index p = 0; p <= 3; ++p)
            for (Index q = 0; q <= 3; ++q) {
                const auto s = dimensions(K, p, q);
                ObservationRow row{oracle::random_vector(rng, K), oracle::random_vector(rng, p),
                                   oracle::random_vector(rng, q), true};
                const Vector x = build_x(s, row);
                ASSERT_EQ(x.size(), s.d());
                EXPECT_EQ(x(0), 1.0);
                const auto gs = build_groups(s);
                for (Index l = 1; l <= p; ++l) {
                    const auto& members = gs.groups[1 + p * (p + 1) / 2 + (l - 1) * K].members;
                    EXPECT_EQ(members.front(), s.diag_index(l));
                    EXPECT_DOUBLE_EQ(x(s.diag_index(l)), row.z_prev(l - 1) * row.z_prev(l - 1));
                }
            }
}

TEST(BuildDesign, SkipsUnobservedRows)
{
    const auto s = dimensions(1, 1, 0);
    std::vector<ObservationRow> rows{{Vector::Ones(1), Vector::Ones(1), Vector(0), true},
                                     {Vector::Ones(1), Vector::Ones(1), Vector(0), false},
                                     {Vector::Constant(1, 2.0), Vector::Ones(1), Vector(0), true}};
    const Matrix x = build_design(s, rows);
    EXPECT_EQ(x.rows(), 2);
    EXPECT_EQ(x(1, s.d1()), 2.0);
}

TEST(Structural, BetaReproducesDgpMean)
{
    std::mt19937_64 rng(53);
    const ModelSpec specs[] = {dimensions(2, 1, 1), dimensions(2, 2, 2), dimensions(3, 2, 3), dimensions(1, 0, 2),
                               dimensions(2, 3, 0)};
    for (const auto& s : specs)
        for (int rep = 0; rep < 50; ++rep) {
            Loadings load{oracle::random_matrix(rng, s.K, s.pt()), oracle::random_matrix(rng, s.K, s.q)};
            const Matrix nu = oracle::random_matrix(rng, s.K, s.pt());
            const Vector beta = beta_from_structural(s, load, nu);
            const Vector f = oracle::random_vector(rng, s.K), z = oracle::random_vector(rng, s.p),
                         zi = oracle::random_vector(rng, s.q);
            const double direct = oracle::dgp_mean(load.Bbreve, load.C, nu, f, z, zi);
            const double via = beta.dot(build_x(s, ObservationRow{f, z, zi, true}));
            EXPECT_NEAR(via, direct, 1e-10 * std::max(1.0, std::abs(direct)));
        }
}

TEST(Structural, LoadingsRoundTrip)
{
    std::mt19937_64 rng(59);
    const auto s = dimensions(3, 2, 2);
    Loadings load{oracle::random_matrix(rng, 3, 3), oracle::random_matrix(rng, 3, 2)};
    const Vector beta = beta_from_structural(s, load, Matrix::Zero(3, 3));
    const Loadings back = loadings_from_beta(s, beta);
    EXPECT_EQ(back.Bbreve, load.Bbreve);
    EXPECT_EQ(back.C, load.C);
    EXPECT_TRUE(beta.head(s.d1()).isZero());
    const Matrix nu = oracle::random_matrix(rng, 3, 3);
    EXPECT_EQ(nu_matrix(s, nu_vector(nu)), nu);
    // nu index k*pt + s <-> (Lambda - F)(k, s)
    EXPECT_EQ(nu_vector(nu)(1 * 3 + 2), nu(1, 2));
}
