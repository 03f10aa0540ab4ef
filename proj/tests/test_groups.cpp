#include <aogl/groups.hpp>

#include "model_table.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace aogl;

namespace {
std::vector<Index> one_based(const std::vector<Index>& v)
{
    std::vector<Index> out(v);
    for (auto& x : out) ++x;
    return out;
}

SupportSet from_one_based(const std::vector<long>& v)
{
    std::vector<Index> idx;
    for (long x : v) idx.push_back(x - 1);
    return SupportSet(idx);
}
} // namespace

TEST(BuildGroups, WorkedExampleGroups)
{
    const auto gs = build_groups(dimensions(2, 1, 1));
    const std::vector<std::vector<Index>> want{{1, 6, 8}, {2}, {3, 7}, {3, 9}, {4, 5, 10}, {4, 5, 11}};
    ASSERT_EQ(gs.J(), 6);
    for (Index g = 0; g < gs.J(); ++g)
        EXPECT_EQ(one_based(gs.groups[g].members), want[g]) << "group " << g + 1;
    EXPECT_EQ(gs.d_tilde(), 14);
    EXPECT_EQ(gs.unpenalized, 0);
    EXPECT_EQ(gs.groups[0].kind, GroupKind::TimeInvariant);
}

TEST(BuildGroups, EmpiricalSizes)
{
    const auto g4 = build_groups(dimensions(4, 6, 13));
    EXPECT_EQ(g4.J(), 98);
    const auto g5 = build_groups(dimensions(5, 6, 13));
    EXPECT_EQ(g5.J(), 117);
    EXPECT_EQ(g5.d_tilde(), 607);
    EXPECT_EQ(expanded_dim_formula(g5.spec), 607);
}

TEST(BuildGroups, StructuralInvariantsOverGrid)
{
    for (Index K = 1; K <= 4; ++K)
        for (Index p = 0; p <= 4; ++p)
            for (Index q = 0; q <= 4; ++q) {
                const auto s = dimensions(K, p, q);
                const auto gs = build_groups(s);
                EXPECT_EQ(gs.J(), group_count_formula(s));
                EXPECT_EQ(gs.d_tilde(), expanded_dim_formula(s));
                EXPECT_EQ(static_cast<Index>(gs.groups[0].members.size()), K + 1);
                Index total = 0;
                std::set<Index> covered;
                for (Index g = 0; g < gs.J(); ++g) {
                    const auto& grp = gs.groups[g];
                    total += gs.group_size(g);
                    if (grp.kind == GroupKind::OffDiagonal) {
                        EXPECT_EQ(grp.members.size(), 1u);
                    }
                    // duplication map restricted to the group is a bijection onto its members
                    std::vector<Index> slots(gs.duplication_map.begin() + gs.group_start[g],
                                             gs.duplication_map.begin() + gs.group_start[g] + gs.group_size(g));
                    EXPECT_EQ(slots, grp.members);
                    covered.insert(grp.members.begin(), grp.members.end());
                }
                EXPECT_EQ(total, gs.d_tilde());
                EXPECT_EQ(static_cast<Index>(covered.size()), s.d());
            }
}

TEST(BuildGroups, ExpandAndBackMap)
{
    const auto gs = build_groups(dimensions(2, 1, 1));
    Matrix x = Matrix::Zero(2, 11);
    for (Index j = 0; j < 11; ++j) x(0, j) = double(j + 1);
    const Matrix e = gs.expand(x);
    ASSERT_EQ(e.cols(), 14);
    for (Index s = 0; s < 14; ++s) EXPECT_EQ(e(0, s), double(gs.duplication_map[s] + 1));
    const Vector v = Vector::Ones(14);
    const Vector beta = gs.back_map(v);
    EXPECT_EQ(beta(2), 2.0); // Z^2 sits in two groups
    EXPECT_EQ(beta(3), 2.0);
    EXPECT_EQ(beta(0), 1.0);
    EXPECT_THROW(gs.expand(Matrix::Zero(2, 10)), std::invalid_argument);
}

TEST(CountModels, Exponents)
{
    const auto c = count_models(build_groups(dimensions(2, 1, 1)));
    EXPECT_EQ(c.compliant_exponent, 5);
    EXPECT_EQ(c.unrestricted_exponent, 8);
    EXPECT_EQ(c.ratio_exponent, -3);
    EXPECT_TRUE(c.bound_holds);
    const auto c4 = count_models(build_groups(dimensions(4, 6, 13)));
    EXPECT_EQ(c4.compliant_exponent, 97);
    EXPECT_EQ(c4.unrestricted_exponent, 194);
    const auto c0 = count_models(build_groups(dimensions(3, 0, 2)));
    EXPECT_EQ(c0.ratio_exponent, -2);
    EXPECT_FALSE(c0.bound_applies);
}

TEST(CountModels, RatioBoundOverGrid)
{
    for (Index K = 1; K <= 5; ++K)
        for (Index p = 1; p <= 13; ++p)
            for (Index q = 1; q <= 13; ++q) {
                const auto c = count_models(build_groups(dimensions(K, p, q)));
                EXPECT_TRUE(c.bound_applies);
                EXPECT_LE(c.ratio_exponent, -3);
                EXPECT_TRUE(c.bound_holds);
            }
}

TEST(Enumerate, MatchesWorkedTable)
{
    const auto gs = build_groups(dimensions(2, 1, 1));
    const auto en = enumerate_models(gs);
    EXPECT_EQ(en.subsets.size(), 32u);
    EXPECT_EQ(en.distinct.size(), 32u);
    std::set<SupportSet> table;
    for (const auto& row : kWorkedModelTable) table.insert(from_one_based(row));
    ASSERT_EQ(table.size(), 32u);
    EXPECT_EQ(std::set<SupportSet>(en.distinct.begin(), en.distinct.end()), table);
    EXPECT_EQ(en.supports[0].one_based(), (std::vector<Index>{1, 6, 8}));
}

TEST(Enumerate, SmallAndRefusal)
{
    // K=1, p=1, q=0: TI, one off-diagonal, one instrument group -> J = 3
    const auto gs = build_groups(dimensions(1, 1, 0));
    ASSERT_EQ(gs.J(), 3);
    EXPECT_EQ(enumerate_models(gs).subsets.size(), 4u);
    EXPECT_THROW(enumerate_models(build_groups(dimensions(4, 6, 13))), std::domain_error);
}

TEST(Enumerate, EverySupportCompliant)
{
    for (Index K = 1; K <= 3; ++K)
        for (Index p = 0; p <= 3; ++p)
            for (Index q = 0; q <= 3; ++q) {
                const auto s = dimensions(K, p, q);
                const auto gs = build_groups(s);
                if (gs.J() > 12) continue;
                for (const auto& sup : enumerate_models(gs).supports)
                    EXPECT_TRUE(check_no_arbitrage(sup, s).compliant);
            }
}

TEST(CheckArbitrage, WorkedCases)
{
    const auto s = dimensions(2, 1, 1);
    EXPECT_TRUE(check_no_arbitrage(from_one_based({1, 6, 8}), s).compliant);
    const auto v1 = check_no_arbitrage(from_one_based({1, 6, 7, 8}), s);
    EXPECT_FALSE(v1.compliant);
    EXPECT_EQ(v1.violations.size(), 1u);
    EXPECT_FALSE(check_no_arbitrage(from_one_based({1, 3, 6, 8}), s).compliant);
    EXPECT_FALSE(check_no_arbitrage(from_one_based({1, 6}), s).compliant);
    EXPECT_FALSE(check_no_arbitrage(from_one_based({1, 6, 8, 10}), s).compliant);
    EXPECT_FALSE(check_no_arbitrage(from_one_based({1, 4, 6, 8}), s).compliant);
    EXPECT_TRUE(check_no_arbitrage(from_one_based({1, 5, 6, 8, 11}), s).compliant);
    EXPECT_FALSE(check_no_arbitrage(from_one_based({1, 6, 8, 12}), s).compliant);
}

TEST(CheckArbitrage, OffDiagonalExemptUnlessStrict)
{
    const auto s = dimensions(1, 2, 0);
    // Z1*Z2 cross term alone
    const SupportSet sup({0, s.offdiag_index(2, 1), s.scaled_factor_index(0, 0)});
    EXPECT_TRUE(check_no_arbitrage(sup, s).compliant);
    EXPECT_FALSE(check_no_arbitrage(sup, s, {.strict = true}).compliant);
    // 2 Z_l terms (row 0 of vech) are exempt even in strict mode
    const SupportSet sup2({0, s.offdiag_index(1, 0), s.scaled_factor_index(0, 0)});
    EXPECT_TRUE(check_no_arbitrage(sup2, s, {.strict = true}).compliant);
}
