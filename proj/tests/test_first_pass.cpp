#include <aogl/first_pass.hpp>

#include "model_table.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace aogl;

namespace {

AssetData asset_from(std::mt19937_64& rng, const ModelSpec& s, Index t, const Vector& beta, double noise)
{
    AssetData a;
    a.asset_id = "A";
    a.rows = testutil::random_rows(rng, s, t);
    a.returns.resize(t);
    for (Index i = 0; i < t; ++i)
        a.returns(i) = beta.dot(build_x(s, a.rows[i])) + noise * oracle::random_vector(rng, 1)(0);
    return a;
}

FirstPassConfig no_trim()
{
    FirstPassConfig c;
    c.trimming.chi1 = std::numeric_limits<double>::infinity();
    return c;
}

} // namespace

TEST(FitAsset, NoiselessRecoveryOverWorkedTable)
{
    const auto s = dimensions(2, 1, 1);
    const auto gs = build_groups(s);
    std::mt19937_64 rng(7);
    for (std::size_t m = 0; m < kWorkedModelTable.size(); ++m) {
        const auto sup = testutil::support_from_one_based(kWorkedModelTable[m]);
        const Vector beta = testutil::coefficients_on(rng, sup, s.d());
        const auto fit = fit_asset(asset_from(rng, s, 400, beta, 0.0), gs, Method::aOGL, no_trim());
        EXPECT_EQ(fit.support.one_based(), sup.one_based()) << "model " << m + 1;
        EXPECT_LT((fit.beta_hat - beta).cwiseAbs().maxCoeff(), 1e-6) << "model " << m + 1;
        EXPECT_TRUE(fit.arbitrage.compliant);
    }
}

TEST(FitAsset, NoiselessRecoveryFromStructuralLoadings)
{
    const auto s = dimensions(3, 2, 2);
    const auto gs = build_groups(s);
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 5; ++rep) {
        Loadings load{Matrix::Zero(3, 3), Matrix::Zero(3, 2)};
        load.Bbreve.col(0) = oracle::random_vector(rng, 3);
        load.Bbreve(1, 2) = 0.8;
        load.C(2, 0) = -0.7;
        const Matrix nu = oracle::random_matrix(rng, 3, 3);
        const Vector beta = beta_from_structural(s, load, nu);
        const auto fit = fit_asset(asset_from(rng, s, 400, beta, 0.0), gs, Method::aOGL, no_trim());
        // Z_l^2 sits in K overlapping groups, so a sibling group may come in
        // alongside the true one; its extra columns must then fit to zero.
        for (Index j : SupportSet::from_beta(beta)) EXPECT_TRUE(fit.support.contains(j)) << j + 1;
        EXPECT_LT((fit.beta_hat - beta).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_TRUE(check_no_arbitrage(fit.support, s).compliant);
    }
}

TEST(FitAsset, TimeInvariantIsOlsOnTiColumns)
{
    const auto s = dimensions(2, 1, 1);
    const auto gs = build_groups(s);
    std::mt19937_64 rng(9);
    const Vector beta = oracle::random_vector(rng, s.d());
    const auto data = asset_from(rng, s, 120, beta, 0.3);
    const auto fit = fit_asset(data, gs, Method::TI, no_trim());
    EXPECT_EQ(fit.support.indices(), s.ti_indices());
    EXPECT_EQ(fit.support.one_based(), (std::vector<Index>{1, 6, 8}));
    const Matrix x = build_design(s, data.rows);
    Matrix xt(x.rows(), 3);
    xt << x.col(0), x.col(5), x.col(7);
    const Vector ols = xt.colPivHouseholderQr().solve(data.returns);
    EXPECT_NEAR(fit.beta_hat(0), ols(0), 1e-12);
    EXPECT_NEAR(fit.beta_hat(5), ols(1), 1e-12);
    EXPECT_NEAR(fit.beta_hat(7), ols(2), 1e-12);
}

TEST(FitAsset, ResidualMomentsAndFlags)
{
    const auto s = dimensions(2, 1, 1);
    const auto gs = build_groups(s);
    std::mt19937_64 rng(10);
    auto data = asset_from(rng, s, 90, oracle::random_vector(rng, s.d()), 0.5);
    for (Index t = 0; t < 30; ++t) data.rows[t].observed = false;
    data.returns.head(30).setConstant(std::nan("")); // ignored when unobserved
    for (Method m : {Method::aOGL, Method::aLASSO, Method::TI}) {
        const auto fit = fit_asset(data, gs, m, no_trim());
        ASSERT_FALSE(fit.skipped);
        EXPECT_EQ(fit.T_i, 60);
        EXPECT_EQ(fit.T, 90);
        EXPECT_DOUBLE_EQ(fit.tau, 1.5);
        EXPECT_EQ(fit.residuals.size(), 60);
        EXPECT_EQ(fit.sigma2_hat, fit.residuals.squaredNorm() / 60.0);
        EXPECT_GE(fit.sigma2_hat, 0.0);
        EXPECT_EQ(fit.support, SupportSet::from_beta(fit.beta_hat));
        EXPECT_EQ(fit.Qx_hat.rows(), Index(fit.support.size()));
        if (m == Method::aOGL) {
            EXPECT_TRUE(fit.arbitrage.compliant);
        }
    }
}

TEST(FitAsset, SkipsShortAndDegenerateAssets)
{
    const auto s = dimensions(2, 1, 1);
    const auto gs = build_groups(s);
    std::mt19937_64 rng(11);
    auto data = asset_from(rng, s, 10, oracle::random_vector(rng, s.d()), 0.1);
    for (Index t = 3; t < 10; ++t) data.rows[t].observed = false;
    auto fit = fit_asset(data, gs, Method::aOGL);
    EXPECT_TRUE(fit.skipped);
    EXPECT_FALSE(fit.skip_reason.empty());

    data = asset_from(rng, s, 20, oracle::random_vector(rng, s.d()), 0.1);
    for (auto& r : data.rows) r.f(1) = 0.0; // second factor never moves
    fit = fit_asset(data, gs, Method::TI);
    EXPECT_TRUE(fit.skipped);
}

TEST(FitAsset, Deterministic)
{
    const auto s = dimensions(2, 2, 1);
    const auto gs = build_groups(s);
    std::mt19937_64 rng(12);
    const auto data = asset_from(rng, s, 150, oracle::random_vector(rng, s.d()), 0.5);
    for (Method m : {Method::aOGL, Method::aLASSO}) {
        const auto a = fit_asset(data, gs, m);
        const auto b = fit_asset(data, gs, m);
        EXPECT_EQ(a.beta_hat, b.beta_hat);
        EXPECT_EQ(a.chosen_delta, b.chosen_delta);
    }
}

TEST(Trimming, DocumentedDecisions)
{
    EXPECT_TRUE(trimming(Matrix::Identity(3, 3), 1.0, 15.0, 11.3));
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 100.0;
    d(1, 1) = 1e-4;
    EXPECT_DOUBLE_EQ(condition_number(d), 1000.0);
    EXPECT_FALSE(trimming(d, 1.0, 15.0, 11.3));

    const double chi1 = 15.0, chi2 = 678.0 / 60.0;
    auto gram_with_cn = [](double cn) {
        Matrix g = Matrix::Identity(3, 3);
        g(0, 0) = cn * cn;
        return g;
    };
    EXPECT_TRUE(trimming(gram_with_cn(14.9), 1.0, chi1, chi2));
    EXPECT_FALSE(trimming(gram_with_cn(15.1), 1.0, chi1, chi2));
    EXPECT_TRUE(trimming(Matrix::Identity(2, 2), 11.29, chi1, chi2));
    EXPECT_FALSE(trimming(Matrix::Identity(2, 2), 11.31, chi1, chi2));
    Matrix singular = Matrix::Ones(2, 2);
    EXPECT_FALSE(trimming(singular, 1.0, 1e300, 1e300));
}

TEST(Trimming, MonotoneInThresholds)
{
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix a = oracle::random_matrix(rng, 20, 4);
        const Matrix g = a.transpose() * a / 20.0;
        const double tau = 1.0 + 15.0 * std::uniform_real_distribution<double>(0, 1)(rng);
        for (double c1 : {2.0, 5.0, 15.0, 50.0})
            for (double c2 : {2.0, 8.0, 11.3})
                if (trimming(g, tau, c1, c2)) {
                    EXPECT_TRUE(trimming(g, tau, c1 * 1.5, c2));
                    EXPECT_TRUE(trimming(g, tau, c1, c2 * 1.5));
                }
    }
}

TEST(Classify, AllTimeInvariant)
{
    const auto s = dimensions(2, 1, 1);
    std::vector<AssetFit> fits(4);
    for (auto& f : fits) {
        f.support = SupportSet(s.ti_indices());
        f.trimmed = false;
        f.T_i = 100;
    }
    const auto c = classify_cross_section(fits, s);
    EXPECT_EQ(c.ti_pct, 100.0);
    EXPECT_EQ(c.arb_pct, 0.0);
    EXPECT_EQ(c.avg_nbreg, 3.0);
    EXPECT_EQ(c.buckets[1].n_assets, 4);
}

TEST(Classify, Models1And3)
{
    const auto s = dimensions(2, 1, 1);
    std::vector<AssetFit> fits(2);
    fits[0].support = testutil::support_from_one_based(kWorkedModelTable[0]);
    fits[1].support = testutil::support_from_one_based(kWorkedModelTable[2]);
    for (auto& f : fits) {
        f.trimmed = false;
        f.arbitrage = check_no_arbitrage(f.support, s);
        f.T_i = 700;
    }
    const auto c = classify_cross_section(fits, s);
    EXPECT_EQ(c.ti_pct, 50.0);
    // M1 has 3 covariates, M3 has 5 ({1,3,6,7,8})
    EXPECT_EQ(c.avg_nbreg, 4.0);
    EXPECT_EQ(c.arb_pct, 0.0);
    EXPECT_EQ(c.buckets.back().n_assets, 2);
    EXPECT_EQ(c.buckets.back().instrument_pct[0], 50.0);
    EXPECT_EQ(c.instrument_by_factor(0, 0), 100.0);
    EXPECT_EQ(c.instrument_by_factor(0, 1), 0.0);
}

TEST(Classify, ArbitrageShareAmongTimeVarying)
{
    const auto s = dimensions(2, 1, 1);
    std::vector<AssetFit> fits(3);
    fits[0].support = testutil::support_from_one_based({1, 6, 8});
    fits[1].support = testutil::support_from_one_based({1, 6, 7, 8});
    fits[2].support = testutil::support_from_one_based({1, 3, 6, 7, 8});
    for (auto& f : fits) {
        f.trimmed = false;
        f.arbitrage = check_no_arbitrage(f.support, s);
    }
    const auto c = classify_cross_section(fits, s);
    EXPECT_EQ(c.n_time_varying, 2);
    EXPECT_EQ(c.arb_pct, 50.0);
    std::vector<AssetFit> none(1);
    EXPECT_THROW(classify_cross_section(none, s), std::invalid_argument);
}
