#pragma once

// Simulation designs for single-asset selection (study 1) and cross-sectional
// portfolio prediction (study 2), with a seeded replicate driver.

#include "predict.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <atomic>
#include <cstdint>
#include <optional>
#include <random>
#include <thread>

namespace aogl {

// ---------------------------------------------------------------------------
// Seeds

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t replicate)
{
    return splitmix64(splitmix64(master) ^ splitmix64(replicate + 1));
}

// Seed of the conditioning series and coefficients, distinct from every replicate.
inline std::uint64_t design_seed(std::uint64_t master) { return splitmix64(~master); }

// ---------------------------------------------------------------------------
// Configuration

struct SimulationConfig {
    int study = 1;
    int replicates = 500;
    Index K = 5, p = 6, q = 13;
    Index T_train = 450;
    Index T_test = 50;

    // study 1: error standard deviation
    double sigma = 0.09;

    // study 2
    Index n_assets = 500;
    Index block_size = 50;
    double corr_base = 0.25;
    double error_variance = 0.05;
    double ti_share = 0.35;

    // synthetic conditioning series
    double factor_mean = 0.005;
    double factor_sd = 0.045;
    double factor_slope = 0.01; // study 2: one instrument slope per factor in F
    double instrument_ar = 0.95;
    double characteristic_ar = 0.95;
    double nu_lo = 0.002, nu_hi = 0.01; // magnitudes of nu = Lambda - F
    bool redraw_conditioning = false;  // new series and coefficients for every replicate

    // Observed series replacing the synthetic ones, T_train + T_test rows each,
    // instruments and characteristics already lagged. Empty matrices keep the
    // synthetic draw; study 2 uses only factors and instruments.
    struct Conditioning {
        Matrix factors, instruments, characteristics;
    };
    std::optional<Conditioning> conditioning;

    std::uint64_t master_seed = 20240611;
    unsigned threads = 1;

    std::vector<Method> methods{Method::aOGL, Method::aLASSO};
    FirstPassConfig first_pass = default_first_pass();
    SecondPassConfig second_pass = default_second_pass();

    static FirstPassConfig default_first_pass()
    {
        FirstPassConfig c;
        // Raw-unit condition numbers of even the time-invariant design sit near
        // 1 / factor_sd, so the empirical threshold would drop every asset.
        c.trimming.chi1 = std::numeric_limits<double>::infinity();
        return c;
    }
    static SecondPassConfig default_second_pass()
    {
        SecondPassConfig c;
        c.identification = NuIdentification::ZeroUnidentified;
        return c;
    }

    ModelSpec spec() const { return dimensions(K, p, q); }
    Index T() const { return T_train + T_test; }

    void validate() const
    {
        if (study != 1 && study != 2) throw std::invalid_argument("SimulationConfig: study must be 1 or 2");
        if (replicates < 1) throw std::invalid_argument("SimulationConfig: replicates must be >= 1");
        if (T_train < 2 || T_test < 1) throw std::invalid_argument("SimulationConfig: need T_train >= 2, T_test >= 1");
        if (sigma < 0.0 || error_variance < 0.0) throw std::invalid_argument("SimulationConfig: negative error scale");
        if (!(std::abs(corr_base) < 1.0)) throw std::invalid_argument("SimulationConfig: |corr_base| must be < 1");
        if (n_assets < 1 || block_size < 1) throw std::invalid_argument("SimulationConfig: n_assets, block_size >= 1");
        if (ti_share < 0.0 || ti_share > 1.0) throw std::invalid_argument("SimulationConfig: ti_share in [0, 1]");
        if (!(std::abs(instrument_ar) < 1.0) || !(std::abs(characteristic_ar) < 1.0))
            throw std::invalid_argument("SimulationConfig: AR coefficients must be inside (-1, 1)");
        if (methods.empty()) throw std::invalid_argument("SimulationConfig: no methods");
        if (threads < 1) throw std::invalid_argument("SimulationConfig: threads must be >= 1");
        if (conditioning) {
            auto check = [&](const Matrix& m, Index cols, const char* what) {
                if (m.size() == 0) return;
                if (m.rows() != T() || m.cols() != cols || !m.allFinite())
                    throw std::invalid_argument(std::string("SimulationConfig: conditioning ") + what + " must be " +
                                                std::to_string(T()) + " x " + std::to_string(cols) + " and finite");
            };
            check(conditioning->factors, K, "factors");
            check(conditioning->instruments, p, "instruments");
            check(conditioning->characteristics, q, "characteristics");
        }
    }
};

// ---------------------------------------------------------------------------
// Conditioning series

namespace detail {

inline Vector normal_vector(std::mt19937_64& rng, Index n, double mean = 0.0, double sd = 1.0)
{
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = mean + sd * nd(rng);
    return v;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double signed_uniform(std::mt19937_64& rng, double lo, double hi)
{
    const double m = uniform(rng, lo, hi);
    return std::bernoulli_distribution(0.5)(rng) ? m : -m;
}

inline Index uniform_index(std::mt19937_64& rng, Index lo, Index hi)
{
    return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline void standardize_columns(Matrix& m)
{
    for (Index j = 0; j < m.cols(); ++j) {
        const double mean = m.col(j).mean();
        m.col(j).array() -= mean;
        const double sd = std::sqrt(m.col(j).squaredNorm() / double(m.rows()));
        if (sd > 0.0) m.col(j) /= sd;
    }
}

} // namespace detail

/// T x cols stationary AR(1) series with unit innovations, then standardized.
inline Matrix ar1_series(std::mt19937_64& rng, Index t, Index cols, double phi)
{
    Matrix m(t, cols);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Index j = 0; j < cols; ++j) {
        double x = nd(rng) / std::sqrt(1.0 - phi * phi);
        for (Index u = 0; u < t; ++u) {
            if (u > 0) x = phi * x + nd(rng);
            m(u, j) = x;
        }
    }
    if (t > 1) detail::standardize_columns(m);
    return m;
}

/// Positions of the nonzero entries of beta implied by the sparsity patterns of
/// (Bbreve, C, nu), assuming no cancellation among nonzero products.
inline SupportSet structural_support(const ModelSpec& s, const Loadings& load, const Eigen::Ref<const Matrix>& nu)
{
    auto pat = [](const Matrix& m) { return Matrix((m.array() != 0.0).cast<double>()); };
    Loadings lp{pat(load.Bbreve), pat(load.C)};
    // Products of 0/1 patterns are nonnegative, so a positive entry marks a structural nonzero.
    return SupportSet::from_beta(beta_from_structural(s, lp, pat(nu)));
}

// ---------------------------------------------------------------------------
// Study 1

struct Study1Truth {
    Loadings loadings;
    Matrix nu; // Lambda - F, K x pt
    Vector beta;
    SupportSet support;
};

struct Study1Design {
    std::vector<ObservationRow> rows; // T_train + T_test conditioning rows
    Study1Truth truth;
};

struct Study1Sample {
    AssetData train;
    AssetData test;
    const Study1Truth* truth = nullptr;
};

/// A full, one nonzero in B, two nonzeros in C on one characteristic (two
/// factors), and a full nu.
inline Study1Truth study1_truth(const ModelSpec& s, const SimulationConfig& cfg, std::mt19937_64& rng)
{
    Study1Truth tr;
    tr.loadings.Bbreve = Matrix::Zero(s.K, s.pt());
    tr.loadings.C = Matrix::Zero(s.K, s.q);
    for (Index k = 0; k < s.K; ++k) tr.loadings.Bbreve(k, 0) = detail::signed_uniform(rng, 0.3, 1.2);
    if (s.p > 0)
        tr.loadings.Bbreve(detail::uniform_index(rng, 0, s.K - 1), detail::uniform_index(rng, 1, s.p)) =
            detail::signed_uniform(rng, 0.2, 0.5);
    if (s.q > 0) {
        const Index m = detail::uniform_index(rng, 0, s.q - 1);
        const Index k1 = detail::uniform_index(rng, 0, s.K - 1);
        tr.loadings.C(k1, m) = detail::signed_uniform(rng, 0.2, 0.5);
        if (s.K > 1) {
            Index k2 = detail::uniform_index(rng, 0, s.K - 2);
            if (k2 >= k1) ++k2;
            tr.loadings.C(k2, m) = detail::signed_uniform(rng, 0.2, 0.5);
        }
    }
    tr.nu = Matrix(s.K, s.pt());
    for (Index k = 0; k < s.K; ++k)
        for (Index l = 0; l < s.pt(); ++l) tr.nu(k, l) = detail::signed_uniform(rng, cfg.nu_lo, cfg.nu_hi);
    tr.beta = beta_from_structural(s, tr.loadings, tr.nu);
    tr.support = SupportSet::from_beta(tr.beta);
    return tr;
}

inline Study1Design make_study1_design(const SimulationConfig& cfg, std::mt19937_64& rng)
{
    const ModelSpec s = cfg.spec();
    const Index t = cfg.T();
    Study1Design d;
    const auto* obs = cfg.conditioning ? &*cfg.conditioning : nullptr;
    Matrix z = ar1_series(rng, t, s.p, cfg.instrument_ar);
    Matrix zi = ar1_series(rng, t, s.q, cfg.characteristic_ar);
    Matrix f(t, s.K);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Index u = 0; u < t; ++u)
        for (Index k = 0; k < s.K; ++k) f(u, k) = cfg.factor_mean + cfg.factor_sd * nd(rng);
    if (obs && obs->instruments.size() > 0) z = obs->instruments;
    if (obs && obs->characteristics.size() > 0) zi = obs->characteristics;
    if (obs && obs->factors.size() > 0) f = obs->factors;
    for (Index u = 0; u < t; ++u)
        d.rows.push_back(ObservationRow{f.row(u).transpose(), z.row(u).transpose(), zi.row(u).transpose(), true});
    d.truth = study1_truth(s, cfg, rng);
    return d;
}

inline Study1Design make_study1_design(const SimulationConfig& cfg)
{
    std::mt19937_64 rng(design_seed(cfg.master_seed));
    return make_study1_design(cfg, rng);
}

/// Draws the Gaussian errors for one replicate over a fixed design.
inline Study1Sample simulate_study1(const SimulationConfig& cfg, const Study1Design& design, std::mt19937_64& rng)
{
    const ModelSpec s = cfg.spec();
    const Vector eps = detail::normal_vector(rng, cfg.T(), 0.0, cfg.sigma);
    Study1Sample out;
    out.truth = &design.truth;
    out.train.asset_id = out.test.asset_id = "sim";
    out.train.rows.assign(design.rows.begin(), design.rows.begin() + cfg.T_train);
    out.test.rows.assign(design.rows.begin() + cfg.T_train, design.rows.end());
    out.train.returns.resize(cfg.T_train);
    out.test.returns.resize(cfg.T_test);
    for (Index u = 0; u < cfg.T(); ++u) {
        const double r = design.truth.beta.dot(build_x(s, design.rows[u])) + eps(u);
        if (u < cfg.T_train)
            out.train.returns(u) = r;
        else
            out.test.returns(u - cfg.T_train) = r;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Study 2

struct Study2Design {
    Matrix instruments;                        // T x p, lagged values aligned with factor rows
    Matrix factors;                            // T x K, f_t = F Zt_{t-1} + u_t
    std::vector<Matrix> characteristics;       // per asset, T x q (lagged)
    std::vector<Loadings> loadings;
    std::vector<Vector> beta;
    std::vector<bool> time_invariant;
    Matrix nu;                                 // common Lambda - F
    Matrix F;
    Matrix error_chol;                         // Cholesky factor of a full block
    Matrix last_block_chol;                    // of the last block when it is shorter
    std::vector<Index> block_sizes;
    bool last_block_partial = false;
    std::vector<std::string> warnings;
};

/// Lower Cholesky factor of the m x m correlation matrix c^|k-l|.
inline Matrix toeplitz_chol(Index m, double c)
{
    Matrix r(m, m);
    for (Index k = 0; k < m; ++k)
        for (Index l = 0; l < m; ++l) r(k, l) = std::pow(c, double(std::abs(k - l)));
    Eigen::LLT<Matrix> llt(r);
    if (llt.info() != Eigen::Success) throw std::logic_error("toeplitz_chol: correlation matrix is not positive definite");
    return llt.matrixL();
}

inline Study2Design make_study2_design(const SimulationConfig& cfg, std::mt19937_64& rng)
{
    const ModelSpec s = cfg.spec();
    const Index t = cfg.T(), n = cfg.n_assets;
    Study2Design d;
    d.instruments = ar1_series(rng, t, s.p, cfg.instrument_ar);
    if (cfg.conditioning && cfg.conditioning->instruments.size() > 0) d.instruments = cfg.conditioning->instruments;

    d.F = Matrix::Zero(s.K, s.pt());
    d.F.col(0).setConstant(cfg.factor_mean);
    if (s.p > 0)
        for (Index k = 0; k < s.K; ++k) d.F(k, 1 + k % s.p) = cfg.factor_slope;
    d.factors.resize(t, s.K);
    for (Index u = 0; u < t; ++u) {
        const Vector zt = detail::with_constant(d.instruments.row(u).transpose());
        d.factors.row(u) = (d.F * zt + detail::normal_vector(rng, s.K, 0.0, cfg.factor_sd)).transpose();
    }
    if (cfg.conditioning && cfg.conditioning->factors.size() > 0) d.factors = cfg.conditioning->factors;
    // Constant nu only: with instrument slopes in nu, an asset with constant
    // loadings would still carry a time-varying intercept.
    d.nu = Matrix::Zero(s.K, s.pt());
    for (Index k = 0; k < s.K; ++k) d.nu(k, 0) = detail::signed_uniform(rng, cfg.nu_lo, cfg.nu_hi);

    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_ti = static_cast<Index>(std::llround(cfg.ti_share * double(n)));
    d.time_invariant.assign(n, false);
    for (Index i = 0; i < n_ti; ++i) d.time_invariant[order[i]] = true;

    for (Index i = 0; i < n; ++i) {
        d.characteristics.push_back(ar1_series(rng, t, s.q, cfg.characteristic_ar));
        Study1Truth tr = study1_truth(s, cfg, rng);
        if (d.time_invariant[i]) {
            tr.loadings.Bbreve.rightCols(s.p).setZero();
            tr.loadings.C.setZero();
        }
        d.beta.push_back(beta_from_structural(s, tr.loadings, d.nu));
        d.loadings.push_back(std::move(tr.loadings));
    }

    const Index bs = std::min(cfg.block_size, n);
    d.error_chol = toeplitz_chol(bs, cfg.corr_base);
    for (Index done = 0; done < n; done += bs) d.block_sizes.push_back(std::min(bs, n - done));
    if (d.block_sizes.back() < bs) {
        d.last_block_partial = true;
        d.last_block_chol = toeplitz_chol(d.block_sizes.back(), cfg.corr_base);
        d.warnings.push_back("n_assets is not a multiple of block_size; last block has " +
                             std::to_string(d.block_sizes.back()) + " assets");
    }
    return d;
}

inline Study2Design make_study2_design(const SimulationConfig& cfg)
{
    std::mt19937_64 rng(design_seed(cfg.master_seed));
    return make_study2_design(cfg, rng);
}

/// rows x n errors, each row drawn with block-Toeplitz correlation and the configured variance.
inline Matrix block_errors(const SimulationConfig& cfg, const Study2Design& d, Index rows, std::mt19937_64& rng)
{
    const Index n = cfg.n_assets;
    const double sd = std::sqrt(cfg.error_variance);
    Matrix e(rows, n);
    for (Index u = 0; u < rows; ++u) {
        Index start = 0;
        for (std::size_t b = 0; b < d.block_sizes.size(); ++b) {
            const Index m = d.block_sizes[b];
            const Matrix& l = (d.last_block_partial && b + 1 == d.block_sizes.size()) ? d.last_block_chol : d.error_chol;
            e.row(u).segment(start, m) = (sd * (l * detail::normal_vector(rng, m))).transpose();
            start += m;
        }
    }
    return e;
}

struct Study2Sample {
    std::vector<AssetData> train;
    std::vector<AssetData> test;
    Matrix train_factors, train_instruments;
    Matrix test_instruments;
    Matrix test_returns; // T_test x n
};

inline std::vector<ObservationRow> study2_rows(const Study2Design& d, Index asset, Index from, Index count)
{
    std::vector<ObservationRow> rows;
    for (Index u = from; u < from + count; ++u)
        rows.push_back(ObservationRow{d.factors.row(u).transpose(), d.instruments.row(u).transpose(),
                                      d.characteristics[asset].row(u).transpose(), true});
    return rows;
}

/// Training and fresh testing errors for one replicate over a fixed design.
inline Study2Sample simulate_study2(const SimulationConfig& cfg, const Study2Design& d, std::mt19937_64& rng)
{
    const ModelSpec s = cfg.spec();
    const Index n = cfg.n_assets;
    const Matrix e_train = block_errors(cfg, d, cfg.T_train, rng);
    const Matrix e_test = block_errors(cfg, d, cfg.T_test, rng);
    Study2Sample out;
    out.train_factors = d.factors.topRows(cfg.T_train);
    out.train_instruments = d.instruments.topRows(cfg.T_train);
    out.test_instruments = d.instruments.bottomRows(cfg.T_test);
    out.test_returns.resize(cfg.T_test, n);
    for (Index i = 0; i < n; ++i) {
        AssetData tr{"asset" + std::to_string(i + 1), study2_rows(d, i, 0, cfg.T_train), Vector(cfg.T_train)};
        AssetData te{tr.asset_id, study2_rows(d, i, cfg.T_train, cfg.T_test), Vector(cfg.T_test)};
        for (Index u = 0; u < cfg.T_train; ++u) tr.returns(u) = d.beta[i].dot(build_x(s, tr.rows[u])) + e_train(u, i);
        for (Index u = 0; u < cfg.T_test; ++u) te.returns(u) = d.beta[i].dot(build_x(s, te.rows[u])) + e_test(u, i);
        out.test_returns.col(i) = te.returns;
        out.train.push_back(std::move(tr));
        out.test.push_back(std::move(te));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-replicate evaluation

struct ReplicateRecord {
    int replicate = 0;
    Method method = Method::aOGL;
    bool ok = true;
    std::string error;
    // study 1
    double rmspe_r = 0.0;
    double rmse_beta = 0.0;
    bool time_varying = false;
    bool arbitrage = false; // support violates the no-arbitrage pairing
    Index true_pos = 0;
    Index nbreg = 0;
    // study 2
    double rmspe = 0.0;
    double mape = 0.0;
    Index n_used = 0;
};

inline ReplicateRecord evaluate_study1(const SimulationConfig& cfg, const GroupStructure& gs,
                                       const Study1Sample& smp, Method m, int replicate)
{
    const ModelSpec& s = gs.spec;
    ReplicateRecord rec;
    rec.replicate = replicate;
    rec.method = m;
    const AssetFit fit = fit_asset(smp.train, gs, m, cfg.first_pass);
    if (fit.skipped) throw std::runtime_error("asset skipped: " + fit.skip_reason);
    double sse = 0.0;
    for (std::size_t u = 0; u < smp.test.rows.size(); ++u) {
        const double e = smp.test.returns(static_cast<Index>(u)) - fit.beta_hat.dot(build_x(s, smp.test.rows[u]));
        sse += e * e;
    }
    rec.rmspe_r = std::sqrt(sse / double(smp.test.rows.size()));
    rec.rmse_beta = std::sqrt((fit.beta_hat - smp.truth->beta).squaredNorm() / double(s.d()));
    rec.time_varying = !fit.time_invariant(s);
    rec.arbitrage = rec.time_varying && !check_no_arbitrage(fit.support, s).compliant;
    for (Index j : smp.truth->support) rec.true_pos += fit.support.contains(j) ? 1 : 0;
    rec.nbreg = static_cast<Index>(fit.support.size());
    return rec;
}

struct Study2MethodOutput {
    std::vector<AssetFit> fits;
    SecondPassResult second_pass;
    Matrix predictions; // T_test x n, NaN where not predicted
    PESeries pe;
    PredictionMetrics metrics;
};

/// First pass, second pass and restricted predictions b' lambda on the test dates.
inline Study2MethodOutput run_study2_method(const SimulationConfig& cfg, const GroupStructure& gs,
                                            const Study2Sample& smp, Method m)
{
    const ModelSpec& s = gs.spec;
    Study2MethodOutput out;
    for (const auto& a : smp.train) out.fits.push_back(fit_asset(a, gs, m, cfg.first_pass));
    out.second_pass = run_second_pass(out.fits, s, smp.train_factors, smp.train_instruments, cfg.second_pass);
    const Matrix Ef = expected_factor_matrix(m, false, out.second_pass.F_hat.F, smp.train_factors);
    out.predictions = Matrix::Constant(smp.test_returns.rows(), smp.test_returns.cols(),
                                       std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < smp.test.size(); ++i) {
        const auto pr = predict_asset(out.fits[i], s, smp.test[i].rows, out.second_pass.nu_hat, Ef,
                                      PredictionRoute::Restricted);
        out.predictions.col(static_cast<Index>(i)) = pr.r_hat;
    }
    out.pe = portfolio_pe(out.predictions, smp.test_returns, 0);
    out.metrics = prediction_metrics(out.pe);
    return out;
}

inline ReplicateRecord evaluate_study2(const SimulationConfig& cfg, const GroupStructure& gs,
                                       const Study2Sample& smp, Method m, int replicate)
{
    ReplicateRecord rec;
    rec.replicate = replicate;
    rec.method = m;
    const auto out = run_study2_method(cfg, gs, smp, m);
    rec.rmspe = out.metrics.rmspe;
    rec.mape = out.metrics.mape;
    rec.n_used = out.second_pass.n_effective;
    Index tv = 0, arb = 0;
    for (const auto& f : out.fits) {
        if (f.skipped || f.time_invariant(gs.spec)) continue;
        ++tv;
        arb += check_no_arbitrage(f.support, gs.spec).compliant ? 0 : 1;
    }
    rec.time_varying = tv > 0;
    rec.arbitrage = arb > 0;
    return rec;
}

// ---------------------------------------------------------------------------
// Aggregation

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    Index n = 0;
};

inline MeanSe mean_se(const std::vector<double>& x)
{
    MeanSe m;
    m.n = static_cast<Index>(x.size());
    if (x.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0};
    for (double v : x) m.mean += v;
    m.mean /= double(x.size());
    if (x.size() > 1) {
        double ss = 0.0;
        for (double v : x) ss += (v - m.mean) * (v - m.mean);
        m.se = std::sqrt(ss / double(x.size() - 1) / double(x.size()));
    }
    return m;
}

struct MethodSummary {
    Method method = Method::aOGL;
    Index ok = 0;
    Index failed = 0;
    MeanSe rmspe_r, rmse_beta, true_pos, nbreg; // study 1
    MeanSe arb_pct;                             // percent of time-varying fits
    MeanSe rmspe, mape;                         // study 2
};

struct StudyResult {
    int study = 1;
    std::vector<ReplicateRecord> records; // sorted by (replicate, method order)
    std::vector<MethodSummary> summary;
    SupportSet true_support;              // study 1
    std::vector<std::string> warnings;

    std::vector<double> column(Method m, double ReplicateRecord::*field) const
    {
        std::vector<double> out;
        for (const auto& r : records)
            if (r.method == m && r.ok) out.push_back(r.*field);
        return out;
    }
    std::vector<double> column(Method m, Index ReplicateRecord::*field) const
    {
        std::vector<double> out;
        for (const auto& r : records)
            if (r.method == m && r.ok) out.push_back(double(r.*field));
        return out;
    }
    const MethodSummary& of(Method m) const
    {
        for (const auto& s : summary)
            if (s.method == m) return s;
        throw std::out_of_range("StudyResult: method " + to_string(m) + " not run");
    }
};

inline MethodSummary summarize(const StudyResult& r, Method m)
{
    MethodSummary s;
    s.method = m;
    Index tv = 0, arb = 0;
    for (const auto& rec : r.records) {
        if (rec.method != m) continue;
        if (!rec.ok) {
            ++s.failed;
            continue;
        }
        ++s.ok;
        if (rec.time_varying) ++tv, arb += rec.arbitrage ? 1 : 0;
    }
    s.rmspe_r = mean_se(r.column(m, &ReplicateRecord::rmspe_r));
    s.rmse_beta = mean_se(r.column(m, &ReplicateRecord::rmse_beta));
    s.true_pos = mean_se(r.column(m, &ReplicateRecord::true_pos));
    s.nbreg = mean_se(r.column(m, &ReplicateRecord::nbreg));
    s.rmspe = mean_se(r.column(m, &ReplicateRecord::rmspe));
    s.mape = mean_se(r.column(m, &ReplicateRecord::mape));
    s.arb_pct.n = tv;
    if (tv > 0) {
        const double p = double(arb) / double(tv);
        s.arb_pct.mean = 100.0 * p;
        s.arb_pct.se = 100.0 * std::sqrt(p * (1.0 - p) / double(tv));
    }
    return s;
}

/// One-sided paired t-test of H1: mean(a - b) < 0. Returns the p-value.
inline double paired_less_pvalue(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired_less_pvalue: need >= 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const MeanSe m = mean_se(d);
    if (m.se == 0.0) return m.mean < 0.0 ? 0.0 : 1.0;
    const boost::math::students_t dist(double(d.size() - 1));
    return boost::math::cdf(dist, m.mean / m.se);
}

// ---------------------------------------------------------------------------
// Driver

/// Runs every replicate for every method. Replicate r draws from
/// replicate_seed(master, r), so results do not depend on thread count.
inline StudyResult run_study(const SimulationConfig& cfg)
{
    cfg.validate();
    const ModelSpec s = cfg.spec();
    const GroupStructure gs = build_groups(s);
    StudyResult res;
    res.study = cfg.study;

    std::optional<Study1Design> d1;
    std::optional<Study2Design> d2;
    if (!cfg.redraw_conditioning) {
        if (cfg.study == 1) {
            d1 = make_study1_design(cfg);
            res.true_support = d1->truth.support;
        } else {
            d2 = make_study2_design(cfg);
            res.warnings = d2->warnings;
        }
    }

    const auto nm = cfg.methods.size();
    std::vector<ReplicateRecord> slots(static_cast<std::size_t>(cfg.replicates) * nm);
    auto run_one = [&](int r) {
        std::mt19937_64 rng(replicate_seed(cfg.master_seed, static_cast<std::uint64_t>(r)));
        auto fail_all = [&](const std::string& what) {
            for (std::size_t k = 0; k < nm; ++k) {
                auto& rec = slots[std::size_t(r) * nm + k];
                rec.replicate = r;
                rec.method = cfg.methods[k];
                rec.ok = false;
                rec.error = what;
            }
        };
        try {
            if (cfg.study == 1) {
                std::optional<Study1Design> own;
                if (!d1) own = make_study1_design(cfg, rng);
                const Study1Design& d = d1 ? *d1 : *own;
                const auto smp = simulate_study1(cfg, d, rng);
                for (std::size_t k = 0; k < nm; ++k) {
                    auto& rec = slots[std::size_t(r) * nm + k];
                    try {
                        rec = evaluate_study1(cfg, gs, smp, cfg.methods[k], r);
                    } catch (const std::exception& e) {
                        rec = ReplicateRecord{r, cfg.methods[k], false, e.what()};
                    }
                }
            } else {
                std::optional<Study2Design> own;
                if (!d2) own = make_study2_design(cfg, rng);
                const Study2Design& d = d2 ? *d2 : *own;
                const auto smp = simulate_study2(cfg, d, rng);
                for (std::size_t k = 0; k < nm; ++k) {
                    auto& rec = slots[std::size_t(r) * nm + k];
                    try {
                        rec = evaluate_study2(cfg, gs, smp, cfg.methods[k], r);
                    } catch (const std::exception& e) {
                        rec = ReplicateRecord{r, cfg.methods[k], false, e.what()};
                    }
                }
            }
        } catch (const std::exception& e) {
            fail_all(e.what());
        }
    };

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < cfg.replicates; r = next++) run_one(r);
    };
    const unsigned nt = std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.replicates));
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < nt; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    res.records = std::move(slots);
    for (Method m : cfg.methods) res.summary.push_back(summarize(res, m));
    return res;
}

} // namespace aogl
