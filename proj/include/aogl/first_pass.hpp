#pragma once

// Per-asset time-series pass: aOGL, adaptive LASSO or time-invariant OLS on
// the observed rows of one asset, followed by the residual moments needed by
// the cross-sectional pass and the trimming decision.

#include "solver.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace aogl {

enum class Method { aOGL, aLASSO, TI };

inline std::string to_string(Method m)
{
    switch (m) {
    case Method::aOGL: return "aOGL";
    case Method::aLASSO: return "aLASSO";
    case Method::TI: return "TI";
    }
    return "?";
}

inline Method method_from_string(const std::string& s)
{
    if (s == "aOGL" || s == "aogl") return Method::aOGL;
    if (s == "aLASSO" || s == "alasso") return Method::aLASSO;
    if (s == "TI" || s == "ti") return Method::TI;
    throw std::invalid_argument("unknown method '" + s + "'");
}

struct TrimmingConfig {
    double chi1 = 15.0;
    double chi2 = 678.0 / 60.0;
    // Condition number of the Gram on the selected columns (true) or on all d columns.
    bool on_selected = true;
};

struct FirstPassConfig {
    InitConfig init{}; // aOGL initializer; gamma applies to the group weights
    double alasso_gamma = kDefaultAlassoGamma;
    PathConfig path{};
    TrimmingConfig trimming{};
};

/// One asset over the full date range; returns(t) is ignored where !rows[t].observed.
struct AssetData {
    std::string asset_id;
    std::vector<ObservationRow> rows;
    Vector returns;
};

struct AssetFit {
    std::string asset_id;
    Method method = Method::TI;
    bool skipped = false;
    std::string skip_reason;

    Vector beta_hat;
    SupportSet support;
    Vector residuals; // observed rows, in date order
    double sigma2_hat = 0.0;
    Matrix Qx_hat;    // Gram on the selected columns, scaled by 1/T_i
    Matrix S_hat;     // (1/T_i) sum e^2 x x' on the selected columns
    Index T_i = 0;
    Index T = 0;
    double tau = 0.0;
    double condition_number = std::numeric_limits<double>::infinity();
    bool trimmed = true;
    ArbitrageVerdict arbitrage;
    double chosen_delta = 0.0;
    std::vector<PathPoint> path;
    std::vector<std::string> warnings;

    bool usable() const { return !skipped && !trimmed; }
    bool time_invariant(const ModelSpec& s) const { return support.indices() == s.ti_indices(); }
};

/// sqrt(eig_max / eig_min) of a symmetric PSD matrix; infinity when eig_min <= 0.
inline double condition_number(const Eigen::Ref<const Matrix>& gram)
{
    if (gram.rows() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return std::sqrt(hi / lo);
}

/// Keep iff CN(gram) <= chi1 and tau <= chi2.
inline bool trimming(const Eigen::Ref<const Matrix>& gram, double tau, double chi1, double chi2)
{
    return condition_number(gram) <= chi1 && tau <= chi2;
}

inline Index minimum_observations(const ModelSpec& s) { return s.K + 2; }

namespace detail {
inline Matrix select_columns(const Matrix& x, const std::vector<Index>& cols)
{
    Matrix out(x.rows(), static_cast<Index>(cols.size()));
    for (std::size_t a = 0; a < cols.size(); ++a)
        out.col(static_cast<Index>(a)) = x.col(cols[a]);
    return out;
}
} // namespace detail

inline AssetFit fit_asset(const AssetData& data, const GroupStructure& gs, Method method,
                          const FirstPassConfig& cfg = {})
{
    const ModelSpec& s = gs.spec;
    if (static_cast<Index>(data.rows.size()) != data.returns.size())
        throw std::invalid_argument("fit_asset: " + data.asset_id + ": rows and returns differ in length");

    AssetFit fit;
    fit.asset_id = data.asset_id;
    fit.method = method;
    fit.T = static_cast<Index>(data.rows.size());
    fit.beta_hat = Vector::Zero(s.d());

    std::vector<Index> obs;
    for (Index t = 0; t < fit.T; ++t)
        if (data.rows[t].observed) obs.push_back(t);
    fit.T_i = static_cast<Index>(obs.size());
    fit.tau = fit.T_i > 0 ? double(fit.T) / double(fit.T_i) : std::numeric_limits<double>::infinity();
    if (fit.T_i < minimum_observations(s)) {
        fit.skipped = true;
        fit.skip_reason = "only " + std::to_string(fit.T_i) + " observations, need " +
                          std::to_string(minimum_observations(s));
        return fit;
    }

    const Matrix x = build_design(s, data.rows);
    Vector r(fit.T_i);
    for (Index a = 0; a < fit.T_i; ++a)
        r(a) = data.returns(obs[a]);
    if (!r.allFinite())
        throw std::invalid_argument("fit_asset: " + data.asset_id + ": non-finite return on an observed date");

    const auto ti = s.ti_indices();
    if (!detail::full_column_rank(detail::select_columns(x, ti))) {
        fit.skipped = true;
        fit.skip_reason = "time-invariant block is rank deficient";
        return fit;
    }

    switch (method) {
    case Method::TI:
        fit.beta_hat = detail::least_squares_on(x, r, ti);
        break;
    case Method::aOGL: {
        const auto pf = fit_path_aic(make_group_problem(gs, x, r), cfg.init, cfg.path);
        fit.beta_hat = pf.beta;
        fit.chosen_delta = pf.chosen_delta;
        fit.path = pf.path;
        fit.warnings = pf.warnings;
        break;
    }
    case Method::aLASSO: {
        std::vector<bool> mask(s.d(), false);
        for (Index j : ti) mask[j] = true;
        InitConfig init = cfg.init;
        init.method = InitMethod::OLS;
        init.gamma = cfg.alasso_gamma;
        const auto pf = fit_path_aic(make_alasso_problem(x, r, mask), init, cfg.path);
        fit.beta_hat = pf.beta;
        fit.chosen_delta = pf.chosen_delta;
        fit.path = pf.path;
        fit.warnings = pf.warnings;
        break;
    }
    }

    fit.support = SupportSet::from_beta(fit.beta_hat);

    fit.residuals = r - x * fit.beta_hat;
    fit.sigma2_hat = fit.residuals.squaredNorm() / double(fit.T_i);

    const Matrix xh = detail::select_columns(x, fit.support.indices());
    fit.Qx_hat = xh.transpose() * xh / double(fit.T_i);
    const Matrix xw = fit.residuals.asDiagonal() * xh;
    fit.S_hat = xw.transpose() * xw / double(fit.T_i);

    const Matrix trim_gram = cfg.trimming.on_selected ? fit.Qx_hat : Matrix(x.transpose() * x / double(fit.T_i));
    fit.condition_number = condition_number(trim_gram);
    fit.trimmed = !(fit.condition_number <= cfg.trimming.chi1 && fit.tau <= cfg.trimming.chi2);
    fit.arbitrage = check_no_arbitrage(fit.support, s);
    if (method == Method::aOGL && !fit.arbitrage.compliant)
        throw std::logic_error("fit_asset: " + data.asset_id + ": aOGL support violates the no-arbitrage groups");
    return fit;
}

// ---------------------------------------------------------------------------
// Cross-sectional classification

struct SampleBucket {
    std::string label;
    Index lo = 0;   // exclusive lower bound in months (inclusive when 0)
    Index hi = 0;   // inclusive upper bound; < 0 means unbounded
};

inline std::vector<SampleBucket> default_buckets()
{
    return {{"<=6y", 0, 72},          {"6y-10y", 72, 120},    {"10y-20y", 120, 240}, {"20y-30y", 240, 360},
            {"30y-40y", 360, 480},    {"40y-50y", 480, 599},  {">=50y", 599, -1}};
}

struct BucketSummary {
    std::string label;
    Index n_assets = 0;
    double avg_nbreg = 0.0;
    double ti_pct = 0.0;
    std::vector<double> instrument_pct;     // p entries
    std::vector<double> characteristic_pct; // q entries
};

struct CrossSectionSummary {
    Index n_fits = 0;
    Index n_time_varying = 0;
    double ti_pct = 0.0;
    double arb_pct = 0.0;
    double avg_nbreg = 0.0;
    std::vector<BucketSummary> buckets;
    Matrix instrument_by_factor;     // p x K, % of time-varying fits
    Matrix characteristic_by_factor; // q x K, % of time-varying fits
};

/// Summarizes non-skipped, non-trimmed fits.
inline CrossSectionSummary classify_cross_section(const std::vector<AssetFit>& fits, const ModelSpec& s,
                                                  const std::vector<SampleBucket>& buckets = default_buckets())
{
    CrossSectionSummary out;
    out.instrument_by_factor = Matrix::Zero(s.p, s.K);
    out.characteristic_by_factor = Matrix::Zero(s.q, s.K);
    for (const auto& b : buckets) {
        BucketSummary bs;
        bs.label = b.label;
        bs.instrument_pct.assign(s.p, 0.0);
        bs.characteristic_pct.assign(s.q, 0.0);
        out.buckets.push_back(bs);
    }
    Index arb = 0;
    Index ti = 0;
    double nbreg = 0.0;
    for (const auto& f : fits) {
        if (!f.usable()) continue;
        ++out.n_fits;
        const bool is_ti = f.time_invariant(s);
        ti += is_ti;
        nbreg += double(f.support.size());
        if (!is_ti) {
            ++out.n_time_varying;
            arb += !f.arbitrage.compliant;
            for (Index k = 0; k < s.K; ++k) {
                for (Index l = 1; l <= s.p; ++l)
                    out.instrument_by_factor(l - 1, k) += f.support.contains(s.scaled_factor_index(k, l));
                for (Index m = 0; m < s.q; ++m)
                    out.characteristic_by_factor(m, k) += f.support.contains(s.char_factor_index(k, m));
            }
        }
        for (std::size_t b = 0; b < buckets.size(); ++b) {
            const auto& bk = buckets[b];
            const bool in = (bk.lo == 0 ? f.T_i >= 0 : f.T_i > bk.lo) && (bk.hi < 0 || f.T_i <= bk.hi);
            if (!in) continue;
            auto& bs = out.buckets[b];
            ++bs.n_assets;
            bs.avg_nbreg += double(f.support.size());
            bs.ti_pct += is_ti;
            for (Index l = 1; l <= s.p; ++l) {
                bool any = false;
                for (Index k = 0; k < s.K; ++k) any = any || f.support.contains(s.scaled_factor_index(k, l));
                bs.instrument_pct[l - 1] += any;
            }
            for (Index m = 0; m < s.q; ++m) {
                bool any = false;
                for (Index k = 0; k < s.K; ++k) any = any || f.support.contains(s.char_factor_index(k, m));
                bs.characteristic_pct[m] += any;
            }
            break;
        }
    }
    if (out.n_fits == 0)
        throw std::invalid_argument("classify_cross_section: no usable fits");
    out.ti_pct = 100.0 * double(ti) / double(out.n_fits);
    out.avg_nbreg = nbreg / double(out.n_fits);
    out.arb_pct = out.n_time_varying > 0 ? 100.0 * double(arb) / double(out.n_time_varying) : 0.0;
    if (out.n_time_varying > 0) {
        out.instrument_by_factor *= 100.0 / double(out.n_time_varying);
        out.characteristic_by_factor *= 100.0 / double(out.n_time_varying);
    }
    for (auto& bs : out.buckets) {
        if (bs.n_assets == 0) continue;
        const double n = double(bs.n_assets);
        bs.avg_nbreg /= n;
        bs.ti_pct *= 100.0 / n;
        for (auto& v : bs.instrument_pct) v *= 100.0 / n;
        for (auto& v : bs.characteristic_pct) v *= 100.0 / n;
    }
    return out;
}

} // namespace aogl
