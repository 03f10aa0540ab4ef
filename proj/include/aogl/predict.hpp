#pragma once

// Loading paths, expected-return predictions and equally weighted portfolio
// prediction errors.

#include "second_pass.hpp"

#include <map>

namespace aogl {

struct LoadingSeries {
    Matrix b;                // T x K
    Vector a;                // T, b_t' nu_t
    std::vector<bool> valid; // instruments and characteristics available
    std::vector<std::string> warnings;
};

namespace detail {
inline bool row_inputs_finite(const ObservationRow& r) { return r.z_prev.allFinite() && r.zi_prev.allFinite(); }
} // namespace detail

/// b_t = Bbreve Zt_{t-1} + C Zi_{t-1} and a_t = b_t' (nu matrix) Zt_{t-1}.
inline LoadingSeries loadings_path(const AssetFit& fit, const ModelSpec& s, const std::vector<ObservationRow>& rows,
                                   const Eigen::Ref<const Vector>& nu)
{
    if (fit.beta_hat.size() != s.d()) throw std::invalid_argument("loadings_path: coefficient length mismatch");
    const Loadings l = loadings_from_beta(s, fit.beta_hat);
    const Matrix numat = nu_matrix(s, nu);
    const Index t = static_cast<Index>(rows.size());
    LoadingSeries out;
    out.b = Matrix::Constant(t, s.K, std::numeric_limits<double>::quiet_NaN());
    out.a = Vector::Constant(t, std::numeric_limits<double>::quiet_NaN());
    out.valid.assign(t, false);
    for (Index u = 0; u < t; ++u) {
        if (!detail::row_inputs_finite(rows[u])) {
            out.warnings.push_back(fit.asset_id + ": date " + std::to_string(u) + " skipped, missing inputs");
            continue;
        }
        const Vector zt = detail::with_constant(rows[u].z_prev);
        Vector b = l.Bbreve * zt;
        if (s.q > 0) b += l.C * rows[u].zi_prev;
        out.b.row(u) = b.transpose();
        out.a(u) = b.dot(numat * zt);
        out.valid[u] = true;
    }
    return out;
}

enum class PredictionRoute {
    Fitted,    // a_t from the asset's own intercept coefficients
    Restricted // a_t = b_t' nu_t, so the prediction is b_t' lambda_t
};

struct AssetPrediction {
    std::string asset_id;
    Vector r_hat; // NaN where not predicted
    Vector a_hat;
    Vector b_ef;  // b_t' E[f_t | t-1]
};

/// E[f_t | t-1] = F Zt_{t-1}; nu is vec[(Lambda - F)'].
inline AssetPrediction predict_asset(const AssetFit& fit, const ModelSpec& s, const std::vector<ObservationRow>& rows,
                                     const Eigen::Ref<const Vector>& nu, const Eigen::Ref<const Matrix>& F,
                                     PredictionRoute route = PredictionRoute::Fitted)
{
    if (F.rows() != s.K || F.cols() != s.pt()) throw std::invalid_argument("predict_asset: F must be K x (p+1)");
    const Index t = static_cast<Index>(rows.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    AssetPrediction out{fit.asset_id, Vector::Constant(t, nan), Vector::Constant(t, nan), Vector::Constant(t, nan)};
    if (!fit.usable()) return out;
    const auto lp = loadings_path(fit, s, rows, nu);
    const Vector beta1 = fit.beta_hat.head(s.d1());
    for (Index u = 0; u < t; ++u) {
        if (!lp.valid[u]) continue;
        const Vector zt = detail::with_constant(rows[u].z_prev);
        const Vector b = lp.b.row(u).transpose();
        out.a_hat(u) = route == PredictionRoute::Restricted ? lp.a(u)
                                                            : beta1.dot(build_x1(s, rows[u].z_prev, rows[u].zi_prev));
        out.b_ef(u) = b.dot(F * zt);
        out.r_hat(u) = out.a_hat(u) + out.b_ef(u);
    }
    return out;
}

/// Expected-factor matrix for a method: the time-invariant method uses the
/// sample mean of the training factors; the others use F_hat.
inline Matrix expected_factor_matrix(Method m, bool hybrid, const Eigen::Ref<const Matrix>& F_hat,
                                     const Eigen::Ref<const Matrix>& train_factors)
{
    if (m != Method::TI || hybrid) return F_hat;
    Matrix out = Matrix::Zero(F_hat.rows(), F_hat.cols());
    out.col(0) = train_factors.colwise().mean().transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Portfolio prediction errors

struct PESeries {
    std::vector<Index> date;     // row index into the input matrices
    Vector pe;                   // target - predicted
    Vector target;               // cross-sectional mean of realized (forward) returns
    Vector predicted;            // cross-sectional mean of predictions
    std::vector<bool> partial;   // forward window shorter than the horizon
};

/// Equally weighted portfolio errors. predictions and realized are T x n with
/// NaN for missing pairs. With horizon h > 0 the target at t averages each
/// asset's realized returns over (t, t+h]; with h = 0 it is the return at t.
inline PESeries portfolio_pe(const Eigen::Ref<const Matrix>& predictions, const Eigen::Ref<const Matrix>& realized,
                             Index horizon = 12)
{
    if (predictions.rows() != realized.rows() || predictions.cols() != realized.cols())
        throw std::invalid_argument("portfolio_pe: prediction and realized shapes differ");
    if (horizon < 0) throw std::invalid_argument("portfolio_pe: horizon must be >= 0");
    const Index t = predictions.rows(), n = predictions.cols();
    std::vector<double> pe, tg, pr;
    PESeries out;
    for (Index u = 0; u < t; ++u) {
        double sum_t = 0.0, sum_p = 0.0;
        Index used = 0;
        for (Index i = 0; i < n; ++i) {
            if (!std::isfinite(predictions(u, i))) continue;
            double fwd = 0.0;
            Index cnt = 0;
            if (horizon == 0) {
                if (std::isfinite(realized(u, i))) fwd = realized(u, i), cnt = 1;
            } else {
                for (Index v = u + 1; v <= std::min(u + horizon, t - 1); ++v)
                    if (std::isfinite(realized(v, i))) fwd += realized(v, i), ++cnt;
            }
            if (cnt == 0) continue;
            sum_t += fwd / double(cnt);
            sum_p += predictions(u, i);
            ++used;
        }
        if (used == 0) continue;
        out.date.push_back(u);
        tg.push_back(sum_t / double(used));
        pr.push_back(sum_p / double(used));
        pe.push_back(tg.back() - pr.back());
        out.partial.push_back(horizon > 0 && u + horizon > t - 1);
    }
    if (pe.empty()) throw std::invalid_argument("portfolio_pe: no date with both predictions and realized returns");
    out.pe = Eigen::Map<Vector>(pe.data(), static_cast<Index>(pe.size()));
    out.target = Eigen::Map<Vector>(tg.data(), static_cast<Index>(tg.size()));
    out.predicted = Eigen::Map<Vector>(pr.data(), static_cast<Index>(pr.size()));
    return out;
}

enum class R2Benchmark {
    Zero, // 1 - sum PE^2 / sum target^2
    Mean  // 1 - sum PE^2 / sum (target - year mean)^2
};

struct PredictionMetrics {
    double rmspe = 0.0;
    double av_abs_pe = 0.0;
    double std_abs_pe = 0.0; // population standard deviation
    double mape = 0.0;
    std::map<int, double> r2_by_year;
};

/// years has one calendar year per PE entry; pass empty to skip R^2.
inline PredictionMetrics prediction_metrics(const PESeries& s, const std::vector<int>& years = {},
                                            R2Benchmark bench = R2Benchmark::Zero)
{
    const Index n = s.pe.size();
    if (n == 0) throw std::invalid_argument("prediction_metrics: empty PE series");
    PredictionMetrics m;
    const Vector abs = s.pe.cwiseAbs();
    m.rmspe = std::sqrt(s.pe.squaredNorm() / double(n));
    m.av_abs_pe = abs.mean();
    m.mape = m.av_abs_pe;
    m.std_abs_pe = std::sqrt((abs.array() - m.av_abs_pe).square().mean());
    if (years.empty()) return m;
    if (static_cast<Index>(years.size()) != n)
        throw std::invalid_argument("prediction_metrics: one year per PE entry required");
    std::map<int, std::vector<Index>> by;
    for (Index u = 0; u < n; ++u) by[years[u]].push_back(u);
    for (const auto& [y, idx] : by) {
        double mean = 0.0;
        if (bench == R2Benchmark::Mean) {
            for (Index u : idx) mean += s.target(u);
            mean /= double(idx.size());
        }
        double num = 0.0, den = 0.0;
        for (Index u : idx) {
            num += s.pe(u) * s.pe(u);
            den += (s.target(u) - mean) * (s.target(u) - mean);
        }
        m.r2_by_year[y] = den > 0.0 ? 1.0 - num / den : (num == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
    }
    return m;
}

} // namespace aogl
