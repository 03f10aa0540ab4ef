#pragma once

// Cross-sectional pass: pooled OLS pilot for nu = vec[(Lambda - F)'], asset
// weights from the first-pass sandwich variance, WLS for nu, adaptive LASSO
// for F and the implied risk premia path.

#include "first_pass.hpp"

#include <sstream>

namespace aogl {

// ---------------------------------------------------------------------------
// Selection matrices

struct SelectionMatrices {
    Matrix D; // d11 x d11_i
    Matrix E; // d12 x d12_i
    Matrix B; // d21_i x d21
    Matrix C; // d22_i x d22
    Index d11_i() const { return D.cols(); }
    Index d12_i() const { return E.cols(); }
    Index d21_i() const { return B.rows(); }
    Index d22_i() const { return C.rows(); }
};

inline SelectionMatrices selection_matrices(const SupportSet& support, const ModelSpec& s)
{
    std::vector<Index> b11, b12, b21, b22;
    for (Index j : support) {
        if (j < s.d11()) b11.push_back(j);
        else if (j < s.d1()) b12.push_back(j - s.d11());
        else if (j < s.d1() + s.d21()) b21.push_back(j - s.d1());
        else b22.push_back(j - s.d1() - s.d21());
    }
    auto cols = [](Index n, const std::vector<Index>& idx) {
        Matrix m = Matrix::Zero(n, static_cast<Index>(idx.size()));
        for (std::size_t a = 0; a < idx.size(); ++a) m(idx[a], static_cast<Index>(a)) = 1.0;
        return m;
    };
    return {cols(s.d11(), b11), cols(s.d12(), b12), cols(s.d21(), b21).transpose(),
            cols(s.d22(), b22).transpose()};
}

// ---------------------------------------------------------------------------
// beta_3 and the restriction beta_1 = beta_3 nu

namespace detail {

inline std::vector<Index> x1_rows(const SupportSet& support, const ModelSpec& s)
{
    std::vector<Index> out;
    for (Index j : support)
        if (j < s.d1()) out.push_back(j);
    return out;
}

inline std::vector<Index> x2_rows(const SupportSet& support, const ModelSpec& s)
{
    std::vector<Index> out;
    for (Index j : support)
        if (j >= s.d1()) out.push_back(j);
    return out;
}

inline Vector beta1_on(const ModelSpec& s, const Loadings& load, const Matrix& nu, const std::vector<Index>& rows)
{
    const Vector b = beta_from_structural(s, load, nu);
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) out(static_cast<Index>(a)) = b(rows[a]);
    return out;
}

} // namespace detail

/// d1_i x K pt matrix with beta_1i = beta_3i nu on the selected x1 rows, built
/// column by column from unit nu vectors and the loadings in beta_hat.
inline Matrix build_beta3(const Vector& beta_hat, const SupportSet& support, const ModelSpec& s)
{
    const auto rows = detail::x1_rows(support, s);
    const Loadings load = loadings_from_beta(s, beta_hat);
    Matrix out(static_cast<Index>(rows.size()), s.nu_dim());
    for (Index j = 0; j < s.nu_dim(); ++j)
        out.col(j) = detail::beta1_on(s, load, nu_matrix(s, Vector::Unit(s.nu_dim(), j)), rows);
    return out;
}

inline Matrix build_beta3(const AssetFit& fit, const ModelSpec& s)
{
    return build_beta3(fit.beta_hat, fit.support, s);
}

/// Selected x1 coefficients of a fit.
inline Vector beta1_selected(const AssetFit& fit, const ModelSpec& s)
{
    const auto rows = detail::x1_rows(fit.support, s);
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) out(static_cast<Index>(a)) = fit.beta_hat(rows[a]);
    return out;
}

// ---------------------------------------------------------------------------
// nu estimation

enum class NuIdentification {
    Error,           // throw when some nu component is not identified
    ZeroUnidentified // set unidentified components to 0 and solve for the rest
};

struct IdentificationError : std::runtime_error {
    std::vector<Index> components;
    IdentificationError(const std::string& what, std::vector<Index> comps)
        : std::runtime_error(what), components(std::move(comps))
    {
    }
};

inline std::string nu_component_name(const ModelSpec& s, Index j)
{
    return "nu[f" + std::to_string(j / s.pt() + 1) + "," + (j % s.pt() == 0 ? std::string("1") : "Z" + std::to_string(j % s.pt())) + "]";
}

struct NuSolve {
    Vector nu;
    std::vector<bool> identified;
};

namespace detail {

/// Solves normal equations a nu = b, handling rank deficiency per mode.
inline NuSolve solve_normal(const ModelSpec& s, const Matrix& a, const Vector& b, NuIdentification mode,
                            const char* who)
{
    const Index n = a.rows();
    const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double tol = 1e-10 * scale;

    auto deficient = [&](const std::vector<Index>& keep) {
        Matrix sub(keep.size(), keep.size());
        for (std::size_t u = 0; u < keep.size(); ++u)
            for (std::size_t v = 0; v < keep.size(); ++v) sub(u, v) = a(keep[u], keep[v]);
        Eigen::SelfAdjointEigenSolver<Matrix> es(sub);
        std::vector<Index> bad;
        for (Index e = 0; e < sub.rows(); ++e) {
            if (es.eigenvalues()(e) > tol) continue;
            for (Index c = 0; c < sub.rows(); ++c)
                if (std::abs(es.eigenvectors()(c, e)) > 1e-6) bad.push_back(keep[c]);
        }
        std::sort(bad.begin(), bad.end());
        bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
        return bad;
    };
    auto fail = [&](const std::vector<Index>& bad) {
        std::ostringstream os;
        os << who << ": nu not identified in";
        for (Index j : bad) os << ' ' << nu_component_name(s, j);
        throw IdentificationError(os.str(), bad);
    };

    std::vector<Index> keep(n);
    for (Index j = 0; j < n; ++j) keep[j] = j;
    auto bad = deficient(keep);
    NuSolve out{Vector::Zero(n), std::vector<bool>(n, true)};
    if (!bad.empty()) {
        if (mode == NuIdentification::Error) fail(bad);
        keep.clear();
        for (Index j = 0; j < n; ++j) {
            if (a(j, j) > tol) keep.push_back(j);
            else out.identified[j] = false;
        }
        if (keep.empty()) fail(bad);
        bad = deficient(keep);
        if (!bad.empty()) fail(bad);
    }
    Matrix sub(keep.size(), keep.size());
    Vector rhs(keep.size());
    for (std::size_t u = 0; u < keep.size(); ++u) {
        rhs(u) = b(keep[u]);
        for (std::size_t v = 0; v < keep.size(); ++v) sub(u, v) = a(keep[u], keep[v]);
    }
    const Vector sol = sub.ldlt().solve(rhs);
    for (std::size_t u = 0; u < keep.size(); ++u) out.nu(keep[u]) = sol(u);
    return out;
}

} // namespace detail

/// Pooled OLS pilot over usable fits.
inline NuSolve estimate_nu_ols(const std::vector<AssetFit>& fits, const ModelSpec& s,
                               NuIdentification mode = NuIdentification::Error)
{
    Matrix a = Matrix::Zero(s.nu_dim(), s.nu_dim());
    Vector b = Vector::Zero(s.nu_dim());
    Index used = 0;
    for (const auto& f : fits) {
        if (!f.usable()) continue;
        const Matrix b3 = build_beta3(f, s);
        a += b3.transpose() * b3;
        b += b3.transpose() * beta1_selected(f, s);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("estimate_nu_ols: no usable fits");
    return detail::solve_normal(s, a, b, mode, "estimate_nu_ols");
}

struct AssetWeights {
    Vector v_diag; // diag of the sandwich variance, d1_i entries
    Vector w;      // weights, d1_i entries
    std::vector<std::string> warnings;
};

inline constexpr double kDefaultSandwichFloor = 1e-12;

/// Inverse diagonal of tau C' Q^-1 S Q^-1 C, with C the derivative of
/// beta_1i - beta_3i nu1 with respect to the selected coefficients.
inline AssetWeights asset_weights(const AssetFit& fit, const ModelSpec& s, const Eigen::Ref<const Vector>& nu1,
                                  double weight_cap = kDefaultWeightCap, double floor = kDefaultSandwichFloor)
{
    const auto r1 = detail::x1_rows(fit.support, s);
    const auto r2 = detail::x2_rows(fit.support, s);
    const Index d1i = static_cast<Index>(r1.size());
    const Index d2i = static_cast<Index>(r2.size());
    AssetWeights out;
    out.v_diag = Vector::Zero(d1i);
    out.w = Vector::Zero(d1i);
    if (!fit.usable() || d1i == 0) return out;
    if (fit.Qx_hat.rows() != d1i + d2i || fit.S_hat.rows() != d1i + d2i)
        throw std::invalid_argument("asset_weights: " + fit.asset_id + ": moment matrices do not match the support");

    const Matrix nu = nu_matrix(s, nu1);
    Matrix c = Matrix::Zero(d1i + d2i, d1i);
    c.topRows(d1i).setIdentity();
    for (Index j = 0; j < d2i; ++j) {
        Vector beta = Vector::Zero(s.d());
        beta(r2[j]) = 1.0;
        c.row(d1i + j) = -detail::beta1_on(s, loadings_from_beta(s, beta), nu, r1).transpose();
    }

    Matrix sh = fit.S_hat;
    const Index n = sh.rows();
    sh.diagonal().array() += floor * sh.trace() / double(n);
    Eigen::LDLT<Matrix> q(fit.Qx_hat);
    const Matrix qc = q.solve(c);
    const Matrix v = fit.tau * qc.transpose() * sh * qc;
    out.v_diag = v.diagonal();
    for (Index j = 0; j < d1i; ++j) {
        const double vj = out.v_diag(j);
        if (vj < 0.0 || !std::isfinite(vj)) {
            out.w(j) = 0.0;
            out.warnings.push_back(fit.asset_id + ": nonpositive variance on row " + std::to_string(r1[j] + 1) +
                                   ", weight set to 0");
        } else {
            out.w(j) = vj > 0.0 ? std::min(1.0 / vj, weight_cap) : weight_cap;
        }
    }
    return out;
}

/// WLS over usable fits; weights[i] has one entry per selected x1 row of fits[i].
inline NuSolve estimate_nu_wls(const std::vector<AssetFit>& fits, const std::vector<Vector>& weights,
                               const ModelSpec& s, NuIdentification mode = NuIdentification::Error)
{
    if (weights.size() != fits.size())
        throw std::invalid_argument("estimate_nu_wls: one weight vector per fit required");
    Matrix a = Matrix::Zero(s.nu_dim(), s.nu_dim());
    Vector b = Vector::Zero(s.nu_dim());
    Index used = 0;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const auto& f = fits[i];
        if (!f.usable()) continue;
        const Matrix b3 = build_beta3(f, s);
        if (weights[i].size() != b3.rows())
            throw std::invalid_argument("estimate_nu_wls: weight length mismatch for " + f.asset_id);
        a += b3.transpose() * weights[i].asDiagonal() * b3;
        b += b3.transpose() * weights[i].asDiagonal() * beta1_selected(f, s);
        ++used;
    }
    if (used == 0) throw std::invalid_argument("estimate_nu_wls: no usable fits");
    a /= double(used);
    b /= double(used);
    return detail::solve_normal(s, a, b, mode, "estimate_nu_wls");
}

// ---------------------------------------------------------------------------
// F and risk premia

struct FactorFit {
    Matrix F;                         // K x pt, column 0 is the intercept
    std::vector<SupportSet> supports; // per factor, over (1, Z)
    std::vector<double> chosen_delta;
};

/// Adaptive LASSO of each factor on (1, Z_{t-1}); rows of `instruments` are
/// the lagged instruments aligned with the factor rows.
inline FactorFit estimate_F(const Eigen::Ref<const Matrix>& factors, const Eigen::Ref<const Matrix>& instruments,
                            double gamma = kDefaultAlassoGamma, int n_deltas = 40, const PathConfig& cfg = {})
{
    const Index t = factors.rows(), k = factors.cols(), p = instruments.cols();
    if (instruments.rows() != t) throw std::invalid_argument("estimate_F: factor and instrument rows differ");
    if (t <= p + 1) throw std::invalid_argument("estimate_F: need more than p + 1 dates");
    Matrix x(t, p + 1);
    x.col(0).setOnes();
    x.rightCols(p) = instruments;
    if (!detail::full_column_rank(x)) throw std::invalid_argument("estimate_F: instruments are rank deficient");
    std::vector<bool> mask(p + 1, false);
    mask[0] = true;
    FactorFit out;
    out.F = Matrix::Zero(k, p + 1);
    for (Index j = 0; j < k; ++j) {
        const auto pf = alasso_fit(x, factors.col(j), mask, gamma, n_deltas, cfg);
        out.F.row(j) = pf.beta.transpose();
        out.supports.push_back(SupportSet::from_beta(pf.beta));
        out.chosen_delta.push_back(pf.chosen_delta);
    }
    return out;
}

struct RiskPremia {
    Matrix Lambda; // K x pt
    Matrix lambda; // T x K, lambda_t = Lambda Zt_{t-1}
    Matrix nu_t;   // T x K, (Lambda - F) Zt_{t-1}
};

inline RiskPremia risk_premia(const ModelSpec& s, const Eigen::Ref<const Vector>& nu, const Eigen::Ref<const Matrix>& F,
                              const Eigen::Ref<const Matrix>& instruments)
{
    if (nu.size() != s.nu_dim() || F.rows() != s.K || F.cols() != s.pt() || instruments.cols() != s.p)
        throw std::invalid_argument("risk_premia: dimension mismatch");
    RiskPremia out;
    const Matrix numat = nu_matrix(s, nu);
    out.Lambda = F + numat;
    Matrix zt(instruments.rows(), s.pt());
    zt.col(0).setOnes();
    zt.rightCols(s.p) = instruments;
    out.lambda = zt * out.Lambda.transpose();
    out.nu_t = zt * numat.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Full second pass

struct SecondPassConfig {
    NuIdentification identification = NuIdentification::Error;
    double weight_cap = kDefaultWeightCap;
    double sandwich_floor = kDefaultSandwichFloor;
    double f_gamma = kDefaultAlassoGamma;
    int f_n_deltas = 40;
};

struct SecondPassResult {
    Vector nu1_hat;
    Vector nu_hat;
    std::vector<bool> identified;
    FactorFit F_hat;
    Matrix Lambda_hat;
    std::vector<Vector> weights;
    Index n_effective = 0;
    std::vector<std::string> warnings;
};

/// Pilot, weights, WLS and F over the training window. Time-invariant fits
/// only identify the constant column of Lambda - F, so a TI cross-section
/// always runs with unidentified components set to zero.
inline SecondPassResult run_second_pass(const std::vector<AssetFit>& fits, const ModelSpec& s,
                                        const Eigen::Ref<const Matrix>& factors,
                                        const Eigen::Ref<const Matrix>& instruments,
                                        const SecondPassConfig& cfg = {})
{
    SecondPassResult out;
    bool all_ti = true;
    for (const auto& f : fits) {
        if (!f.usable()) continue;
        ++out.n_effective;
        all_ti = all_ti && f.time_invariant(s);
    }
    if (out.n_effective == 0) throw std::invalid_argument("run_second_pass: no usable fits");
    const NuIdentification mode = all_ti ? NuIdentification::ZeroUnidentified : cfg.identification;

    const auto pilot = estimate_nu_ols(fits, s, mode);
    out.nu1_hat = pilot.nu;
    for (const auto& f : fits) {
        auto aw = asset_weights(f, s, out.nu1_hat, cfg.weight_cap, cfg.sandwich_floor);
        out.warnings.insert(out.warnings.end(), aw.warnings.begin(), aw.warnings.end());
        out.weights.push_back(std::move(aw.w));
    }
    const auto wls = estimate_nu_wls(fits, out.weights, s, mode);
    out.nu_hat = wls.nu;
    out.identified = wls.identified;
    for (std::size_t j = 0; j < out.identified.size(); ++j)
        if (!out.identified[j])
            out.warnings.push_back(nu_component_name(s, static_cast<Index>(j)) + " not identified, set to 0");

    out.F_hat = estimate_F(factors, instruments, cfg.f_gamma, cfg.f_n_deltas);
    out.Lambda_hat = out.F_hat.F + nu_matrix(s, out.nu_hat);
    return out;
}

} // namespace aogl
