#pragma once

// Transformed regressors of the conditional factor model and the map from
// structural coefficients (A, B, C, Lambda - F) to the regression vector.
//
// Layout of x = (x11, x12, x21, x22):
//   x11 = vech(X_t), X_kk = Zt_k^2, X_kl = 2 Zt_k Zt_l      (d11 = pt(pt+1)/2)
//   x12 = Zt (x) Zi                                          (d12 = pt q)
//   x21 = f (x) Zt                                           (d21 = K pt)
//   x22 = f (x) Zi                                           (d22 = K q)
// with Zt = (1, Z_{t-1}) and pt = p + 1. All indices below are 0-based.

#include "matrix_core.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace aogl {

struct ModelSpec {
    Index K = 0;
    Index p = 0;
    Index q = 0;

    Index pt() const { return p + 1; }
    Index d11() const { return pt() * (pt() + 1) / 2; }
    Index d12() const { return pt() * q; }
    Index d21() const { return K * pt(); }
    Index d22() const { return K * q; }
    Index d1() const { return d11() + d12(); }
    Index d2() const { return d21() + d22(); }
    Index d() const { return d1() + d2(); }
    Index nu_dim() const { return K * pt(); }

    // Index of Zt_l^2 (l = 0 is the constant).
    Index diag_index(Index l) const { return vech_index(pt(), l, l); }
    // Index of 2 Zt_s Zt_l, s != l.
    Index offdiag_index(Index s, Index l) const { return vech_index(pt(), s, l); }
    // Index of Zt_s * Zi_m inside x12.
    Index x1_char_index(Index s, Index m) const { return d11() + s * q + m; }
    // Index of f_k * Zt_l inside x21 (l = 0 is the bare factor).
    Index scaled_factor_index(Index k, Index l) const { return d1() + k * pt() + l; }
    // Index of f_k * Zi_m inside x22.
    Index char_factor_index(Index k, Index m) const { return d1() + d21() + k * q + m; }

    /// Intercept plus the K bare factors, ascending.
    std::vector<Index> ti_indices() const
    {
        std::vector<Index> out{0};
        for (Index k = 0; k < K; ++k)
            out.push_back(scaled_factor_index(k, 0));
        return out;
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline ModelSpec dimensions(Index K, Index p, Index q)
{
    if (K < 1)
        throw std::invalid_argument("dimensions: K must be >= 1");
    if (p < 0 || q < 0)
        throw std::invalid_argument("dimensions: p and q must be >= 0");
    return ModelSpec{K, p, q};
}

/// One dated observation of an asset: factors at t, instruments and
/// characteristics already lagged to t-1.
struct ObservationRow {
    Vector f;
    Vector z_prev;
    Vector zi_prev;
    bool observed = true;
};

namespace detail {
inline void check_len(const Eigen::Ref<const Vector>& v, Index n, const char* what)
{
    if (v.size() != n)
        throw std::invalid_argument(std::string("design: ") + what + " has length " + std::to_string(v.size()) +
                                    ", expected " + std::to_string(n));
    if (!v.allFinite())
        throw std::invalid_argument(std::string("design: ") + what + " has non-finite entries");
}

inline Vector with_constant(const Eigen::Ref<const Vector>& z)
{
    Vector zt(z.size() + 1);
    zt(0) = 1.0;
    zt.tail(z.size()) = z;
    return zt;
}
} // namespace detail

inline Vector build_x1(const ModelSpec& spec, const Eigen::Ref<const Vector>& z_prev,
                       const Eigen::Ref<const Vector>& zi_prev)
{
    detail::check_len(z_prev, spec.p, "Z_prev");
    detail::check_len(zi_prev, spec.q, "Zi_prev");
    const Vector zt = detail::with_constant(z_prev);
    const Index pt = spec.pt();
    Vector x(spec.d1());
    Index k = 0;
    for (Index j = 0; j < pt; ++j)
        for (Index i = j; i < pt; ++i)
            x(k++) = (i == j ? 1.0 : 2.0) * zt(i) * zt(j);
    for (Index s = 0; s < pt; ++s)
        for (Index m = 0; m < spec.q; ++m)
            x(k++) = zt(s) * zi_prev(m);
    return x;
}

inline Vector build_x2(const ModelSpec& spec, const Eigen::Ref<const Vector>& f,
                       const Eigen::Ref<const Vector>& z_prev, const Eigen::Ref<const Vector>& zi_prev)
{
    detail::check_len(f, spec.K, "f");
    detail::check_len(z_prev, spec.p, "Z_prev");
    detail::check_len(zi_prev, spec.q, "Zi_prev");
    const Vector zt = detail::with_constant(z_prev);
    Vector x(spec.d2());
    Index k = 0;
    for (Index a = 0; a < spec.K; ++a)
        for (Index s = 0; s < spec.pt(); ++s)
            x(k++) = f(a) * zt(s);
    for (Index a = 0; a < spec.K; ++a)
        for (Index m = 0; m < spec.q; ++m)
            x(k++) = f(a) * zi_prev(m);
    return x;
}

inline Vector build_x(const ModelSpec& spec, const ObservationRow& row)
{
    Vector x(spec.d());
    x << build_x1(spec, row.z_prev, row.zi_prev), build_x2(spec, row.f, row.z_prev, row.zi_prev);
    return x;
}

/// Design matrix over the observed rows only.
inline Matrix build_design(const ModelSpec& spec, const std::vector<ObservationRow>& rows)
{
    Index n = 0;
    for (const auto& r : rows) n += r.observed ? 1 : 0;
    Matrix x(n, spec.d());
    Index t = 0;
    for (const auto& r : rows)
        if (r.observed) x.row(t++) = build_x(spec, r).transpose();
    return x;
}

// ---------------------------------------------------------------------------
// Structural coefficients

/// b_t = Bbreve Zt + C Zi with Bbreve = [A | B] (K x pt) and C (K x q).
struct Loadings {
    Matrix Bbreve;
    Matrix C;
};

/// Regression coefficient implied by loadings and nu = Lambda - F (K x pt),
/// under a_t = b_t' nu_t.
inline Vector beta_from_structural(const ModelSpec& spec, const Loadings& load,
                                   const Eigen::Ref<const Matrix>& nu)
{
    if (load.Bbreve.rows() != spec.K || load.Bbreve.cols() != spec.pt() || load.C.rows() != spec.K ||
        load.C.cols() != spec.q || nu.rows() != spec.K || nu.cols() != spec.pt())
        throw std::invalid_argument("beta_from_structural: dimension mismatch");
    Vector beta(spec.d());
    const Index pt = spec.pt();
    // beta11 = N_pt vec(Bbreve' nu)
    const Matrix m11 = load.Bbreve.transpose() * nu;
    beta.head(spec.d11()) = apply_np(pt, vec(m11));
    // beta12 = vec(C' nu), matching x12 = Zt (x) Zi
    if (spec.q > 0)
        beta.segment(spec.d11(), spec.d12()) = vec(load.C.transpose() * nu);
    beta.segment(spec.d1(), spec.d21()) = vec(load.Bbreve.transpose());
    if (spec.q > 0)
        beta.segment(spec.d1() + spec.d21(), spec.d22()) = vec(load.C.transpose());
    return beta;
}

/// Reads (Bbreve, C) back from the x2 block of a coefficient vector.
inline Loadings loadings_from_beta(const ModelSpec& spec, const Eigen::Ref<const Vector>& beta)
{
    if (beta.size() != spec.d())
        throw std::invalid_argument("loadings_from_beta: length mismatch");
    Loadings l;
    l.Bbreve = unvec(beta.segment(spec.d1(), spec.d21()), spec.pt(), spec.K).transpose();
    l.C = unvec(beta.segment(spec.d1() + spec.d21(), spec.d22()), spec.q, spec.K).transpose();
    return l;
}

/// nu = vec[(Lambda - F)'] <-> (Lambda - F).
inline Vector nu_vector(const Eigen::Ref<const Matrix>& nu_matrix) { return vec(nu_matrix.transpose()); }

inline Matrix nu_matrix(const ModelSpec& spec, const Eigen::Ref<const Vector>& nu)
{
    return unvec(nu, spec.pt(), spec.K).transpose();
}

} // namespace aogl
