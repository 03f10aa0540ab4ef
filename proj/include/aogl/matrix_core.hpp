#pragma once

// Exact linear-algebra operators used by the regression design and the
// cross-sectional pass: vec/vech, duplication and commutation matrices,
// the symmetrizing N_p operator and Kronecker products.
//
// All vech orderings are column-major over the lower triangle, diagonal
// included: (M00, M10, ..., M(p-1)0, M11, M21, ...).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace aogl {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense operator builders refuse dimensions above this; use the apply_*
// functions instead.
inline constexpr Index kDenseOperatorLimit = 32;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

/// Symmetric matrix stored by its lower triangle (vech order).
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;

    explicit SymmetricMatrix(Index dim) : dim_(dim), lower_(Vector::Zero(dim * (dim + 1) / 2)) {}

    /// Builds from a full matrix; throws if it is not exactly symmetric.
    static SymmetricMatrix from_full(const Eigen::Ref<const Matrix>& m)
    {
        if (m.rows() != m.cols())
            throw std::invalid_argument("SymmetricMatrix: matrix is not square");
        if (!m.allFinite())
            throw std::invalid_argument("SymmetricMatrix: non-finite entry");
        SymmetricMatrix s(m.rows());
        Index k = 0;
        for (Index j = 0; j < m.cols(); ++j) {
            for (Index i = j; i < m.rows(); ++i) {
                if (m(i, j) != m(j, i))
                    throw std::invalid_argument("SymmetricMatrix: matrix is not symmetric");
                s.lower_(k++) = m(i, j);
            }
        }
        return s;
    }

    static SymmetricMatrix from_vech(const Eigen::Ref<const Vector>& v)
    {
        const auto n = static_cast<Index>(std::llround((std::sqrt(8.0 * double(v.size()) + 1.0) - 1.0) / 2.0));
        if (n * (n + 1) / 2 != v.size())
            throw std::invalid_argument("SymmetricMatrix: vech length is not triangular");
        SymmetricMatrix s(n);
        s.lower_ = v;
        return s;
    }

    Index dim() const { return dim_; }
    const Vector& lower() const { return lower_; }

    double operator()(Index i, Index j) const
    {
        if (i < j) std::swap(i, j);
        return lower_(j * dim_ - j * (j - 1) / 2 + (i - j));
    }

    Matrix full() const
    {
        Matrix m(dim_, dim_);
        for (Index j = 0; j < dim_; ++j)
            for (Index i = j; i < dim_; ++i)
                m(i, j) = m(j, i) = (*this)(i, j);
        return m;
    }

private:
    Index dim_ = 0;
    Vector lower_;
};

/// Position of (i, j), i >= j, inside vech of a p x p matrix.
inline Index vech_index(Index p, Index i, Index j)
{
    if (i < j) std::swap(i, j);
    return j * p - j * (j - 1) / 2 + (i - j);
}

inline Vector vec(const Eigen::Ref<const Matrix>& m)
{
    Vector v(m.size());
    for (Index j = 0; j < m.cols(); ++j)
        v.segment(j * m.rows(), m.rows()) = m.col(j);
    return v;
}

inline Matrix unvec(const Eigen::Ref<const Vector>& v, Index rows, Index cols)
{
    if (rows * cols != v.size())
        throw std::invalid_argument("unvec: size mismatch");
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        m.col(j) = v.segment(j * rows, rows);
    return m;
}

inline Vector vech(const SymmetricMatrix& m) { return m.lower(); }

/// vech of the lower triangle of an arbitrary square matrix (no symmetry check).
inline Vector vech_lower(const Eigen::Ref<const Matrix>& m)
{
    if (m.rows() != m.cols())
        throw std::invalid_argument("vech_lower: matrix is not square");
    const Index p = m.rows();
    Vector v(p * (p + 1) / 2);
    Index k = 0;
    for (Index j = 0; j < p; ++j)
        for (Index i = j; i < p; ++i)
            v(k++) = m(i, j);
    return v;
}

inline Matrix kronecker(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// ---------------------------------------------------------------------------
// Matrix-free application

/// W_{p,q} vec(M) = vec(M^T) for M of size p x q.
inline Vector apply_commutation(Index p, Index q, const Eigen::Ref<const Vector>& v)
{
    if (v.size() != p * q)
        throw std::invalid_argument("apply_commutation: size mismatch");
    Vector out(p * q);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < q; ++j)
            out(i * q + j) = v(j * p + i);
    return out;
}

/// D_p^+ vec(M); for non-symmetric M this averages the two off-diagonal halves.
inline Vector apply_duplication_pinv(Index p, const Eigen::Ref<const Vector>& v)
{
    if (v.size() != p * p)
        throw std::invalid_argument("apply_duplication_pinv: size mismatch");
    Vector out(p * (p + 1) / 2);
    Index k = 0;
    for (Index j = 0; j < p; ++j) {
        for (Index i = j; i < p; ++i) {
            out(k++) = (i == j) ? v(j * p + i) : 0.5 * (v(j * p + i) + v(i * p + j));
        }
    }
    return out;
}

/// N_p vec(M) = vech((M + M^T) / 2).
inline Vector apply_np(Index p, const Eigen::Ref<const Vector>& v)
{
    // D_p^+ already averages the mirrored entries, so N_p and D_p^+ coincide
    // on vec of any square matrix.
    return apply_duplication_pinv(p, v);
}

// ---------------------------------------------------------------------------
// Dense builders

namespace detail {
inline void check_dense(Index p, const char* what)
{
    if (p < 1)
        throw std::invalid_argument(std::string(what) + ": dimension must be >= 1");
    if (p > kDenseOperatorLimit)
        throw std::invalid_argument(std::string(what) + ": dimension exceeds dense limit, use matrix-free application");
}
} // namespace detail

inline Matrix commutation_matrix(Index p, Index q)
{
    detail::check_dense(p, "commutation_matrix");
    detail::check_dense(q, "commutation_matrix");
    Matrix w = Matrix::Zero(p * q, p * q);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < q; ++j)
            w(i * q + j, j * p + i) = 1.0;
    return w;
}

inline Matrix commutation_matrix(Index p) { return commutation_matrix(p, p); }

/// D_p with D_p vech(M) = vec(M) for symmetric M.
inline Matrix duplication_matrix(Index p)
{
    detail::check_dense(p, "duplication_matrix");
    Matrix d = Matrix::Zero(p * p, p * (p + 1) / 2);
    for (Index j = 0; j < p; ++j) {
        for (Index i = j; i < p; ++i) {
            const Index k = vech_index(p, i, j);
            d(j * p + i, k) = 1.0;
            d(i * p + j, k) = 1.0;
        }
    }
    return d;
}

/// Moore-Penrose inverse of D_p, built entrywise: (D^T D)^{-1} D^T.
inline Matrix duplication_pinv(Index p)
{
    detail::check_dense(p, "duplication_pinv");
    Matrix d = Matrix::Zero(p * (p + 1) / 2, p * p);
    for (Index j = 0; j < p; ++j) {
        for (Index i = j; i < p; ++i) {
            const Index k = vech_index(p, i, j);
            if (i == j) {
                d(k, j * p + i) = 1.0;
            } else {
                d(k, j * p + i) = 0.5;
                d(k, i * p + j) = 0.5;
            }
        }
    }
    return d;
}

/// N_p = 1/2 D_p^+ (W_p + I_{p^2}).
inline Matrix np_operator(Index p)
{
    const Matrix w = commutation_matrix(p);
    return 0.5 * duplication_pinv(p) * (w + Matrix::Identity(p * p, p * p));
}

} // namespace aogl
