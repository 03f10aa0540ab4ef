#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the structured operators being tested.

#include <aogl/matrix_core.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using aogl::Index;
using aogl::Matrix;
using aogl::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Index r, Index c)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i)
            m(i, j) = n(rng);
    return m;
}

inline Vector random_vector(std::mt19937_64& rng, Index n) { return random_matrix(rng, n, 1).col(0); }

inline Matrix random_symmetric(std::mt19937_64& rng, Index p)
{
    Matrix a = random_matrix(rng, p, p);
    return a + a.transpose();
}

inline Matrix pinv(const Matrix& a)
{
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double tol = 1e-12 * std::max(a.rows(), a.cols()) * (s.size() ? s(0) : 0.0);
    Vector inv(s.size());
    for (Index i = 0; i < s.size(); ++i)
        inv(i) = s(i) > tol ? 1.0 / s(i) : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

inline Matrix kron(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < out.cols(); ++j)
            out(i, j) = a(i / b.rows(), j / b.cols()) * b(i % b.rows(), j % b.cols());
    return out;
}

inline Vector vec(const Matrix& m)
{
    Vector v(m.size());
    Index k = 0;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i)
            v(k++) = m(i, j);
    return v;
}

inline Vector vech(const Matrix& m)
{
    std::vector<double> out;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = j; i < m.rows(); ++i)
            out.push_back(m(i, j));
    return Eigen::Map<Vector>(out.data(), static_cast<Index>(out.size()));
}

/// D_p from its defining property: column k is vec of the symmetric basis
/// matrix whose vech is e_k.
inline Matrix duplication(Index p)
{
    const Index n = p * (p + 1) / 2;
    Matrix d(p * p, n);
    Index k = 0;
    for (Index j = 0; j < p; ++j)
        for (Index i = j; i < p; ++i) {
            Matrix e = Matrix::Zero(p, p);
            e(i, j) = 1.0;
            e(j, i) = 1.0;
            d.col(k++) = vec(e);
        }
    return d;
}

/// W_{p,q} built column by column from vec(E_ij) -> vec(E_ij').
inline Matrix commutation(Index p, Index q)
{
    Matrix w = Matrix::Zero(p * q, p * q);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < q; ++j) {
            Matrix e = Matrix::Zero(p, q);
            e(i, j) = 1.0;
            Matrix et = e.transpose();
            w.col(j * p + i) = vec(et);
        }
    return w;
}

/// Conditional mean a_t + b_t' f_t computed directly from loadings:
/// b_t = Bbreve Zt + C Zi, a_t = b_t' (Lambda - F) Zt.
inline double dgp_mean(const Matrix& bbreve, const Matrix& c, const Matrix& nu, const Vector& f, const Vector& z,
                       const Vector& zi)
{
    Vector zt(z.size() + 1);
    zt(0) = 1.0;
    zt.tail(z.size()) = z;
    Vector b = bbreve * zt;
    if (zi.size() > 0) b += c * zi;
    const double a = b.dot(nu * zt);
    return a + b.dot(f);
}

/// Proximal-gradient (FISTA with restart) minimizer of
/// (1/T)||r - Xv||^2 + 2 delta sum_g w_g ||v_g|| for contiguous groups given by sizes.
inline Vector fista_group_lasso(const Matrix& x, const Vector& r, const std::vector<Index>& sizes, const Vector& w,
                                double delta, int iters = 200000, double tol = 1e-15)
{
    const double t = static_cast<double>(x.rows());
    const Matrix g = x.transpose() * x / t;
    const Vector c = x.transpose() * r / t;
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const double lip = 2.0 * es.eigenvalues().maxCoeff();
    auto prox = [&](Vector u) {
        Index start = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            const double thr = 2.0 * delta * w(static_cast<Index>(k)) / lip;
            auto seg = u.segment(start, sizes[k]);
            const double n = seg.norm();
            if (thr > 0.0) seg *= (n > thr ? 1.0 - thr / n : 0.0);
            start += sizes[k];
        }
        return u;
    };
    auto objective = [&](const Vector& v) {
        double pen = 0.0;
        Index start = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            pen += w(static_cast<Index>(k)) * v.segment(start, sizes[k]).norm();
            start += sizes[k];
        }
        return (r - x * v).squaredNorm() / t + 2.0 * delta * pen;
    };
    Vector v = Vector::Zero(x.cols()), y = v;
    double mom = 1.0, prev = objective(v);
    for (int it = 0; it < iters; ++it) {
        const Vector grad = 2.0 * (g * y - c);
        const Vector next = prox(y - grad / lip);
        const double obj = objective(next);
        if (obj > prev) { // restart momentum
            mom = 1.0;
            y = v;
            continue;
        }
        const double mom_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * mom * mom));
        y = next + ((mom - 1.0) / mom_next) * (next - v);
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = next;
        mom = mom_next;
        if (prev - obj < tol * std::max(1.0, std::abs(obj)) && change < 1e-13) break;
        prev = obj;
    }
    return v;
}

} // namespace oracle
