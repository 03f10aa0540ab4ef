#pragma once

// Adaptive (overlap) group-LASSO on a duplicated design.
//
//   min_v (1/T) ||r - X v||^2 + 2 delta sum_g w_g ||v_g||
//
// Groups are contiguous, disjoint column ranges of X; overlap is expressed by
// duplicating columns (back_map sends each column to its original covariate).
// Groups with w_g = 0 are unpenalized. The adaptive LASSO is the case where
// every penalized group is a single column.
//
// The solver is cyclic block coordinate descent on the Gram matrix with exact
// block minimization: a singleton block is soft-thresholded in closed form, a
// larger block is solved through the secular equation of its eigenbasis.

#include "groups.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aogl {

struct GroupRange {
    Index start = 0;
    Index size = 0;
};

struct PenalizedProblem {
    Matrix design;  // T_eff x n_cols
    Vector response;
    std::vector<GroupRange> groups;
    Vector group_weights; // one per group; 0 marks an unpenalized group
    std::vector<Index> back_map;
    Index original_dim = 0;
    double delta = 0.0;

    Index rows() const { return design.rows(); }
    Index cols() const { return design.cols(); }

    void validate() const
    {
        if (design.rows() < 1)
            throw std::invalid_argument("PenalizedProblem: no observations");
        if (response.size() != design.rows())
            throw std::invalid_argument("PenalizedProblem: response length differs from design rows");
        if (static_cast<Index>(back_map.size()) != design.cols())
            throw std::invalid_argument("PenalizedProblem: back_map length differs from design columns");
        if (group_weights.size() != static_cast<Index>(groups.size()))
            throw std::invalid_argument("PenalizedProblem: one weight per group required");
        Index next = 0;
        for (const auto& g : groups) {
            if (g.start != next || g.size < 1)
                throw std::invalid_argument("PenalizedProblem: groups must tile the columns in order");
            next += g.size;
        }
        if (next != design.cols())
            throw std::invalid_argument("PenalizedProblem: groups do not cover all columns");
        if ((group_weights.array() < 0.0).any() || !group_weights.allFinite())
            throw std::invalid_argument("PenalizedProblem: group weights must be finite and >= 0");
        if (delta < 0.0)
            throw std::invalid_argument("PenalizedProblem: delta must be >= 0");
        for (Index j : back_map)
            if (j < 0 || j >= original_dim)
                throw std::invalid_argument("PenalizedProblem: back_map out of range");
    }

    Vector back_map_coefficients(const Eigen::Ref<const Vector>& v) const
    {
        Vector beta = Vector::Zero(original_dim);
        for (Index s = 0; s < cols(); ++s)
            beta(back_map[s]) += v(s);
        return beta;
    }

    /// T_eff x original_dim design, one column per original covariate.
    Matrix original_design() const
    {
        Matrix x = Matrix::Zero(rows(), original_dim);
        std::vector<bool> seen(original_dim, false);
        for (Index s = 0; s < cols(); ++s)
            if (!seen[back_map[s]]) {
                x.col(back_map[s]) = design.col(s);
                seen[back_map[s]] = true;
            }
        return x;
    }
};

/// aOGL problem (without weights) on the duplicated design of a group structure.
inline PenalizedProblem make_group_problem(const GroupStructure& gs, const Eigen::Ref<const Matrix>& x,
                                           const Eigen::Ref<const Vector>& r)
{
    PenalizedProblem p;
    p.design = gs.expand(x);
    p.response = r;
    for (Index g = 0; g < gs.J(); ++g)
        p.groups.push_back(GroupRange{gs.group_start[g], gs.group_size(g)});
    p.group_weights = Vector::Ones(gs.J());
    p.group_weights(gs.unpenalized) = 0.0;
    p.back_map = gs.duplication_map;
    p.original_dim = gs.spec.d();
    return p;
}

/// Adaptive-LASSO problem: unpenalized columns form the first group, every
/// other column is its own group.
inline PenalizedProblem make_alasso_problem(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& r,
                                            const std::vector<bool>& unpenalized_mask)
{
    if (static_cast<Index>(unpenalized_mask.size()) != x.cols())
        throw std::invalid_argument("make_alasso_problem: mask length differs from design columns");
    std::vector<Index> order;
    for (Index j = 0; j < x.cols(); ++j)
        if (unpenalized_mask[j]) order.push_back(j);
    const auto n_free = static_cast<Index>(order.size());
    for (Index j = 0; j < x.cols(); ++j)
        if (!unpenalized_mask[j]) order.push_back(j);

    PenalizedProblem p;
    p.design.resize(x.rows(), x.cols());
    for (Index s = 0; s < x.cols(); ++s)
        p.design.col(s) = x.col(order[s]);
    p.response = r;
    p.back_map = order;
    p.original_dim = x.cols();
    std::vector<double> w;
    if (n_free > 0) {
        p.groups.push_back(GroupRange{0, n_free});
        w.push_back(0.0);
    }
    for (Index s = n_free; s < x.cols(); ++s) {
        p.groups.push_back(GroupRange{s, 1});
        w.push_back(1.0);
    }
    p.group_weights = Eigen::Map<Vector>(w.data(), static_cast<Index>(w.size()));
    return p;
}

// ---------------------------------------------------------------------------
// Column scaling

/// Root-mean-square of each penalized column (1 for unpenalized or all-zero columns).
inline Vector column_scales(const PenalizedProblem& p)
{
    Vector s = Vector::Ones(p.cols());
    const double t = static_cast<double>(p.rows());
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        if (p.group_weights(static_cast<Index>(g)) == 0.0) continue;
        for (Index j = p.groups[g].start; j < p.groups[g].start + p.groups[g].size; ++j) {
            const double rms = std::sqrt(p.design.col(j).squaredNorm() / t);
            s(j) = rms > 0.0 ? rms : 1.0;
        }
    }
    return s;
}

inline PenalizedProblem scaled_problem(const PenalizedProblem& p, const Vector& scales)
{
    PenalizedProblem out = p;
    out.design = p.design * scales.cwiseInverse().asDiagonal();
    return out;
}

// ---------------------------------------------------------------------------

struct SolverConfig {
    double coef_tol = 1e-8;
    double obj_tol = 1e-10;
    int max_iter = 50000;
    // Scale penalized columns to unit RMS before solving (see column_scales).
    bool standardize = true;
    double kkt_tol = 1e-6;
    // Also stop once the largest KKT violation falls below this; checked every
    // kkt_check_every sweeps. Set to 0 to rely on the change tolerances alone.
    double kkt_stop = 5e-7;
    int kkt_check_every = 5;
    // Anderson extrapolation over the last m active-set sweeps, tried every
    // anderson_every sweeps; an extrapolated point is kept only if it lowers
    // the objective. m = 0 disables it.
    int anderson_m = 5;
    int anderson_every = 3;
    bool record_objective = false;
};

struct LatentSolution {
    Vector v;    // expanded coefficients, original column units
    Vector beta; // back-mapped to original covariates
    double objective = 0.0; // of the problem actually solved (scaled if standardized)
    std::vector<Index> active_groups;
    int iterations = 0;
    bool converged = false;
    double kkt_residual = 0.0;
    std::vector<double> objective_trace;
};

/// Owns the Gram matrix and per-block factorizations of one problem; solves it
/// for any delta, optionally warm-started. Works in the coordinates of the
/// problem it is given (callers scale beforehand if wanted).
class GroupLassoSolver {
public:
    explicit GroupLassoSolver(const PenalizedProblem& problem, SolverConfig cfg = {})
        : groups_(problem.groups), weights_(problem.group_weights), cfg_(cfg)
    {
        problem.validate();
        const double t = static_cast<double>(problem.rows());
        n_ = problem.cols();

        // Latent copies of one covariate share a design column. Work with the
        // distinct columns only: the fit depends on v through their sums.
        std::map<Index, std::vector<Index>> by_origin; // original index -> distinct ids
        std::vector<Index> reps;                       // distinct id -> a latent column
        rep_.resize(n_);
        for (Index j = 0; j < n_; ++j) {
            auto& ids = by_origin[problem.back_map[j]];
            Index found = -1;
            for (Index u : ids)
                if (problem.design.col(reps[u]) == problem.design.col(j)) {
                    found = u;
                    break;
                }
            if (found < 0) {
                found = static_cast<Index>(reps.size());
                reps.push_back(j);
                ids.push_back(found);
            }
            rep_[j] = found;
        }
        const auto nu = static_cast<Index>(reps.size());
        Matrix xu(problem.rows(), nu);
        for (Index u = 0; u < nu; ++u) xu.col(u) = problem.design.col(reps[u]);
        gram_ = Matrix::Zero(nu, nu);
        gram_.selfadjointView<Eigen::Lower>().rankUpdate(xu.transpose(), 1.0 / t);
        gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
        xty_ = xu.transpose() * problem.response / t;
        yty_ = problem.response.squaredNorm() / t;

        blocks_.resize(groups_.size());
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            const auto& rg = groups_[g];
            Matrix h(rg.size, rg.size);
            for (Index a = 0; a < rg.size; ++a)
                for (Index c = 0; c < rg.size; ++c) h(a, c) = gram_(rep_[rg.start + a], rep_[rg.start + c]);
            Eigen::SelfAdjointEigenSolver<Matrix> es(h);
            blocks_[g].h = h;
            blocks_[g].evals = es.eigenvalues();
            blocks_[g].evecs = es.eigenvectors();
            const double top = std::max(blocks_[g].evals.maxCoeff(), 0.0);
            blocks_[g].cutoff = top * 1e-12;
            max_block_ = std::max(max_block_, rg.size);
        }
        for (std::size_t g = 0; g < groups_.size(); ++g)
            if (weights_(static_cast<Index>(g)) == 0.0) unpenalized_.push_back(static_cast<Index>(g));
    }

    Index cols() const { return n_; }
    /// Number of distinct design columns the solver works with.
    Index distinct_cols() const { return gram_.cols(); }

    /// Objective (1/T)||r - Xv||^2 + 2 delta sum w_g ||v_g||.
    double objective(const Eigen::Ref<const Vector>& v, double delta) const
    {
        const Vector w = collapse(v);
        return smooth(w, gram_ * w) + 2.0 * delta * penalty(v);
    }

    double penalty(const Eigen::Ref<const Vector>& v) const
    {
        double pen = 0.0;
        for (std::size_t g = 0; g < groups_.size(); ++g)
            pen += weights_(static_cast<Index>(g)) * v.segment(groups_[g].start, groups_[g].size).norm();
        return pen;
    }

    /// Largest KKT violation of v at delta.
    double kkt_residual(const Eigen::Ref<const Vector>& v, double delta) const
    {
        return kkt_from(v, gram_ * collapse(v), delta);
    }

    /// Same, with gw = gram * collapse(v) already known.
    double kkt_from(const Eigen::Ref<const Vector>& v, const Eigen::Ref<const Vector>& gw, double delta) const
    {
        const Vector gu = 2.0 * (gw - xty_);
        Vector grad(n_);
        for (Index j = 0; j < n_; ++j) grad(j) = gu(rep_[j]);
        double worst = 0.0;
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            const auto& rg = groups_[g];
            const auto gg = grad.segment(rg.start, rg.size);
            const auto vg = v.segment(rg.start, rg.size);
            const double lam = 2.0 * delta * weights_(static_cast<Index>(g));
            const double nv = vg.norm();
            double r;
            if (lam == 0.0)
                r = gg.norm();
            else if (nv > 0.0)
                r = (gg + lam * vg / nv).norm();
            else
                r = std::max(0.0, gg.norm() - lam);
            worst = std::max(worst, r);
        }
        return worst;
    }

    /// Minimizer over the unpenalized groups with every penalized group at zero.
    Vector null_fit() const
    {
        Vector v = Vector::Zero(cols());
        std::vector<Index> idx;
        for (Index g : unpenalized_)
            for (Index j = groups_[g].start; j < groups_[g].start + groups_[g].size; ++j)
                idx.push_back(j);
        if (idx.empty()) return v;
        const auto n = static_cast<Index>(idx.size());
        Matrix h(n, n);
        Vector b(n);
        for (Index a = 0; a < n; ++a) {
            b(a) = xty_(rep_[idx[a]]);
            for (Index c = 0; c < n; ++c)
                h(a, c) = gram_(rep_[idx[a]], rep_[idx[c]]);
        }
        const Vector sol = pseudo_solve(h, b);
        for (Index a = 0; a < n; ++a)
            v(idx[a]) = sol(a);
        return v;
    }

    /// Smallest delta at which every penalized group is zero.
    double delta_max() const
    {
        const Vector gu = 2.0 * (gram_ * collapse(null_fit()) - xty_);
        double dmax = 0.0;
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            const double w = weights_(static_cast<Index>(g));
            if (w == 0.0) continue;
            double sq = 0.0;
            for (Index j = groups_[g].start; j < groups_[g].start + groups_[g].size; ++j)
                sq += gu(rep_[j]) * gu(rep_[j]);
            dmax = std::max(dmax, std::sqrt(sq) / (2.0 * w));
        }
        return dmax;
    }

    LatentSolution solve(double delta, std::optional<Vector> warm = std::nullopt) const
    {
        if (delta < 0.0)
            throw std::invalid_argument("GroupLassoSolver::solve: delta must be >= 0");
        const Index n = cols();
        Vector v = warm ? *warm : Vector::Zero(n);
        if (v.size() != n)
            throw std::invalid_argument("GroupLassoSolver::solve: warm start has wrong length");
        Vector w = collapse(v);
        Vector gw = gram_ * w;

        LatentSolution sol;
        double obj = smooth(w, gw) + 2.0 * delta * penalty(v);
        if (cfg_.record_objective) sol.objective_trace.push_back(obj);

        std::vector<Index> all(groups_.size());
        std::iota(all.begin(), all.end(), Index{0});

        int iter = 0;
        bool converged = false;
        while (iter < cfg_.max_iter) {
            // Full sweep establishes the active set.
            double change = sweep(all, delta, v, w, gw);
            ++iter;
            double new_obj = smooth(w, gw) + 2.0 * delta * penalty(v);
            record(sol, obj, new_obj);
            bool done = change < cfg_.coef_tol && rel_change(obj, new_obj) < cfg_.obj_tol;
            obj = new_obj;
            if (done) {
                converged = true;
                break;
            }
            std::vector<Index> active;
            for (Index g : all)
                if (weights_(g) == 0.0 || v.segment(groups_[g].start, groups_[g].size).squaredNorm() > 0.0)
                    active.push_back(g);
            int since_check = 0;
            Anderson acc(cfg_.anderson_m);
            while (iter < cfg_.max_iter) {
                const Vector before = v;
                change = sweep(active, delta, v, w, gw);
                ++iter;
                new_obj = smooth(w, gw) + 2.0 * delta * penalty(v);
                if (cfg_.anderson_m > 0 && change > 0.0) {
                    Vector ext;
                    if (acc.push(before, v, iter % cfg_.anderson_every == 0, ext)) {
                        Vector wext = collapse(ext);
                        Vector gext = gram_ * wext;
                        const double ext_obj = smooth(wext, gext) + 2.0 * delta * penalty(ext);
                        if (ext_obj < new_obj) {
                            change = std::max(change, (ext - v).cwiseAbs().maxCoeff());
                            v = std::move(ext);
                            w = std::move(wext);
                            gw = std::move(gext);
                            new_obj = ext_obj;
                        } else {
                            acc.reset();
                        }
                    }
                }
                record(sol, obj, new_obj);
                done = change < cfg_.coef_tol && rel_change(obj, new_obj) < cfg_.obj_tol;
                obj = new_obj;
                if (done) break;
                if (cfg_.kkt_stop > 0.0 && ++since_check >= cfg_.kkt_check_every) {
                    since_check = 0;
                    if (kkt_from(v, gw, delta) < cfg_.kkt_stop) {
                        converged = true;
                        break;
                    }
                }
            }
            if (converged) break;
        }

        sol.v = std::move(v);
        sol.objective = obj;
        sol.iterations = iter;
        sol.converged = converged;
        sol.kkt_residual = kkt_residual(sol.v, delta);
        for (std::size_t g = 0; g < groups_.size(); ++g)
            if (sol.v.segment(groups_[g].start, groups_[g].size).squaredNorm() > 0.0)
                sol.active_groups.push_back(static_cast<Index>(g));
        return sol;
    }

private:
    // Type II Anderson acceleration of the fixed-point map x -> sweep(x).
    class Anderson {
    public:
        explicit Anderson(int m) : m_(m) {}
        void reset()
        {
            xs_.clear();
            gs_.clear();
        }
        // Records x -> g(x); returns true with an extrapolated point once at
        // least two pairs are stored.
        bool push(const Vector& x, const Vector& g, bool extrapolate, Vector& out)
        {
            if (m_ <= 0) return false;
            xs_.push_back(x);
            gs_.push_back(g);
            if (static_cast<int>(xs_.size()) > m_ + 1) {
                xs_.erase(xs_.begin());
                gs_.erase(gs_.begin());
            }
            const auto k = static_cast<Index>(xs_.size());
            if (k < 2 || !extrapolate) return false;
            const Index n = x.size();
            Matrix dF(n, k - 1), dG(n, k - 1);
            for (Index i = 0; i + 1 < k; ++i) {
                dF.col(i) = (gs_[i + 1] - xs_[i + 1]) - (gs_[i] - xs_[i]);
                dG.col(i) = gs_[i + 1] - gs_[i];
            }
            const Vector f = gs_.back() - xs_.back();
            const Vector gamma = dF.completeOrthogonalDecomposition().solve(f);
            if (!gamma.allFinite()) {
                reset();
                return false;
            }
            out = gs_.back() - dG * gamma;
            return true;
        }

    private:
        int m_;
        std::vector<Vector> xs_, gs_;
    };

    struct Block {
        Matrix h; // Gram block of the group's latent columns
        Vector evals;
        Matrix evecs;
        double cutoff = 0.0;
    };

    static double rel_change(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(a)); }

    void record(LatentSolution& sol, [[maybe_unused]] double before, double after) const
    {
        assert(after <= before + 1e-12 * std::max(1.0, std::abs(before)) && "objective increased");
        if (cfg_.record_objective) sol.objective_trace.push_back(after);
    }

    // Sums latent coefficients onto the distinct columns.
    Vector collapse(const Eigen::Ref<const Vector>& v) const
    {
        Vector w = Vector::Zero(gram_.cols());
        for (Index j = 0; j < n_; ++j) w(rep_[j]) += v(j);
        return w;
    }

    double smooth(const Eigen::Ref<const Vector>& w, const Eigen::Ref<const Vector>& gw) const
    {
        return yty_ - 2.0 * xty_.dot(w) + w.dot(gw);
    }

    static Vector pseudo_solve(const Matrix& h, const Vector& b)
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(h);
        const double cut = std::max(es.eigenvalues().maxCoeff(), 0.0) * 1e-12;
        Vector bt = es.eigenvectors().transpose() * b;
        for (Index i = 0; i < bt.size(); ++i)
            bt(i) = es.eigenvalues()(i) > cut ? bt(i) / es.eigenvalues()(i) : 0.0;
        return es.eigenvectors() * bt;
    }

    // Exact minimizer of 1/2 u'Hu - b'u + lam ||u|| with H = Q diag(e) Q',
    // written to out; bt is scratch of the same length.
    static void block_minimizer(const Block& blk, const Eigen::Ref<const Vector>& b, double lam,
                                Eigen::Ref<Vector> out, Eigen::Ref<Vector> bt)
    {
        const Index m = b.size();
        if (m == 1) {
            const double h = blk.evals(0);
            const double a = std::abs(b(0)) - lam;
            out(0) = (h > blk.cutoff && a > 0.0) ? std::copysign(a, b(0)) / h : 0.0;
            return;
        }
        if (b.norm() <= lam) {
            out.setZero();
            return;
        }
        bt.noalias() = blk.evecs.transpose() * b;
        for (Index i = 0; i < m; ++i)
            if (blk.evals(i) <= blk.cutoff) bt(i) = 0.0;
        if (lam == 0.0) {
            for (Index i = 0; i < m; ++i)
                bt(i) = blk.evals(i) > blk.cutoff ? bt(i) / blk.evals(i) : 0.0;
            out.noalias() = blk.evecs * bt;
            return;
        }
        if (bt.norm() <= lam) {
            out.setZero();
            return;
        }
        // Root t = ||u|| of phi(t) = sum bt_i^2 / (e_i t + lam)^2 = 1; phi is
        // convex and decreasing, so Newton from t = 0 increases monotonically.
        double t = 0.0;
        for (int it = 0; it < 200; ++it) {
            double phi = 0.0, dphi = 0.0;
            for (Index i = 0; i < m; ++i) {
                const double e = std::max(blk.evals(i), 0.0);
                const double den = e * t + lam;
                const double q = bt(i) * bt(i) / (den * den);
                phi += q;
                dphi -= 2.0 * q * e / den;
            }
            const double g = phi - 1.0;
            if (dphi == 0.0) break;
            const double step = g / dphi;
            t -= step;
            if (std::abs(step) <= 1e-15 * std::max(1.0, t)) break;
        }
        for (Index i = 0; i < m; ++i) {
            const double e = std::max(blk.evals(i), 0.0);
            bt(i) = bt(i) * t / (e * t + lam);
        }
        out.noalias() = blk.evecs * bt;
    }

    double sweep(const std::vector<Index>& order, double delta, Vector& v, Vector& w, Vector& gw) const
    {
        double max_change = 0.0;
        Vector old(max_block_), b(max_block_), next(max_block_), bt(max_block_);
        for (Index g : order) {
            const auto& rg = groups_[g];
            const auto& blk = blocks_[g];
            const Index m = rg.size;
            const Index* rep = rep_.data() + rg.start;
            old.head(m) = v.segment(rg.start, m);
            b.head(m).noalias() = blk.h * old.head(m);
            for (Index a = 0; a < m; ++a) b(a) += xty_(rep[a]) - gw(rep[a]);
            block_minimizer(blk, b.head(m), delta * weights_(g), next.head(m), bt.head(m));
            double dmax = 0.0;
            for (Index a = 0; a < m; ++a) {
                const double diff = next(a) - old(a);
                if (diff == 0.0) continue;
                dmax = std::max(dmax, std::abs(diff));
                v(rg.start + a) = next(a);
                w(rep[a]) += diff;
                gw.noalias() += diff * gram_.col(rep[a]);
            }
            max_change = std::max(max_change, dmax);
        }
        return max_change;
    }

    std::vector<GroupRange> groups_;
    Vector weights_;
    SolverConfig cfg_;
    Index n_ = 0;
    Index max_block_ = 1;
    std::vector<Index> rep_; // latent column -> distinct column
    Matrix gram_;            // over distinct columns
    Vector xty_;
    double yty_ = 0.0;
    std::vector<Block> blocks_;
    std::vector<Index> unpenalized_;
};

/// Solves one problem at its own delta.
inline LatentSolution solve(const PenalizedProblem& problem, SolverConfig cfg = {})
{
    problem.validate();
    Vector scales = cfg.standardize ? column_scales(problem) : Vector::Ones(problem.cols());
    const PenalizedProblem work = cfg.standardize ? scaled_problem(problem, scales) : problem;
    GroupLassoSolver solver(work, cfg);
    LatentSolution sol = solver.solve(problem.delta);
    sol.v = sol.v.cwiseQuotient(scales);
    sol.beta = problem.back_map_coefficients(sol.v);
    return sol;
}

// ---------------------------------------------------------------------------
// Initialization

/// Default ridge level: 1e-3 trace(X'X) / (T cols).
inline double default_ridge_level(const PenalizedProblem& p)
{
    const double tr = p.design.squaredNorm();
    return 1e-3 * tr / (static_cast<double>(p.rows()) * static_cast<double>(p.cols()));
}

/// argmin (1/T)||r - Xv||^2 + rho ||v||^2.
inline Vector ridge_init(const PenalizedProblem& p, double ridge_level)
{
    if (!(ridge_level > 0.0))
        throw std::invalid_argument("ridge_init: ridge level must be > 0");
    const double t = static_cast<double>(p.rows());
    Matrix a = Matrix::Zero(p.cols(), p.cols());
    a.selfadjointView<Eigen::Lower>().rankUpdate(p.design.transpose(), 1.0 / t);
    a.diagonal().array() += ridge_level;
    const Vector b = p.design.transpose() * p.response / t;
    return a.selfadjointView<Eigen::Lower>().ldlt().solve(b);
}

inline constexpr double kDefaultWeightCap = 1e12;
// Exponents of the adaptive weights. For singleton (adaptive LASSO) fits tuned
// by AIC, 2 keeps late-entering noise covariates off the path far more
// reliably than 1. Group fits keep 1: with 2, small true coefficients need
// deltas below the bottom of the path grid before they can enter.
inline constexpr double kDefaultGroupGamma = 1.0;
inline constexpr double kDefaultAlassoGamma = 2.0;

/// delta_g = min(1 / ||v_g||^gamma, cap); unpenalized groups keep weight 0.
inline Vector adaptive_weights(const PenalizedProblem& p, const Eigen::Ref<const Vector>& v_init, double gamma,
                               double weight_cap = kDefaultWeightCap)
{
    if (!(gamma > 0.0))
        throw std::invalid_argument("adaptive_weights: gamma must be > 0");
    Vector w(static_cast<Index>(p.groups.size()));
    for (std::size_t g = 0; g < p.groups.size(); ++g) {
        const auto gi = static_cast<Index>(g);
        if (p.group_weights(gi) == 0.0) {
            w(gi) = 0.0;
            continue;
        }
        const double nrm = v_init.segment(p.groups[g].start, p.groups[g].size).norm();
        const double raw = nrm > 0.0 ? std::pow(nrm, -gamma) : std::numeric_limits<double>::infinity();
        w(gi) = std::min(raw, weight_cap);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Regularization path and AIC tuning

enum class InitMethod { Ridge, OLS };
enum class DfMode { NonzeroCoefficients, GroupSizes };

struct InitConfig {
    InitMethod method = InitMethod::Ridge;
    std::optional<double> ridge_level; // default_ridge_level when unset
    double gamma = kDefaultGroupGamma;
    double weight_cap = kDefaultWeightCap;
};

struct PathConfig {
    int n_deltas = 40;
    double min_ratio = 1e-4;
    DfMode df_mode = DfMode::NonzeroCoefficients;
    // Re-estimate the selected support by least squares.
    bool refit = true;
    // RSS is floored at this fraction of ||r||^2 inside the AIC so that
    // exact fits tie and the sparser one wins.
    double rss_floor = 1e-20;
    bool extrapolate_warm_start = true;
    SolverConfig solver{};
};

struct PathPoint {
    double delta = 0.0;
    Index df = 0;
    double rss = 0.0;
    double aic = 0.0;
    double kkt_residual = 0.0;
    bool converged = true;
};

struct PathFit {
    double chosen_delta = 0.0;
    LatentSolution solution; // penalized fit at chosen_delta, original units
    Vector beta;             // final coefficients (refit on the support when enabled)
    std::vector<PathPoint> path;
    Vector group_weights;
    bool degenerate = false;
    std::vector<std::string> warnings;
};

namespace detail {
inline Vector least_squares_on(const Matrix& x, const Vector& r, const std::vector<Index>& cols)
{
    Vector beta = Vector::Zero(x.cols());
    if (cols.empty()) return beta;
    Matrix xs(x.rows(), static_cast<Index>(cols.size()));
    for (std::size_t a = 0; a < cols.size(); ++a)
        xs.col(static_cast<Index>(a)) = x.col(cols[a]);
    Eigen::ColPivHouseholderQR<Matrix> qr(xs);
    Vector sol;
    if (qr.rank() == xs.cols())
        sol = qr.solve(r);
    else
        sol = Eigen::CompleteOrthogonalDecomposition<Matrix>(xs).solve(r);
    for (std::size_t a = 0; a < cols.size(); ++a)
        beta(cols[a]) = sol(static_cast<Index>(a));
    return beta;
}

// Same, from a precomputed Gram x'x and x'r; falls back to QR on x when the
// selected Gram is not comfortably positive definite.
inline Vector least_squares_gram(const Matrix& x, const Vector& r, const Matrix& gram, const Vector& xtr,
                                 const std::vector<Index>& cols)
{
    const auto n = static_cast<Index>(cols.size());
    if (n == 0) return Vector::Zero(x.cols());
    Matrix g(n, n);
    Vector b(n);
    for (Index a = 0; a < n; ++a) {
        b(a) = xtr(cols[a]);
        for (Index c = 0; c < n; ++c) g(a, c) = gram(cols[a], cols[c]);
    }
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-10)) return least_squares_on(x, r, cols);
    const Vector sol = llt.solve(b);
    Vector beta = Vector::Zero(x.cols());
    for (Index a = 0; a < n; ++a) beta(cols[a]) = sol(a);
    return beta;
}

inline bool full_column_rank(const Matrix& x)
{
    if (x.rows() < x.cols()) return false;
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    return qr.rank() == x.cols();
}
} // namespace detail

/// Sets adaptive group weights on a (scaled) problem from the configured initializer.
inline Vector initial_weights(const PenalizedProblem& scaled, const InitConfig& init)
{
    Vector v0;
    if (init.method == InitMethod::OLS && detail::full_column_rank(scaled.design)) {
        v0 = scaled.design.colPivHouseholderQr().solve(scaled.response);
    } else {
        const double rho = init.ridge_level ? *init.ridge_level : default_ridge_level(scaled);
        v0 = ridge_init(scaled, rho);
    }
    return adaptive_weights(scaled, v0, init.gamma, init.weight_cap);
}

/// Runs the delta path from delta_max down to delta_max * min_ratio with warm
/// starts and returns the AIC minimizer (ties go to the larger delta). The
/// problem's own group_weights are replaced by adaptive weights unless
/// `fixed_weights` is set.
inline PathFit fit_path_aic(const PenalizedProblem& problem, const InitConfig& init, const PathConfig& cfg,
                            bool fixed_weights = false)
{
    problem.validate();
    if (cfg.n_deltas < 1)
        throw std::invalid_argument("fit_path_aic: n_deltas must be >= 1");
    PathFit out;
    const Matrix x_orig = problem.original_design();
    const Vector& r = problem.response;
    const double t = static_cast<double>(problem.rows());
    const double rr = r.squaredNorm();

    const Vector scales = cfg.solver.standardize ? column_scales(problem) : Vector::Ones(problem.cols());
    PenalizedProblem work = cfg.solver.standardize ? scaled_problem(problem, scales) : problem;
    if (!fixed_weights) work.group_weights = initial_weights(work, init);
    out.group_weights = work.group_weights;

    GroupLassoSolver solver(work, cfg.solver);

    auto finalize = [&](LatentSolution s) {
        s.v = s.v.cwiseQuotient(scales);
        s.beta = problem.back_map_coefficients(s.v);
        return s;
    };

    if (rr == 0.0) {
        out.degenerate = true;
        out.warnings.push_back("response is identically zero; returning the unpenalized-only fit");
        out.solution = finalize(solver.solve(std::numeric_limits<double>::max() / 4));
        out.beta = out.solution.beta;
        out.chosen_delta = solver.delta_max();
        return out;
    }

    const double dmax = solver.delta_max();
    std::vector<double> grid(cfg.n_deltas);
    for (int k = 0; k < cfg.n_deltas; ++k) {
        const double frac = cfg.n_deltas == 1 ? 0.0 : double(k) / double(cfg.n_deltas - 1);
        grid[k] = dmax * std::pow(cfg.min_ratio, frac);
    }

    std::optional<Vector> warm;
    double best_aic = std::numeric_limits<double>::infinity();
    std::map<std::vector<Index>, std::pair<Vector, double>> refits; // support -> (beta, rss)
    Matrix gram_orig;
    Vector xtr;
    std::optional<Vector> prev;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double delta = grid[k];
        // On the log-spaced grid, extrapolate the last two solutions linearly
        // and keep whichever start has the lower objective.
        if (warm && prev && cfg.extrapolate_warm_start) {
            Vector guess = 2.0 * *warm - *prev;
            if (solver.objective(guess, delta) < solver.objective(*warm, delta)) warm = std::move(guess);
        }
        LatentSolution s = solver.solve(delta, warm);
        prev = std::move(warm);
        warm = s.v;
        PathPoint pt;
        pt.delta = delta;
        pt.kkt_residual = s.kkt_residual;
        pt.converged = s.converged;
        LatentSolution fin = finalize(s);
        std::vector<Index> support;
        for (Index j = 0; j < fin.beta.size(); ++j)
            if (fin.beta(j) != 0.0) support.push_back(j);
        Vector beta;
        if (!cfg.refit) {
            beta = fin.beta;
            pt.rss = (r - x_orig * beta).squaredNorm();
        } else if (auto hit = refits.find(support); hit != refits.end()) {
            beta = hit->second.first;
            pt.rss = hit->second.second;
        } else {
            if (gram_orig.size() == 0) {
                gram_orig = Matrix::Zero(x_orig.cols(), x_orig.cols());
                gram_orig.selfadjointView<Eigen::Lower>().rankUpdate(x_orig.transpose());
                gram_orig.triangularView<Eigen::StrictlyUpper>() = gram_orig.transpose();
                xtr = x_orig.transpose() * r;
            }
            beta = detail::least_squares_gram(x_orig, r, gram_orig, xtr, support);
            pt.rss = (r - x_orig * beta).squaredNorm();
            refits.emplace(support, std::make_pair(beta, pt.rss));
        }
        if (cfg.df_mode == DfMode::NonzeroCoefficients) {
            pt.df = static_cast<Index>(support.size());
        } else {
            for (Index g : fin.active_groups)
                pt.df += problem.groups[g].size;
        }
        const double rss = std::max(pt.rss, cfg.rss_floor * rr);
        pt.aic = t * std::log(rss / t) + 2.0 * static_cast<double>(pt.df);
        if (!s.converged)
            out.warnings.push_back("solver did not converge at delta=" + std::to_string(delta));
        if (out.path.empty() || pt.aic < best_aic - 1e-9 * std::max(1.0, std::abs(best_aic))) {
            best_aic = pt.aic;
            out.chosen_delta = delta;
            out.solution = std::move(fin);
            out.beta = std::move(beta);
        }
        out.path.push_back(pt);
    }
    return out;
}

/// Adaptive LASSO along an AIC-tuned path. Weights come from OLS when the
/// design has full column rank, ridge otherwise.
inline PathFit alasso_fit(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Vector>& r,
                          const std::vector<bool>& unpenalized_mask, double gamma, int n_deltas,
                          PathConfig cfg = {})
{
    InitConfig init;
    init.method = InitMethod::OLS;
    init.gamma = gamma;
    cfg.n_deltas = n_deltas;
    return fit_path_aic(make_alasso_problem(x, r, unpenalized_mask), init, cfg);
}

} // namespace aogl
