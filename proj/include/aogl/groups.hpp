#pragma once

// No-arbitrage group structure over the regression coefficients, its
// covariate duplication, model counting/enumeration and the compliance check
// for an arbitrary support.
//
// Groups, in order:
//   g1  intercept + bare factors (unpenalized)
//   g2  one singleton per off-diagonal vech entry 2 Zt_s Zt_l
//   g3  for instrument l, factor k: {Z_l^2, f_k Z_l}            (l outer, k inner)
//   g4  for characteristic m, factor k:
//         {Zi_m, Z_1 Zi_m, ..., Z_p Zi_m, f_k Zi_m}            (m outer, k inner)
//
// Note on the closed-form indices: the alternative closed forms
//   f_k Z_l  -> d1 + k + (l-1) pt + 1,   f_k Zi_m -> d1 + d21 + k + (m-1) q + 1
// do not reproduce the worked K=2, p=1, q=1 groups. The placement used here is
//   f_k Z_l  -> d1 + (k-1) pt + l + 1,   f_k Zi_m -> d1 + d21 + (k-1) q + m
// (1-based), which matches the x2 ordering and the 32-model table.

#include "design.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace aogl {

/// Sorted set of 0-based coefficient positions.
class SupportSet {
public:
    SupportSet() = default;
    explicit SupportSet(std::vector<Index> idx) : idx_(std::move(idx))
    {
        std::sort(idx_.begin(), idx_.end());
        idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
    }

    static SupportSet from_beta(const Eigen::Ref<const Vector>& beta)
    {
        std::vector<Index> idx;
        for (Index j = 0; j < beta.size(); ++j)
            if (beta(j) != 0.0) idx.push_back(j);
        return SupportSet(std::move(idx));
    }

    bool contains(Index j) const { return std::binary_search(idx_.begin(), idx_.end(), j); }
    std::size_t size() const { return idx_.size(); }
    bool empty() const { return idx_.empty(); }
    const std::vector<Index>& indices() const { return idx_; }
    auto begin() const { return idx_.begin(); }
    auto end() const { return idx_.end(); }

    std::vector<Index> one_based() const
    {
        std::vector<Index> out(idx_);
        for (auto& v : out) ++v;
        return out;
    }

    friend bool operator==(const SupportSet&, const SupportSet&) = default;
    friend auto operator<=>(const SupportSet& a, const SupportSet& b) { return a.idx_ <=> b.idx_; }

private:
    std::vector<Index> idx_;
};

enum class GroupKind { TimeInvariant, OffDiagonal, Instrument, Characteristic };

struct Group {
    GroupKind kind;
    std::vector<Index> members; // ascending original indices
    Index variable = -1;        // instrument l (1..p) or characteristic m (0..q-1)
    Index factor = -1;          // factor k for g3/g4
};

struct GroupStructure {
    ModelSpec spec;
    std::vector<Group> groups;
    std::vector<Index> duplication_map; // expanded slot -> original index
    std::vector<Index> group_start;     // first expanded slot of each group
    Index unpenalized = 0;

    Index J() const { return static_cast<Index>(groups.size()); }
    Index d_tilde() const { return static_cast<Index>(duplication_map.size()); }
    Index group_size(Index g) const { return static_cast<Index>(groups[g].members.size()); }

    /// Expands an original design (T x d) into the duplicated design (T x d~).
    Matrix expand(const Eigen::Ref<const Matrix>& x) const
    {
        if (x.cols() != spec.d())
            throw std::invalid_argument("GroupStructure::expand: column mismatch");
        Matrix out(x.rows(), d_tilde());
        for (Index s = 0; s < d_tilde(); ++s)
            out.col(s) = x.col(duplication_map[s]);
        return out;
    }

    /// beta = sum_g v_g on original indices.
    Vector back_map(const Eigen::Ref<const Vector>& v) const
    {
        Vector beta = Vector::Zero(spec.d());
        for (Index s = 0; s < d_tilde(); ++s)
            beta(duplication_map[s]) += v(s);
        return beta;
    }
};

inline GroupStructure build_groups(const ModelSpec& spec)
{
    GroupStructure gs;
    gs.spec = spec;
    const Index pt = spec.pt();

    Group g1{GroupKind::TimeInvariant, spec.ti_indices()};
    gs.groups.push_back(g1);

    for (Index j = 0; j < pt; ++j)
        for (Index i = j + 1; i < pt; ++i)
            gs.groups.push_back(Group{GroupKind::OffDiagonal, {spec.offdiag_index(i, j)}, i, j});

    for (Index l = 1; l < pt; ++l)
        for (Index k = 0; k < spec.K; ++k)
            gs.groups.push_back(
                Group{GroupKind::Instrument, {spec.diag_index(l), spec.scaled_factor_index(k, l)}, l, k});

    for (Index m = 0; m < spec.q; ++m) {
        for (Index k = 0; k < spec.K; ++k) {
            Group g{GroupKind::Characteristic, {}, m, k};
            for (Index s = 0; s < pt; ++s)
                g.members.push_back(spec.x1_char_index(s, m));
            g.members.push_back(spec.char_factor_index(k, m));
            gs.groups.push_back(std::move(g));
        }
    }

    for (auto& g : gs.groups) {
        std::sort(g.members.begin(), g.members.end());
        gs.group_start.push_back(static_cast<Index>(gs.duplication_map.size()));
        gs.duplication_map.insert(gs.duplication_map.end(), g.members.begin(), g.members.end());
    }
    return gs;
}

/// Closed-form J = 1 + pt(pt-1)/2 + Kp + Kq.
inline Index group_count_formula(const ModelSpec& s)
{
    return 1 + s.pt() * (s.pt() - 1) / 2 + s.K * s.p + s.K * s.q;
}

/// Closed-form d~ = K(pt(q+2) + q - 1) + (pt-1)pt/2 + 1.
inline Index expanded_dim_formula(const ModelSpec& s)
{
    return s.K * (s.pt() * (s.q + 2) + s.q - 1) + (s.pt() - 1) * s.pt() / 2 + 1;
}

// ---------------------------------------------------------------------------

/// Model counts as base-2 exponents.
struct ModelCount {
    Index compliant_exponent = 0;    // J - 1
    Index unrestricted_exponent = 0; // d - (K + 1)
    Index ratio_exponent = 0;        // -(pq + p + q)
    bool bound_applies = false;      // min(p, q) >= 1
    bool bound_holds = true;         // ratio <= 1/8 when it applies
};

inline ModelCount count_models(const GroupStructure& gs)
{
    const auto& s = gs.spec;
    ModelCount c;
    c.compliant_exponent = gs.J() - 1;
    c.unrestricted_exponent = s.d() - (s.K + 1);
    c.ratio_exponent = c.compliant_exponent - c.unrestricted_exponent;
    if (c.ratio_exponent != -(s.p * s.q + s.p + s.q))
        throw std::logic_error("count_models: exponent identity violated");
    c.bound_applies = std::min(s.p, s.q) >= 1;
    c.bound_holds = !c.bound_applies || c.ratio_exponent <= -3;
    return c;
}

inline constexpr Index kMaxEnumerableGroups = 20;

struct ModelEnumeration {
    // One entry per subset of penalized groups (bit g-1 set <=> group g chosen).
    std::vector<std::uint32_t> subsets;
    std::vector<SupportSet> supports;
    // Sorted, deduplicated.
    std::vector<SupportSet> distinct;
};

inline ModelEnumeration enumerate_models(const GroupStructure& gs)
{
    if (gs.J() > kMaxEnumerableGroups) {
        std::ostringstream os;
        os << "enumerate_models: J = " << gs.J() << " groups would produce 2^" << gs.J() - 1
           << " models; enumeration is limited to J <= " << kMaxEnumerableGroups;
        throw std::domain_error(os.str());
    }
    const Index penalized = gs.J() - 1;
    ModelEnumeration out;
    const std::uint32_t n = std::uint32_t{1} << penalized;
    out.subsets.reserve(n);
    out.supports.reserve(n);
    for (std::uint32_t mask = 0; mask < n; ++mask) {
        std::vector<Index> idx = gs.groups[0].members;
        for (Index g = 1; g < gs.J(); ++g)
            if (mask & (std::uint32_t{1} << (g - 1)))
                idx.insert(idx.end(), gs.groups[g].members.begin(), gs.groups[g].members.end());
        out.subsets.push_back(mask);
        out.supports.emplace_back(std::move(idx));
    }
    std::set<SupportSet> uniq(out.supports.begin(), out.supports.end());
    out.distinct.assign(uniq.begin(), uniq.end());
    return out;
}

// ---------------------------------------------------------------------------

struct ArbitrageVerdict {
    bool compliant = true;
    std::vector<std::string> violations;
};

struct ArbitrageCheckOptions {
    // Off-diagonal Z_s Z_l (s, l >= 1) terms require a scaled factor on Z_s or Z_l.
    bool strict = false;
};

/// Checks a support against the no-arbitrage inclusion rules. The terms
/// 2 Z_l (vech row 0) are always exempt.
inline ArbitrageVerdict check_no_arbitrage(const SupportSet& support, const ModelSpec& spec,
                                           ArbitrageCheckOptions opts = {})
{
    ArbitrageVerdict v;
    auto fail = [&](std::string msg) {
        v.compliant = false;
        v.violations.push_back(std::move(msg));
    };
    for (Index j : support)
        if (j < 0 || j >= spec.d()) {
            fail("index " + std::to_string(j + 1) + " outside 1.." + std::to_string(spec.d()));
            return v;
        }

    for (Index j : spec.ti_indices())
        if (!support.contains(j))
            fail("time-invariant covariate " + std::to_string(j + 1) + " missing");

    auto instrument_loaded = [&](Index l) {
        for (Index k = 0; k < spec.K; ++k)
            if (support.contains(spec.scaled_factor_index(k, l))) return true;
        return false;
    };

    for (Index l = 1; l <= spec.p; ++l) {
        const bool square = support.contains(spec.diag_index(l));
        const bool loaded = instrument_loaded(l);
        if (square && !loaded)
            fail("instrument " + std::to_string(l) + ": squared term " + std::to_string(spec.diag_index(l) + 1) +
                 " without any scaled factor");
        if (!square && loaded)
            fail("instrument " + std::to_string(l) + ": scaled factor without squared term " +
                 std::to_string(spec.diag_index(l) + 1));
    }

    for (Index m = 0; m < spec.q; ++m) {
        bool in_x1 = false;
        for (Index s = 0; s < spec.pt(); ++s)
            in_x1 = in_x1 || support.contains(spec.x1_char_index(s, m));
        bool loaded = false;
        for (Index k = 0; k < spec.K; ++k)
            loaded = loaded || support.contains(spec.char_factor_index(k, m));
        if (in_x1 && !loaded)
            fail("characteristic " + std::to_string(m + 1) + ": intercept terms without any scaled factor");
        if (!in_x1 && loaded)
            fail("characteristic " + std::to_string(m + 1) + ": scaled factor without intercept terms");
    }

    if (opts.strict) {
        for (Index j = 1; j <= spec.p; ++j)
            for (Index i = j + 1; i <= spec.p; ++i)
                if (support.contains(spec.offdiag_index(i, j)) && !instrument_loaded(i) && !instrument_loaded(j))
                    fail("cross term Z" + std::to_string(j) + "*Z" + std::to_string(i) +
                         " without scaled factors on either instrument");
    }
    return v;
}

} // namespace aogl
