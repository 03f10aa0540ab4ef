#pragma once

// Panel ingestion from CSV, validation, and preprocessing (characteristic
// ranks, instrument standardization).

#include "first_pass.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace aogl {

/// Bad input data or configuration; the CLI maps it to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Months

/// "yyyy-mm" to year * 12 + (month - 1).
inline int parse_month(const std::string& s)
{
    int y = 0, m = 0;
    char dash = 0;
    std::istringstream is(s);
    if (s.size() != 7 || !(is >> y >> dash >> m) || dash != '-' || m < 1 || m > 12 || s[4] != '-')
        throw ValidationError("bad date '" + s + "', expected yyyy-mm");
    return y * 12 + (m - 1);
}

inline std::string format_month(int ym)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", ym / 12, ym % 12 + 1);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

namespace csv {

struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<Index> line; // 1-based file line of each row

    Index column(const std::string& col) const
    {
        const auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end()) throw ValidationError(name + ": missing column '" + col + "'");
        return static_cast<Index>(it - header.begin());
    }
    std::string where(std::size_t r) const { return name + " line " + std::to_string(line[r]); }
};

/// Comma separated, optional double quotes with "" escapes, no embedded newlines.
inline std::vector<std::string> split_line(const std::string& raw, const std::string& where)
{
    std::string s = raw;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (quoted) {
            if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') cur += '"', ++i;
            else if (c == '"') quoted = false;
            else cur += c;
        } else if (c == '"' && cur.empty() && !was_quoted) {
            quoted = was_quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw ValidationError(where + ": unterminated quote");
    out.push_back(cur);
    return out;
}

inline Table read(std::istream& in, const std::string& name)
{
    Table t;
    t.name = name;
    std::string raw;
    Index ln = 0;
    while (std::getline(in, raw)) {
        ++ln;
        if (raw.empty() || raw == "\r") continue;
        auto cells = split_line(raw, name + " line " + std::to_string(ln));
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ValidationError(name + " line " + std::to_string(ln) + ": " + std::to_string(cells.size()) +
                                  " fields, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
        t.line.push_back(ln);
    }
    if (t.header.empty()) throw ValidationError(name + ": empty file");
    return t;
}

inline Table read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return read(in, path);
}

/// Empty, NA and NaN cells read as NaN.
inline double to_double(const std::string& cell, const std::string& where)
{
    if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') throw ValidationError(where + ": '" + cell + "' is not a number");
    return v;
}

/// Shortest text that reads back to the same double; NaN as empty.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + '"';
}

} // namespace csv

// ---------------------------------------------------------------------------
// Panel

struct ColumnBindings {
    std::string asset = "asset_id";
    std::string date = "date";
    std::string ret = "excess_return";
    // Empty lists take every non-key column in file order.
    std::vector<std::string> factors, instruments, characteristics;
};

struct PanelPaths {
    std::string returns, factors, instruments, characteristics; // the last two may be empty when p or q is 0
};

struct PanelData {
    std::vector<std::string> assets; // sorted
    std::vector<int> dates;          // consecutive months
    std::vector<std::string> factor_names, instrument_names, characteristic_names;
    Matrix factors;                  // T x K
    Matrix instruments;              // T x p, row t holds the values at t - 1
    Matrix returns;                  // T x n, NaN where unobserved
    std::vector<Matrix> characteristics; // per asset, T x q at t - 1, NaN where absent
    std::vector<Index> T_i;
    std::vector<std::string> short_assets; // T_i below the minimum, kept and listed
    std::vector<std::string> warnings;

    Index T() const { return static_cast<Index>(dates.size()); }
    Index n() const { return static_cast<Index>(assets.size()); }
    ModelSpec spec() const { return dimensions(factors.cols(), instruments.cols(), q()); }
    Index q() const { return static_cast<Index>(characteristic_names.size()); }

    /// Row of the first date after `last_train`, i.e. the number of training rows.
    Index split_row(int last_train) const
    {
        return static_cast<Index>(std::upper_bound(dates.begin(), dates.end(), last_train) - dates.begin());
    }

    std::vector<AssetData> asset_data(Index from, Index count) const
    {
        std::vector<AssetData> out;
        out.reserve(assets.size());
        for (Index i = 0; i < n(); ++i) {
            AssetData a{assets[i], {}, returns.col(i).segment(from, count)};
            for (Index u = from; u < from + count; ++u)
                a.rows.push_back(ObservationRow{factors.row(u).transpose(), instruments.row(u).transpose(),
                                                characteristics[i].row(u).transpose(), std::isfinite(returns(u, i))});
            out.push_back(std::move(a));
        }
        return out;
    }

    /// Structural checks; throws ValidationError.
    void validate() const
    {
        const Index t = T();
        if (t == 0) throw ValidationError("panel: no dates");
        for (Index u = 1; u < t; ++u)
            if (dates[u] != dates[u - 1] + 1) throw ValidationError("panel: dates are not consecutive months");
        if (factors.rows() != t || instruments.rows() != t || returns.rows() != t || returns.cols() != n() ||
            static_cast<Index>(characteristics.size()) != n())
            throw ValidationError("panel: table shapes disagree");
        if (!factors.allFinite() || !instruments.allFinite())
            throw ValidationError("panel: factors and instruments must be finite");
        for (Index i = 0; i < n(); ++i)
            for (Index u = 0; u < t; ++u)
                if (std::isfinite(returns(u, i)) && !characteristics[i].row(u).allFinite())
                    throw ValidationError("panel: " + assets[i] + " " + format_month(dates[u]) +
                                          ": characteristics missing at the previous month");
    }
};

namespace detail {

inline std::vector<std::string> value_columns(const csv::Table& t, const std::vector<std::string>& wanted,
                                              const std::vector<std::string>& keys)
{
    if (!wanted.empty()) {
        for (const auto& c : wanted) t.column(c);
        return wanted;
    }
    std::vector<std::string> out;
    for (const auto& h : t.header)
        if (std::find(keys.begin(), keys.end(), h) == keys.end()) out.push_back(h);
    return out;
}

/// Wide table keyed by consecutive months.
struct Wide {
    std::vector<std::string> names;
    std::map<int, Vector> by_month;
};

inline Wide read_wide(const csv::Table& t, const std::string& date_col, const std::vector<std::string>& wanted)
{
    Wide w;
    w.names = value_columns(t, wanted, {date_col});
    const Index dc = t.column(date_col);
    std::vector<Index> cols;
    for (const auto& n : w.names) cols.push_back(t.column(n));
    int prev = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        int m = 0;
        try {
            m = parse_month(t.rows[r][dc]);
        } catch (const ValidationError& e) {
            throw ValidationError(t.where(r) + ": " + e.what());
        }
        if (r > 0 && m == prev) throw ValidationError(t.where(r) + ": duplicate date " + format_month(m));
        if (r > 0 && m != prev + 1)
            throw ValidationError(t.where(r) + ": date " + format_month(m) + " does not follow " + format_month(prev) +
                                  " by one month");
        Vector v(static_cast<Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) {
            v(static_cast<Index>(j)) = csv::to_double(t.rows[r][cols[j]], t.where(r));
            if (!std::isfinite(v(static_cast<Index>(j))))
                throw ValidationError(t.where(r) + ": missing value in '" + w.names[j] + "'");
        }
        w.by_month.emplace(m, std::move(v));
        prev = m;
    }
    return w;
}

} // namespace detail

/// Factors define the panel dates; instruments and characteristics are read
/// at t - 1 for every date t. Assets with fewer than `min_observations`
/// returns are kept and listed in short_assets.
inline PanelData load_panel(const PanelPaths& paths, const ColumnBindings& b, Index min_observations = 0)
{
    PanelData p;
    const auto ft = csv::read_file(paths.factors);
    const auto fw = detail::read_wide(ft, b.date, b.factors);
    if (fw.by_month.empty()) throw ValidationError(paths.factors + ": no rows");
    p.factor_names = fw.names;
    for (const auto& [m, v] : fw.by_month) p.dates.push_back(m);
    const Index t = p.T();
    const Index k = static_cast<Index>(fw.names.size());
    if (k == 0) throw ValidationError(paths.factors + ": no factor columns");
    p.factors.resize(t, k);
    for (Index u = 0; u < t; ++u) p.factors.row(u) = fw.by_month.at(p.dates[u]).transpose();

    if (!paths.instruments.empty()) {
        const auto it = csv::read_file(paths.instruments);
        const auto iw = detail::read_wide(it, b.date, b.instruments);
        p.instrument_names = iw.names;
        p.instruments.resize(t, static_cast<Index>(iw.names.size()));
        for (Index u = 0; u < t; ++u) {
            const auto f = iw.by_month.find(p.dates[u] - 1);
            if (f == iw.by_month.end())
                throw ValidationError(paths.instruments + ": no row for " + format_month(p.dates[u] - 1) +
                                      ", needed as the lag of " + format_month(p.dates[u]));
            p.instruments.row(u) = f->second.transpose();
        }
    } else {
        p.instruments.resize(t, 0);
    }

    const auto rt = csv::read_file(paths.returns);
    const Index ra = rt.column(b.asset), rd = rt.column(b.date), rr = rt.column(b.ret);
    std::set<std::string> ids;
    for (const auto& row : rt.rows) ids.insert(row[ra]);
    p.assets.assign(ids.begin(), ids.end());
    std::map<std::string, Index> pos;
    for (Index i = 0; i < p.n(); ++i) pos[p.assets[i]] = i;
    p.returns = Matrix::Constant(t, p.n(), std::numeric_limits<double>::quiet_NaN());
    std::map<std::pair<Index, Index>, Index> seen;
    for (std::size_t r = 0; r < rt.rows.size(); ++r) {
        const auto& row = rt.rows[r];
        int m = 0;
        try {
            m = parse_month(row[rd]);
        } catch (const ValidationError& e) {
            throw ValidationError(rt.where(r) + ": " + e.what());
        }
        if (m < p.dates.front() || m > p.dates.back())
            throw ValidationError(rt.where(r) + ": date " + row[rd] + " outside the factor dates");
        const Index u = m - p.dates.front(), i = pos.at(row[ra]);
        const auto [it, fresh] = seen.emplace(std::make_pair(i, u), rt.line[r]);
        if (!fresh)
            throw ValidationError(rt.where(r) + ": duplicate row for (" + row[ra] + ", " + row[rd] + "), first at line " +
                                  std::to_string(it->second));
        const double v = csv::to_double(row[rr], rt.where(r));
        if (!std::isfinite(v)) throw ValidationError(rt.where(r) + ": missing return");
        p.returns(u, i) = v;
    }

    p.characteristics.assign(p.n(), Matrix());
    if (!paths.characteristics.empty()) {
        const auto ct = csv::read_file(paths.characteristics);
        p.characteristic_names = detail::value_columns(ct, b.characteristics, {b.asset, b.date});
        const Index q = p.q();
        for (auto& c : p.characteristics) c = Matrix::Constant(t, q, std::numeric_limits<double>::quiet_NaN());
        const Index ca = ct.column(b.asset), cd = ct.column(b.date);
        std::vector<Index> cols;
        for (const auto& n : p.characteristic_names) cols.push_back(ct.column(n));
        std::map<std::pair<std::string, int>, Index> cseen;
        for (std::size_t r = 0; r < ct.rows.size(); ++r) {
            const auto& row = ct.rows[r];
            int m = 0;
            try {
                m = parse_month(row[cd]);
            } catch (const ValidationError& e) {
                throw ValidationError(ct.where(r) + ": " + e.what());
            }
            const auto [it, fresh] = cseen.emplace(std::make_pair(row[ca], m), ct.line[r]);
            if (!fresh)
                throw ValidationError(ct.where(r) + ": duplicate row for (" + row[ca] + ", " + row[cd] +
                                      "), first at line " + std::to_string(it->second));
            const auto ap = pos.find(row[ca]);
            const Index u = m + 1 - p.dates.front();
            if (ap == pos.end() || u < 0 || u >= t) continue; // not needed as a lag
            for (Index j = 0; j < q; ++j)
                p.characteristics[ap->second](u, j) = csv::to_double(row[cols[j]], ct.where(r));
        }
    } else {
        for (auto& c : p.characteristics) c.resize(t, 0);
    }

    for (Index i = 0; i < p.n(); ++i) {
        Index cnt = 0;
        for (Index u = 0; u < t; ++u) {
            if (!std::isfinite(p.returns(u, i))) continue;
            ++cnt;
            if (!p.characteristics[i].row(u).allFinite()) {
                const auto line = seen.at({i, u});
                throw ValidationError(paths.returns + " line " + std::to_string(line) + ": " + p.assets[i] + " " +
                                      format_month(p.dates[u]) + " has no complete characteristics at " +
                                      format_month(p.dates[u] - 1));
            }
        }
        p.T_i.push_back(cnt);
        if (cnt < min_observations) {
            p.short_assets.push_back(p.assets[i]);
            p.warnings.push_back(p.assets[i] + ": " + std::to_string(cnt) + " returns, below the minimum " +
                                 std::to_string(min_observations));
        }
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Preprocessing

enum class RankMap {
    UnitInterval, // (rank - 1) / (n - 1)
    Symmetric     // 2 (rank - 1) / (n - 1) - 1
};

/// Average ranks of the finite entries, mapped per `map`; NaN stays NaN. A
/// single finite entry maps to the midpoint and sets *single.
inline Vector cross_sectional_ranks(const Eigen::Ref<const Vector>& x, RankMap map = RankMap::UnitInterval,
                                    bool* single = nullptr)
{
    std::vector<Index> idx;
    for (Index i = 0; i < x.size(); ++i)
        if (std::isfinite(x(i))) idx.push_back(i);
    Vector out = Vector::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
    const Index n = static_cast<Index>(idx.size());
    if (single) *single = n == 1;
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return x(a) < x(b); });
    for (Index a = 0; a < n;) {
        Index b = a;
        while (b + 1 < n && x(idx[b + 1]) == x(idx[a])) ++b;
        const double avg = 0.5 * double(a + b); // zero-based average rank
        const double u = n > 1 ? avg / double(n - 1) : 0.5;
        for (Index c = a; c <= b; ++c) out(idx[c]) = map == RankMap::UnitInterval ? u : 2.0 * u - 1.0;
        a = b + 1;
    }
    return out;
}

struct PreprocessOptions {
    bool rank_characteristics = true;
    RankMap rank_map = RankMap::UnitInterval;
    bool standardize_instruments = true;
    Index train_rows = -1; // rows used for instrument moments; < 0 means all
};

inline PanelData preprocess(PanelData p, const PreprocessOptions& o = {})
{
    const Index t = p.T();
    if (o.rank_characteristics && p.q() > 0) {
        Vector col(p.n());
        for (Index u = 0; u < t; ++u) {
            for (Index j = 0; j < p.q(); ++j) {
                for (Index i = 0; i < p.n(); ++i) col(i) = p.characteristics[i](u, j);
                bool single = false;
                const Vector r = cross_sectional_ranks(col, o.rank_map, &single);
                for (Index i = 0; i < p.n(); ++i) p.characteristics[i](u, j) = r(i);
                if (single && j == 0)
                    p.warnings.push_back(format_month(p.dates[u] - 1) + ": one asset with characteristics, rank set to the midpoint");
            }
        }
    }
    if (o.standardize_instruments && p.instruments.cols() > 0) {
        const Index rows = o.train_rows < 0 ? t : o.train_rows;
        if (rows < 2 || rows > t) throw ValidationError("preprocess: training window needs 2 to T rows");
        for (Index j = 0; j < p.instruments.cols(); ++j) {
            const auto head = p.instruments.col(j).head(rows);
            const double mean = head.mean();
            const double sd = std::sqrt((head.array() - mean).square().mean());
            if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
                throw ValidationError("preprocess: instrument '" + p.instrument_names[j] +
                                      "' has zero variance over the training window");
            p.instruments.col(j) = (p.instruments.col(j).array() - mean) / sd;
        }
    }
    return p;
}

} // namespace aogl
