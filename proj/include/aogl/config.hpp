#pragma once

// Run and simulation configuration read from TOML files.

#include "montecarlo.hpp"
#include "panel.hpp"

#include <filesystem>
#include <json.hpp>
#include <toml.hpp>

namespace aogl {

struct PredictionOptions {
    PredictionRoute route = PredictionRoute::Fitted;
    Index horizon = 12;
    R2Benchmark r2_benchmark = R2Benchmark::Zero;
    // Time-invariant loadings with time-varying premia (TI uses F_hat instead
    // of the sample factor mean).
    bool ti_hybrid = false;
};

struct RunConfig {
    PanelPaths paths;
    ColumnBindings bindings;
    Index min_observations = 0; // 0 means K + 2
    std::vector<Method> methods{Method::aOGL, Method::aLASSO, Method::TI};
    std::optional<int> split;   // last training month; none means in-sample over all dates
    FirstPassConfig first_pass;
    SecondPassConfig second_pass;
    PreprocessOptions preprocess;
    PredictionOptions prediction;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string output = "out";

    void validate() const
    {
        if (!(first_pass.trimming.chi1 > 1.0)) throw ValidationError("config: trimming.chi1 must be > 1");
        if (!(first_pass.trimming.chi2 >= 1.0)) throw ValidationError("config: trimming.chi2 must be >= 1");
        if (methods.empty()) throw ValidationError("config: run.methods is empty");
        if (threads < 1) throw ValidationError("config: run.threads must be >= 1");
        if (prediction.horizon < 0) throw ValidationError("config: prediction.horizon must be >= 0");
        if (first_pass.path.n_deltas < 2) throw ValidationError("config: first_pass.n_deltas must be >= 2");
        if (!(first_pass.init.gamma > 0.0) || !(first_pass.alasso_gamma > 0.0))
            throw ValidationError("config: gamma values must be positive");
    }
};

namespace detail {

/// Reads a TOML table while tracking the keys consumed, so typos surface.
class TomlSection {
public:
    TomlSection(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

    bool present() const { return t_ != nullptr; }

    template <class F>
    void opt(const std::string& key, F&& apply)
    {
        used_.insert(key);
        if (!t_) return;
        const toml::node* n = t_->get(key);
        if (n) apply(*n, name_ + "." + key);
    }

    void number(const std::string& key, double& out)
    {
        opt(key, [&](const toml::node& n, const std::string& w) { out = as_double(n, w); });
    }
    template <class I>
    void integer(const std::string& key, I& out)
    {
        opt(key, [&](const toml::node& n, const std::string& w) {
            if (!n.is_integer()) throw ValidationError("config: " + w + " must be an integer");
            out = static_cast<I>(*n.value<std::int64_t>());
        });
    }
    void boolean(const std::string& key, bool& out)
    {
        opt(key, [&](const toml::node& n, const std::string& w) {
            if (!n.is_boolean()) throw ValidationError("config: " + w + " must be true or false");
            out = *n.value<bool>();
        });
    }
    void string(const std::string& key, std::string& out)
    {
        opt(key, [&](const toml::node& n, const std::string& w) { out = as_string(n, w); });
    }
    void strings(const std::string& key, std::vector<std::string>& out)
    {
        opt(key, [&](const toml::node& n, const std::string& w) {
            const auto* a = n.as_array();
            if (!a) throw ValidationError("config: " + w + " must be an array of strings");
            out.clear();
            for (const auto& e : *a) out.push_back(as_string(e, w));
        });
    }

    void finish() const
    {
        if (!t_) return;
        for (const auto& [k, v] : *t_)
            if (!used_.count(std::string(k.str())))
                throw ValidationError("config: unknown key " + name_ + "." + std::string(k.str()));
    }

    static double as_double(const toml::node& n, const std::string& w)
    {
        if (n.is_integer()) return double(*n.value<std::int64_t>());
        if (n.is_floating_point()) return *n.value<double>();
        throw ValidationError("config: " + w + " must be a number");
    }
    static std::string as_string(const toml::node& n, const std::string& w)
    {
        if (!n.is_string()) throw ValidationError("config: " + w + " must be a string");
        return *n.value<std::string>();
    }

private:
    const toml::table* t_;
    std::string name_;
    std::set<std::string> used_;
};

template <class E>
E parse_choice(const std::string& v, const std::vector<std::pair<std::string, E>>& choices, const std::string& what)
{
    std::string all;
    for (const auto& [k, e] : choices) {
        if (k == v) return e;
        all += (all.empty() ? "" : ", ") + k;
    }
    throw ValidationError("config: " + what + " = '" + v + "', expected one of " + all);
}

inline std::vector<Method> parse_methods(const std::vector<std::string>& names)
{
    std::vector<Method> out;
    for (const auto& n : names) {
        try {
            out.push_back(method_from_string(n));
        } catch (const std::exception&) {
            throw ValidationError("config: unknown method '" + n + "'");
        }
    }
    return out;
}

inline void check_sections(const toml::table& root, const std::set<std::string>& allowed)
{
    for (const auto& [k, v] : root) {
        if (!allowed.count(std::string(k.str())))
            throw ValidationError("config: unknown section [" + std::string(k.str()) + "]");
        if (!v.is_table()) throw ValidationError("config: " + std::string(k.str()) + " must be a table");
    }
}

inline const toml::table* section(const toml::table& root, const char* name) { return root[name].as_table(); }

inline void apply_first_pass(const toml::table& root, FirstPassConfig& fp)
{
    TomlSection s(section(root, "first_pass"), "first_pass");
    s.number("group_gamma", fp.init.gamma);
    s.number("alasso_gamma", fp.alasso_gamma);
    s.number("weight_cap", fp.init.weight_cap);
    s.opt("ridge_level", [&](const toml::node& n, const std::string& w) { fp.init.ridge_level = TomlSection::as_double(n, w); });
    s.opt("init", [&](const toml::node& n, const std::string& w) {
        fp.init.method = parse_choice<InitMethod>(TomlSection::as_string(n, w), {{"ridge", InitMethod::Ridge}, {"ols", InitMethod::OLS}}, w);
    });
    s.integer("n_deltas", fp.path.n_deltas);
    s.number("min_ratio", fp.path.min_ratio);
    s.opt("df", [&](const toml::node& n, const std::string& w) {
        fp.path.df_mode = parse_choice<DfMode>(TomlSection::as_string(n, w),
                                               {{"coefficients", DfMode::NonzeroCoefficients}, {"groups", DfMode::GroupSizes}}, w);
    });
    s.boolean("refit", fp.path.refit);
    s.number("coef_tol", fp.path.solver.coef_tol);
    s.number("obj_tol", fp.path.solver.obj_tol);
    s.integer("max_iter", fp.path.solver.max_iter);
    s.number("kkt_stop", fp.path.solver.kkt_stop);
    s.finish();

    TomlSection t(section(root, "trimming"), "trimming");
    t.number("chi1", fp.trimming.chi1);
    t.number("chi2", fp.trimming.chi2);
    t.boolean("on_selected", fp.trimming.on_selected);
    t.finish();
}

inline void apply_second_pass(const toml::table& root, SecondPassConfig& sp)
{
    TomlSection s(section(root, "second_pass"), "second_pass");
    s.opt("identification", [&](const toml::node& n, const std::string& w) {
        sp.identification = parse_choice<NuIdentification>(
            TomlSection::as_string(n, w), {{"error", NuIdentification::Error}, {"zero", NuIdentification::ZeroUnidentified}}, w);
    });
    s.number("weight_cap", sp.weight_cap);
    s.number("sandwich_floor", sp.sandwich_floor);
    s.number("f_gamma", sp.f_gamma);
    s.integer("f_n_deltas", sp.f_n_deltas);
    s.finish();
}

inline std::string resolve(const std::string& path, const std::filesystem::path& base)
{
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (base / p).lexically_normal().string();
}

inline toml::table parse_toml(const std::string& text, const std::string& name)
{
    try {
        return toml::parse(text, name);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config: " << name << " line " << e.source().begin.line << ": " << e.description();
        throw ValidationError(os.str());
    }
}

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace detail

/// Relative data paths resolve against base_dir.
inline RunConfig parse_run_config(const std::string& text, const std::string& base_dir = ".",
                                  const std::string& name = "config")
{
    const toml::table root = detail::parse_toml(text, name);
    detail::check_sections(root, {"data", "columns", "run", "first_pass", "trimming", "second_pass", "preprocess",
                                  "prediction", "simulation"});
    RunConfig c;
    const std::filesystem::path base(base_dir);

    detail::TomlSection data(detail::section(root, "data"), "data");
    data.string("returns", c.paths.returns);
    data.string("factors", c.paths.factors);
    data.string("instruments", c.paths.instruments);
    data.string("characteristics", c.paths.characteristics);
    data.integer("min_observations", c.min_observations);
    data.finish();
    c.paths.returns = detail::resolve(c.paths.returns, base);
    c.paths.factors = detail::resolve(c.paths.factors, base);
    c.paths.instruments = detail::resolve(c.paths.instruments, base);
    c.paths.characteristics = detail::resolve(c.paths.characteristics, base);

    detail::TomlSection cols(detail::section(root, "columns"), "columns");
    cols.string("asset", c.bindings.asset);
    cols.string("date", c.bindings.date);
    cols.string("return", c.bindings.ret);
    cols.strings("factors", c.bindings.factors);
    cols.strings("instruments", c.bindings.instruments);
    cols.strings("characteristics", c.bindings.characteristics);
    cols.finish();

    detail::TomlSection run(detail::section(root, "run"), "run");
    std::vector<std::string> methods;
    run.strings("methods", methods);
    if (!methods.empty()) c.methods = detail::parse_methods(methods);
    run.opt("split", [&](const toml::node& n, const std::string& w) {
        c.split = parse_month(detail::TomlSection::as_string(n, w));
    });
    run.integer("seed", c.seed);
    run.integer("threads", c.threads);
    run.string("output", c.output);
    run.finish();
    c.output = detail::resolve(c.output, base);

    detail::apply_first_pass(root, c.first_pass);
    detail::apply_second_pass(root, c.second_pass);

    detail::TomlSection pre(detail::section(root, "preprocess"), "preprocess");
    pre.boolean("rank_characteristics", c.preprocess.rank_characteristics);
    pre.boolean("standardize_instruments", c.preprocess.standardize_instruments);
    pre.opt("rank_map", [&](const toml::node& n, const std::string& w) {
        c.preprocess.rank_map = detail::parse_choice<RankMap>(detail::TomlSection::as_string(n, w),
                                                              {{"unit", RankMap::UnitInterval}, {"symmetric", RankMap::Symmetric}}, w);
    });
    pre.finish();

    detail::TomlSection pr(detail::section(root, "prediction"), "prediction");
    pr.opt("route", [&](const toml::node& n, const std::string& w) {
        c.prediction.route = detail::parse_choice<PredictionRoute>(
            detail::TomlSection::as_string(n, w), {{"fitted", PredictionRoute::Fitted}, {"restricted", PredictionRoute::Restricted}}, w);
    });
    pr.integer("horizon", c.prediction.horizon);
    pr.opt("r2_benchmark", [&](const toml::node& n, const std::string& w) {
        c.prediction.r2_benchmark = detail::parse_choice<R2Benchmark>(
            detail::TomlSection::as_string(n, w), {{"zero", R2Benchmark::Zero}, {"mean", R2Benchmark::Mean}}, w);
    });
    pr.boolean("ti_hybrid", c.prediction.ti_hybrid);
    pr.finish();

    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path)
{
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_run_config(detail::read_text(path), dir.empty() ? "." : dir.string(), path);
}

/// Wide CSV (date + columns) as a matrix, all columns in file order.
inline Matrix read_series_csv(const std::string& path, const std::string& date_col = "date")
{
    const auto t = csv::read_file(path);
    const auto w = detail::read_wide(t, date_col, {});
    Matrix m(static_cast<Index>(w.by_month.size()), static_cast<Index>(w.names.size()));
    Index u = 0;
    for (const auto& [month, v] : w.by_month) m.row(u++) = v.transpose();
    return m;
}

/// The [simulation] section plus first/second pass overrides; conditioning
/// files resolve against base_dir.
inline SimulationConfig parse_simulation_config(const std::string& text, const std::string& base_dir = ".",
                                                const std::string& name = "config")
{
    const toml::table root = detail::parse_toml(text, name);
    detail::check_sections(root, {"simulation", "first_pass", "trimming", "second_pass"});
    SimulationConfig c;
    detail::TomlSection s(detail::section(root, "simulation"), "simulation");
    s.integer("study", c.study);
    s.integer("replicates", c.replicates);
    s.integer("K", c.K);
    s.integer("p", c.p);
    s.integer("q", c.q);
    s.integer("T_train", c.T_train);
    s.integer("T_test", c.T_test);
    s.number("sigma", c.sigma);
    s.integer("n_assets", c.n_assets);
    s.integer("block_size", c.block_size);
    s.number("corr_base", c.corr_base);
    s.number("error_variance", c.error_variance);
    s.number("ti_share", c.ti_share);
    s.number("factor_mean", c.factor_mean);
    s.number("factor_sd", c.factor_sd);
    s.number("factor_slope", c.factor_slope);
    s.number("instrument_ar", c.instrument_ar);
    s.number("characteristic_ar", c.characteristic_ar);
    s.number("nu_lo", c.nu_lo);
    s.number("nu_hi", c.nu_hi);
    s.boolean("redraw_conditioning", c.redraw_conditioning);
    s.integer("master_seed", c.master_seed);
    s.integer("threads", c.threads);
    std::vector<std::string> methods;
    s.strings("methods", methods);
    if (!methods.empty()) c.methods = detail::parse_methods(methods);
    std::string cf, ci, cc;
    s.string("conditioning_factors", cf);
    s.string("conditioning_instruments", ci);
    s.string("conditioning_characteristics", cc);
    s.finish();
    if (!cf.empty() || !ci.empty() || !cc.empty()) {
        const std::filesystem::path base(base_dir);
        SimulationConfig::Conditioning cond;
        if (!cf.empty()) cond.factors = read_series_csv(detail::resolve(cf, base));
        if (!ci.empty()) cond.instruments = read_series_csv(detail::resolve(ci, base));
        if (!cc.empty()) cond.characteristics = read_series_csv(detail::resolve(cc, base));
        c.conditioning = std::move(cond);
    }
    detail::apply_first_pass(root, c.first_pass);
    detail::apply_second_pass(root, c.second_pass);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

inline SimulationConfig load_simulation_config(const std::string& path)
{
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_simulation_config(detail::read_text(path), dir.empty() ? "." : dir.string(), path);
}

// ---------------------------------------------------------------------------
// Canonical JSON of the effective settings, used for the manifest hash.

namespace detail {

inline nlohmann::ordered_json number_json(double v)
{
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline nlohmann::ordered_json first_pass_json(const FirstPassConfig& fp)
{
    nlohmann::ordered_json j;
    j["group_gamma"] = fp.init.gamma;
    j["alasso_gamma"] = fp.alasso_gamma;
    j["weight_cap"] = fp.init.weight_cap;
    j["init"] = fp.init.method == InitMethod::Ridge ? "ridge" : "ols";
    j["ridge_level"] = fp.init.ridge_level ? nlohmann::ordered_json(*fp.init.ridge_level) : nlohmann::ordered_json("default");
    j["n_deltas"] = fp.path.n_deltas;
    j["min_ratio"] = fp.path.min_ratio;
    j["df"] = fp.path.df_mode == DfMode::NonzeroCoefficients ? "coefficients" : "groups";
    j["refit"] = fp.path.refit;
    j["coef_tol"] = fp.path.solver.coef_tol;
    j["obj_tol"] = fp.path.solver.obj_tol;
    j["max_iter"] = fp.path.solver.max_iter;
    j["kkt_stop"] = fp.path.solver.kkt_stop;
    j["chi1"] = number_json(fp.trimming.chi1);
    j["chi2"] = number_json(fp.trimming.chi2);
    j["trim_on_selected"] = fp.trimming.on_selected;
    return j;
}

inline nlohmann::ordered_json second_pass_json(const SecondPassConfig& sp)
{
    nlohmann::ordered_json j;
    j["identification"] = sp.identification == NuIdentification::Error ? "error" : "zero";
    j["weight_cap"] = sp.weight_cap;
    j["sandwich_floor"] = sp.sandwich_floor;
    j["f_gamma"] = sp.f_gamma;
    j["f_n_deltas"] = sp.f_n_deltas;
    return j;
}

inline nlohmann::ordered_json methods_json(const std::vector<Method>& ms)
{
    auto a = nlohmann::ordered_json::array();
    for (Method m : ms) a.push_back(to_string(m));
    return a;
}

} // namespace detail

/// Settings that determine numeric output; thread count and output directory are excluded.
inline nlohmann::ordered_json to_json(const RunConfig& c)
{
    nlohmann::ordered_json j;
    j["data"] = {{"returns", c.paths.returns},
                 {"factors", c.paths.factors},
                 {"instruments", c.paths.instruments},
                 {"characteristics", c.paths.characteristics},
                 {"min_observations", c.min_observations}};
    j["columns"] = {{"asset", c.bindings.asset},
                    {"date", c.bindings.date},
                    {"return", c.bindings.ret},
                    {"factors", c.bindings.factors},
                    {"instruments", c.bindings.instruments},
                    {"characteristics", c.bindings.characteristics}};
    j["methods"] = detail::methods_json(c.methods);
    j["split"] = c.split ? nlohmann::ordered_json(format_month(*c.split)) : nlohmann::ordered_json(nullptr);
    j["seed"] = c.seed;
    j["first_pass"] = detail::first_pass_json(c.first_pass);
    j["second_pass"] = detail::second_pass_json(c.second_pass);
    j["preprocess"] = {{"rank_characteristics", c.preprocess.rank_characteristics},
                       {"rank_map", c.preprocess.rank_map == RankMap::UnitInterval ? "unit" : "symmetric"},
                       {"standardize_instruments", c.preprocess.standardize_instruments}};
    j["prediction"] = {{"route", c.prediction.route == PredictionRoute::Fitted ? "fitted" : "restricted"},
                       {"horizon", c.prediction.horizon},
                       {"r2_benchmark", c.prediction.r2_benchmark == R2Benchmark::Zero ? "zero" : "mean"},
                       {"ti_hybrid", c.prediction.ti_hybrid}};
    return j;
}

inline nlohmann::ordered_json to_json(const SimulationConfig& c)
{
    nlohmann::ordered_json j;
    j["study"] = c.study;
    j["replicates"] = c.replicates;
    j["K"] = c.K;
    j["p"] = c.p;
    j["q"] = c.q;
    j["T_train"] = c.T_train;
    j["T_test"] = c.T_test;
    j["sigma"] = c.sigma;
    j["n_assets"] = c.n_assets;
    j["block_size"] = c.block_size;
    j["corr_base"] = c.corr_base;
    j["error_variance"] = c.error_variance;
    j["ti_share"] = c.ti_share;
    j["factor_mean"] = c.factor_mean;
    j["factor_sd"] = c.factor_sd;
    j["factor_slope"] = c.factor_slope;
    j["instrument_ar"] = c.instrument_ar;
    j["characteristic_ar"] = c.characteristic_ar;
    j["nu_lo"] = c.nu_lo;
    j["nu_hi"] = c.nu_hi;
    j["redraw_conditioning"] = c.redraw_conditioning;
    j["observed_conditioning"] = c.conditioning.has_value();
    j["master_seed"] = c.master_seed;
    j["methods"] = detail::methods_json(c.methods);
    j["first_pass"] = detail::first_pass_json(c.first_pass);
    j["second_pass"] = detail::second_pass_json(c.second_pass);
    return j;
}

/// 64-bit FNV-1a, hex.
inline std::string fnv1a_hex(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) h = (h ^ ch) * 0x100000001b3ULL;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace aogl
