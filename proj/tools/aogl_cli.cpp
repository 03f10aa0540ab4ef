// aogl command line: panel runs, simulations and group inspection.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
// Log lines go to stderr as key=value pairs.

#include <aogl/aogl.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace aogl;

std::string log_value(const std::string& v)
{
    if (!v.empty() && v.find_first_of(" \t\"=") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

struct Log {
    std::ostringstream line;
    explicit Log(const char* level, const char* event) { line << "level=" << level << " event=" << event; }
    template <class T>
    Log& kv(const char* key, const T& v)
    {
        std::ostringstream os;
        os << v;
        line << ' ' << key << '=' << log_value(os.str());
        return *this;
    }
    ~Log() { std::cerr << line.str() << '\n'; }
};

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
};

RunConfig run_config(const Globals& g)
{
    if (g.config.empty()) throw ValidationError("--config is required");
    RunConfig cfg = load_run_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (g.threads) cfg.threads = *g.threads;
    if (!g.out.empty()) cfg.output = g.out;
    cfg.validate();
    return cfg;
}

int run_panel(const Globals& g, Stage stage, const char* command)
{
    const RunConfig cfg = run_config(g);
    const auto t0 = std::chrono::steady_clock::now();
    const PanelData panel = load_panel(cfg.paths, cfg.bindings, cfg.min_observations);
    Log("info", "panel_loaded")
        .kv("assets", panel.n())
        .kv("dates", panel.T())
        .kv("first", format_month(panel.dates.front()))
        .kv("last", format_month(panel.dates.back()))
        .kv("short_assets", panel.short_assets.size());
    PipelineOptions opt;
    opt.stage = stage;
    const PipelineResult res = run_pipeline(panel, cfg, opt);
    for (const auto& w : res.warnings) Log("warn", "pipeline").kv("message", w);
    for (const auto& run : res.runs) {
        Log l("info", "method_done");
        l.kv("method", to_string(run.method));
        if (run.selection) l.kv("ti_pct", run.selection->ti_pct).kv("arb_pct", run.selection->arb_pct);
        if (stage != Stage::Fit) l.kv("n_effective", run.second_pass.n_effective);
        if (stage == Stage::Evaluate) l.kv("rmspe", run.metrics.rmspe).kv("mape", run.metrics.mape);
    }
    const auto files = write_outputs(res, cfg, cfg.output);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Log("info", "done").kv("command", command).kv("out", cfg.output).kv("files", files.size()).kv("seconds", secs);
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateFlags {
    std::optional<int> study, replicates;
    std::optional<Index> n_assets;
};

std::string table_csv(const StudyResult& r)
{
    using csv::format_double;
    std::ostringstream os;
    auto ms = [&](const MeanSe& m) { return format_double(m.mean) + "," + format_double(m.se); };
    if (r.study == 1) {
        os << "method,av_rmspe_r,se_rmspe_r,av_rmse_beta,se_rmse_beta,arb_pct,se_arb_pct,av_true_pos,se_true_pos,"
              "av_nbreg,se_nbreg,ok,failed\n";
        for (const auto& s : r.summary)
            os << to_string(s.method) << ',' << ms(s.rmspe_r) << ',' << ms(s.rmse_beta) << ',' << ms(s.arb_pct) << ','
               << ms(s.true_pos) << ',' << ms(s.nbreg) << ',' << s.ok << ',' << s.failed << '\n';
    } else {
        os << "method,av_rmspe,se_rmspe,av_mape,se_mape,ok,failed\n";
        for (const auto& s : r.summary)
            os << to_string(s.method) << ',' << ms(s.rmspe) << ',' << ms(s.mape) << ',' << s.ok << ',' << s.failed
               << '\n';
    }
    return os.str();
}

// One-sided paired comparisons of every other method against aOGL.
std::string paired_csv(const StudyResult& r)
{
    using csv::format_double;
    std::ostringstream os;
    os << "metric,method_a,method_b,n_pairs,mean_diff,p_value_a_less\n";
    bool has_aogl = false;
    for (const auto& s : r.summary) has_aogl |= s.method == Method::aOGL;
    if (!has_aogl) return os.str();

    struct Col {
        const char* name;
        double ReplicateRecord::*d = nullptr;
        Index ReplicateRecord::*i = nullptr;
        bool a_greater = false; // alternative is aOGL above the other method
    };
    std::vector<Col> cols;
    if (r.study == 1)
        cols = {{"rmspe_r", &ReplicateRecord::rmspe_r},
                {"rmse_beta", &ReplicateRecord::rmse_beta},
                {"true_pos", nullptr, &ReplicateRecord::true_pos, true}};
    else
        cols = {{"rmspe", &ReplicateRecord::rmspe}, {"mape", &ReplicateRecord::mape}};

    // Pair only replicates where both methods succeeded.
    auto paired = [&](Method m, const Col& c, Method other) {
        std::vector<double> out;
        for (const auto& a : r.records) {
            if (a.method != m || !a.ok) continue;
            bool other_ok = false;
            for (const auto& b : r.records)
                if (b.method == other && b.replicate == a.replicate) other_ok = b.ok;
            if (other_ok) out.push_back(c.d ? a.*(c.d) : double(a.*(c.i)));
        }
        return out;
    };
    for (const auto& s : r.summary) {
        if (s.method == Method::aOGL) continue;
        for (const auto& c : cols) {
            auto a = paired(Method::aOGL, c, s.method);
            auto b = paired(s.method, c, Method::aOGL);
            if (a.size() < 2) continue;
            double diff = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) diff += a[k] - b[k];
            diff /= double(a.size());
            const double pv = c.a_greater ? paired_less_pvalue(b, a) : paired_less_pvalue(a, b);
            os << c.name << ",aOGL," << to_string(s.method) << ',' << a.size() << ',' << format_double(diff) << ','
               << format_double(pv) << '\n';
        }
    }
    return os.str();
}

nlohmann::ordered_json record_json(const ReplicateRecord& r, int study)
{
    nlohmann::ordered_json j;
    j["replicate"] = r.replicate;
    j["method"] = to_string(r.method);
    j["ok"] = r.ok;
    if (!r.ok) j["error"] = r.error;
    if (study == 1) {
        j["rmspe_r"] = detail::number_json(r.rmspe_r);
        j["rmse_beta"] = detail::number_json(r.rmse_beta);
        j["time_varying"] = r.time_varying;
        j["arbitrage"] = r.arbitrage;
        j["true_pos"] = r.true_pos;
        j["nbreg"] = r.nbreg;
    } else {
        j["rmspe"] = detail::number_json(r.rmspe);
        j["mape"] = detail::number_json(r.mape);
        j["n_used"] = r.n_used;
        j["time_varying"] = r.time_varying;
        j["arbitrage"] = r.arbitrage;
    }
    return j;
}

int simulate(const Globals& g, const SimulateFlags& f)
{
    SimulationConfig cfg = g.config.empty() ? SimulationConfig{} : load_simulation_config(g.config);
    if (f.study) cfg.study = *f.study;
    if (f.replicates) cfg.replicates = *f.replicates;
    if (f.n_assets) cfg.n_assets = *f.n_assets;
    if (g.seed) cfg.master_seed = *g.seed;
    if (g.threads) cfg.threads = *g.threads;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ValidationError(e.what());
    }
    const std::string dir = g.out.empty() ? "sim_out" : g.out;
    Log("info", "simulate_start")
        .kv("study", cfg.study)
        .kv("replicates", cfg.replicates)
        .kv("K", cfg.K)
        .kv("p", cfg.p)
        .kv("q", cfg.q)
        .kv("master_seed", cfg.master_seed)
        .kv("threads", cfg.threads);
    const auto t0 = std::chrono::steady_clock::now();
    const StudyResult r = run_study(cfg);
    for (const auto& w : r.warnings) Log("warn", "simulate").kv("message", w);
    for (const auto& rec : r.records)
        if (!rec.ok)
            Log("warn", "replicate_failed").kv("replicate", rec.replicate).kv("method", to_string(rec.method)).kv("error", rec.error);

    detail::OutputDir out(dir);
    const std::string table = "summary_study" + std::to_string(cfg.study) + ".csv";
    out.write(table, table_csv(r));
    out.write("paired_tests.csv", paired_csv(r));
    std::string lines;
    for (const auto& rec : r.records) lines += record_json(rec, cfg.study).dump() + "\n";
    out.write("replicates.jsonl", lines);

    nlohmann::ordered_json man;
    man["tool"] = "aogl";
    man["version"] = kVersion;
    const auto cj = to_json(cfg);
    man["config"] = cj;
    man["config_hash"] = fnv1a_hex(cj.dump());
    if (cfg.study == 1) man["true_support"] = r.true_support.indices();
    nlohmann::ordered_json files;
    for (const auto& [n, h] : out.files()) files[n] = h;
    man["files"] = files;
    man["warnings"] = r.warnings;
    out.write("manifest.json", man.dump(2) + "\n");

    for (const auto& s : r.summary) {
        Log l("info", "method_summary");
        l.kv("method", to_string(s.method)).kv("ok", s.ok).kv("failed", s.failed);
        if (cfg.study == 1)
            l.kv("rmspe_r", s.rmspe_r.mean).kv("rmse_beta", s.rmse_beta.mean).kv("arb_pct", s.arb_pct.mean)
                .kv("true_pos", s.true_pos.mean).kv("nbreg", s.nbreg.mean);
        else
            l.kv("rmspe", s.rmspe.mean).kv("mape", s.mape.mean);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Log("info", "done").kv("command", "simulate").kv("out", dir).kv("seconds", secs);
    return 0;
}

// ---------------------------------------------------------------------------

const char* kind_name(GroupKind k)
{
    switch (k) {
    case GroupKind::TimeInvariant: return "time_invariant";
    case GroupKind::OffDiagonal: return "off_diagonal";
    case GroupKind::Instrument: return "instrument";
    case GroupKind::Characteristic: return "characteristic";
    }
    return "?";
}

std::vector<Index> one_based(const std::vector<Index>& v)
{
    std::vector<Index> out(v);
    for (auto& x : out) ++x;
    return out;
}

ModelSpec checked_spec(Index K, Index p, Index q)
{
    if (K < 1 || p < 0 || q < 0) throw ValidationError("need K >= 1, p >= 0, q >= 0");
    return dimensions(K, p, q);
}

int enumerate_groups(Index K, Index p, Index q, bool with_models)
{
    const ModelSpec s = checked_spec(K, p, q);
    const GroupStructure gs = build_groups(s);
    const ModelCount c = count_models(gs);
    nlohmann::ordered_json j;
    j["K"] = K;
    j["p"] = p;
    j["q"] = q;
    j["d"] = s.d();
    j["d_tilde"] = gs.d_tilde();
    j["J"] = gs.J();
    auto groups = nlohmann::ordered_json::array();
    for (Index g = 0; g < gs.J(); ++g) {
        const Group& gr = gs.groups[std::size_t(g)];
        nlohmann::ordered_json o;
        o["group"] = g + 1;
        o["kind"] = kind_name(gr.kind);
        o["penalized"] = g != 0;
        o["members"] = one_based(gr.members);
        if (gr.kind == GroupKind::OffDiagonal) {
            o["instruments"] = {gr.variable, gr.factor};
        } else if (gr.kind == GroupKind::Instrument) {
            o["instrument"] = gr.variable;
            o["factor"] = gr.factor + 1;
        } else if (gr.kind == GroupKind::Characteristic) {
            o["characteristic"] = gr.variable + 1;
            o["factor"] = gr.factor + 1;
        }
        groups.push_back(o);
    }
    j["groups"] = groups;
    j["model_count"] = {{"compliant_log2", c.compliant_exponent},
                        {"unrestricted_log2", c.unrestricted_exponent},
                        {"ratio_log2", c.ratio_exponent},
                        {"ratio_bound_applies", c.bound_applies},
                        {"ratio_at_most_one_eighth", c.bound_holds}};
    if (with_models) {
        ModelEnumeration e;
        try {
            e = enumerate_models(gs);
        } catch (const std::domain_error& err) {
            throw ValidationError(err.what());
        }
        auto models = nlohmann::ordered_json::array();
        for (const auto& sup : e.distinct) models.push_back(one_based(sup.indices()));
        j["models"] = models;
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

std::vector<Index> parse_index_list(const std::string& text, Index d)
{
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto b = tok.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        tok = tok.substr(b, tok.find_last_not_of(" \t") - b + 1);
        char* end = nullptr;
        const long v = std::strtol(tok.c_str(), &end, 10);
        if (*end != '\0' || v < 1 || v > d)
            throw ValidationError("support index '" + tok + "' is not an integer in 1.." + std::to_string(d));
        out.push_back(static_cast<Index>(v - 1));
    }
    return out;
}

int check_arbitrage(Index K, Index p, Index q, const std::string& support, const std::string& fits_path, bool strict)
{
    const ModelSpec s = checked_spec(K, p, q);
    ArbitrageCheckOptions opt;
    opt.strict = strict;
    if (support.empty() == fits_path.empty()) throw ValidationError("give exactly one of --support or --fits");

    auto verdict_json = [&](const SupportSet& sup) {
        const auto v = check_no_arbitrage(sup, s, opt);
        nlohmann::ordered_json j;
        j["support"] = one_based(sup.indices());
        j["compliant"] = v.compliant;
        j["violations"] = v.violations;
        return j;
    };

    if (!support.empty()) {
        std::cout << verdict_json(SupportSet(parse_index_list(support, s.d()))).dump(2) << '\n';
        return 0;
    }

    std::ifstream in(fits_path);
    if (!in) throw ValidationError("cannot open " + fits_path);
    std::string line;
    Index n = 0, bad = 0, lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(fits_path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (rec.value("skipped", false)) continue;
        std::vector<Index> idx;
        for (const auto& v : rec.at("support")) {
            const Index j = v.get<Index>();
            if (j < 0 || j >= s.d())
                throw ValidationError(fits_path + " line " + std::to_string(lineno) + ": support index outside the model");
            idx.push_back(j);
        }
        auto j = verdict_json(SupportSet(idx));
        nlohmann::ordered_json o;
        o["asset_id"] = rec.value("asset_id", "");
        o["compliant"] = j["compliant"];
        o["violations"] = j["violations"];
        std::cout << o.dump() << '\n';
        ++n;
        bad += j["compliant"].get<bool>() ? 0 : 1;
    }
    Log("info", "check_arbitrage").kv("fits", n).kv("non_compliant", bad);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive overlap group-LASSO two-pass estimation for conditional factor models"};
    app.set_version_flag("--version", std::string(aogl::kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    app.add_option("--config", g.config, "TOML configuration file");
    auto* seed_opt = app.add_option("--seed", seed, "Seed recorded in the manifest; master seed for simulate");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory");

    auto* fit = app.add_subcommand("fit", "First pass only: per-asset fits and selection tables");
    auto* predict = app.add_subcommand("predict", "Fit, second pass, risk premia and predictions");
    auto* evaluate = app.add_subcommand("evaluate", "Full run including prediction-error metrics");
    auto* run = app.add_subcommand("run", "Same as evaluate");

    SimulateFlags sf;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo study");
    sim->add_option("--study", sf.study, "1 or 2")->check(CLI::IsMember({1, 2}));
    sim->add_option("--replicates", sf.replicates, "Replicates")->check(CLI::PositiveNumber);
    sim->add_option("--n-assets", sf.n_assets, "Study-2 cross-section size")->check(CLI::PositiveNumber);

    Index K = 0, p = 0, q = 0;
    bool with_models = false;
    auto* enumg = app.add_subcommand("enumerate-groups", "Print the group structure as JSON");
    enumg->add_option("--K", K, "Factors")->required();
    enumg->add_option("--p", p, "Common instruments")->required();
    enumg->add_option("--q", q, "Asset characteristics")->required();
    enumg->add_flag("--models", with_models, "Also list every distinct compliant support (small models only)");

    std::string support, fits_path;
    bool strict = false;
    auto* arb = app.add_subcommand("check-arbitrage", "Check supports against the no-arbitrage inclusion rules");
    arb->add_option("--K", K, "Factors")->required();
    arb->add_option("--p", p, "Common instruments")->required();
    arb->add_option("--q", q, "Asset characteristics")->required();
    arb->add_option("--support", support, "Comma-separated covariate indices, 1-based");
    arb->add_option("--fits", fits_path, "fits_<method>.jsonl written by fit/run");
    arb->add_flag("--strict", strict, "Also require a scaled factor for each off-diagonal instrument product");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (seed_opt->count()) g.seed = seed;
    if (threads_opt->count()) g.threads = threads;

    try {
        if (*fit) return run_panel(g, Stage::Fit, "fit");
        if (*predict) return run_panel(g, Stage::Predict, "predict");
        if (*evaluate) return run_panel(g, Stage::Evaluate, "evaluate");
        if (*run) return run_panel(g, Stage::Evaluate, "run");
        if (*sim) return simulate(g, sf);
        if (*enumg) return enumerate_groups(K, p, q, with_models);
        if (*arb) return check_arbitrage(K, p, q, support, fits_path, strict);
    } catch (const ValidationError& e) {
        Log("error", "validation").kv("message", e.what());
        return 2;
    } catch (const NumericalError& e) {
        Log("error", "numerical").kv("message", e.what());
        return 3;
    } catch (const std::exception& e) {
        Log("error", "numerical").kv("message", e.what());
        return 3;
    }
    return 0;
}
