#pragma once

// End-to-end run over a panel: first pass per asset, second pass, predictions,
// evaluation, and the output bundle.

#include "config.hpp"

#include <Eigen/Core>

namespace aogl {

inline constexpr const char* kVersion = "1.0.0";

/// A module failed on the data (singular second pass, unidentified nu...); exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Runs f(i) for i in [0, n) on up to `threads` workers; each index is
/// handled exactly once and results go to caller-owned slots. The first
/// exception (lowest index) is rethrown after every worker has joined.
template <class F>
void parallel_for(Index n, unsigned threads, F&& f)
{
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                errors[std::size_t(i)] = std::current_exception();
            }
        }
    };
    const unsigned nt = static_cast<unsigned>(std::min<Index>(std::max(1u, threads), std::max<Index>(n, 1)));
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace detail

struct MethodRun {
    Method method = Method::aOGL;
    std::vector<AssetFit> fits;
    SecondPassResult second_pass;
    std::optional<CrossSectionSummary> selection;
    RiskPremia premia;              // over every panel date
    Matrix r_hat, a_hat, b_ef;      // eval rows x n
    PESeries pe;
    Vector pe_a, pe_b;              // portfolio means of a_hat and b_ef on the PE dates
    PredictionMetrics metrics;
    std::vector<int> pe_years;
};

/// How far a run goes: first pass only, through predictions, or through evaluation.
enum class Stage { Fit, Predict, Evaluate };

struct PipelineResult {
    Stage stage = Stage::Evaluate;
    PanelData panel; // after preprocessing
    Index train_rows = 0;
    Index eval_from = 0, eval_rows = 0;
    std::vector<MethodRun> runs;
    std::vector<std::string> warnings;

    const MethodRun& of(Method m) const
    {
        for (const auto& r : runs)
            if (r.method == m) return r;
        throw std::out_of_range("PipelineResult: method " + to_string(m) + " not run");
    }
};

struct PipelineOptions {
    bool preprocess = true; // off when the panel is already in model units
    Stage stage = Stage::Evaluate;
};

inline PipelineResult run_pipeline(const PanelData& raw, const RunConfig& cfg, const PipelineOptions& opt = {})
{
    cfg.validate();
    raw.validate();
    PipelineResult res;
    res.stage = opt.stage;
    const Index t = raw.T();
    if (cfg.split) {
        res.train_rows = raw.split_row(*cfg.split);
        if (res.train_rows < 1 || res.train_rows >= t)
            throw ValidationError("split " + format_month(*cfg.split) + " is not inside " + format_month(raw.dates.front()) +
                                  " .. " + format_month(raw.dates.back()));
        res.eval_from = res.train_rows;
        res.eval_rows = t - res.train_rows;
    } else {
        res.train_rows = t;
        res.eval_from = 0;
        res.eval_rows = t;
    }

    if (opt.preprocess) {
        PreprocessOptions po = cfg.preprocess;
        po.train_rows = res.train_rows;
        res.panel = preprocess(raw, po);
    } else {
        res.panel = raw;
    }
    const PanelData& p = res.panel;
    res.warnings = p.warnings;
    const ModelSpec s = p.spec();
    const GroupStructure gs = build_groups(s);
    const auto train = p.asset_data(0, res.train_rows);
    const auto eval = p.asset_data(res.eval_from, res.eval_rows);
    const Matrix train_factors = p.factors.topRows(res.train_rows);
    const Matrix train_instruments = p.instruments.topRows(res.train_rows);
    const Matrix realized = p.returns.middleRows(res.eval_from, res.eval_rows);
    FirstPassConfig fp = cfg.first_pass;

    for (Method m : cfg.methods) {
        MethodRun run;
        run.method = m;
        run.fits.resize(train.size());
        detail::parallel_for(static_cast<Index>(train.size()), cfg.threads, [&](Index i) {
            try {
                run.fits[std::size_t(i)] = fit_asset(train[std::size_t(i)], gs, m, fp);
            } catch (const std::exception& e) {
                throw NumericalError(to_string(m) + " first pass, asset " + train[std::size_t(i)].asset_id + ": " + e.what());
            }
        });
        // every first-pass fit is complete here
        for (const auto& f : run.fits)
            for (const auto& w : f.warnings) res.warnings.push_back(to_string(m) + ": " + w);
        try {
            run.selection = classify_cross_section(run.fits, s);
        } catch (const std::invalid_argument&) {
            res.warnings.push_back(to_string(m) + ": no usable fits for the selection tables");
        }
        if (opt.stage == Stage::Fit) {
            res.runs.push_back(std::move(run));
            continue;
        }

        try {
            run.second_pass = run_second_pass(run.fits, s, train_factors, train_instruments, cfg.second_pass);
        } catch (const std::exception& e) {
            throw NumericalError(to_string(m) + " second pass: " + e.what());
        }
        run.premia = risk_premia(s, run.second_pass.nu_hat, run.second_pass.F_hat.F, p.instruments);

        const Matrix Ef = expected_factor_matrix(m, cfg.prediction.ti_hybrid, run.second_pass.F_hat.F, train_factors);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        run.r_hat = run.a_hat = run.b_ef = Matrix::Constant(res.eval_rows, p.n(), nan);
        for (Index i = 0; i < p.n(); ++i) {
            const auto pr = predict_asset(run.fits[std::size_t(i)], s, eval[std::size_t(i)].rows, run.second_pass.nu_hat,
                                          Ef, cfg.prediction.route);
            run.r_hat.col(i) = pr.r_hat;
            run.a_hat.col(i) = pr.a_hat;
            run.b_ef.col(i) = pr.b_ef;
        }
        for (const auto& w : run.second_pass.warnings) res.warnings.push_back(to_string(m) + ": " + w);
        if (opt.stage == Stage::Predict) {
            res.runs.push_back(std::move(run));
            continue;
        }
        try {
            run.pe = portfolio_pe(run.r_hat, realized, cfg.prediction.horizon);
        } catch (const std::invalid_argument& e) {
            throw NumericalError(to_string(m) + " evaluation: " + e.what());
        }
        run.pe_a = portfolio_pe(run.a_hat, realized, cfg.prediction.horizon).predicted;
        run.pe_b = portfolio_pe(run.b_ef, realized, cfg.prediction.horizon).predicted;
        for (Index u : run.pe.date) run.pe_years.push_back(p.dates[res.eval_from + u] / 12);
        run.metrics = prediction_metrics(run.pe, run.pe_years, cfg.prediction.r2_benchmark);
        res.runs.push_back(std::move(run));
    }
    return res;
}

inline PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& opt = {})
{
    const auto panel = load_panel(cfg.paths, cfg.bindings, cfg.min_observations);
    return run_pipeline(panel, cfg, opt);
}

// ---------------------------------------------------------------------------
// Output bundle

namespace detail {

inline nlohmann::ordered_json vector_json(const Eigen::Ref<const Vector>& v)
{
    auto a = nlohmann::ordered_json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number_json(v(i)));
    return a;
}

inline nlohmann::ordered_json matrix_json(const Eigen::Ref<const Matrix>& m)
{
    auto a = nlohmann::ordered_json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
    return a;
}

inline nlohmann::ordered_json fit_json(const AssetFit& f, const ModelSpec& s)
{
    nlohmann::ordered_json j;
    j["asset_id"] = f.asset_id;
    j["method"] = to_string(f.method);
    j["skipped"] = f.skipped;
    if (f.skipped) j["skip_reason"] = f.skip_reason;
    j["T_i"] = f.T_i;
    j["tau"] = number_json(f.tau);
    j["condition_number"] = number_json(f.condition_number);
    j["trimmed"] = f.trimmed;
    j["time_invariant"] = !f.skipped && f.time_invariant(s);
    j["no_arbitrage"] = f.arbitrage.compliant;
    j["chosen_delta"] = f.chosen_delta;
    j["sigma2"] = f.sigma2_hat;
    j["support"] = f.support.indices();
    j["beta"] = vector_json(f.beta_hat);
    j["warnings"] = f.warnings;
    return j;
}

class OutputDir {
public:
    explicit OutputDir(std::string dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    void write(const std::string& name, const std::string& content)
    {
        const auto path = std::filesystem::path(dir_) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << content;
        files_.emplace_back(name, fnv1a_hex(content));
    }
    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

private:
    std::string dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

inline std::string csv_row(const std::vector<std::string>& cells)
{
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + csv::quote(cells[i]);
    return s + "\n";
}

} // namespace detail

/// Writes the bundle; returns the file names in write order (manifest last).
inline std::vector<std::string> write_outputs(const PipelineResult& res, const RunConfig& cfg, const std::string& dir)
{
    using detail::csv_row;
    using csv::format_double;
    const PanelData& p = res.panel;
    const ModelSpec s = p.spec();
    detail::OutputDir out(dir);

    nlohmann::ordered_json metrics;
    std::string metrics_csv = csv_row({"method", "rmspe", "av_abs_pe", "std_abs_pe", "mape", "n_dates"});
    std::string summary_csv = csv_row({"method", "n_fits", "n_time_varying", "ti_pct", "arb_pct", "avg_nbreg"});

    auto write_selection = [&](const MethodRun& run) {
        if (!run.selection) return;
        const std::string m = to_string(run.method);
        const auto& sel = *run.selection;
        std::vector<std::string> h{"bucket", "n_assets", "avg_nbreg", "ti_pct"};
        for (const auto& n : p.instrument_names) h.push_back("instr_" + n + "_pct");
        for (const auto& n : p.characteristic_names) h.push_back("char_" + n + "_pct");
        std::string tab = csv_row(h);
        for (const auto& b : sel.buckets) {
            std::vector<std::string> row{b.label, std::to_string(b.n_assets), format_double(b.avg_nbreg),
                                         format_double(b.ti_pct)};
            for (double v : b.instrument_pct) row.push_back(format_double(v));
            for (double v : b.characteristic_pct) row.push_back(format_double(v));
            tab += csv_row(row);
        }
        out.write("selection_" + m + ".csv", tab);

        std::vector<std::string> fh{"variable", "kind"};
        for (const auto& f : p.factor_names) fh.push_back(f);
        std::string byf = csv_row(fh);
        for (Index l = 0; l < s.p; ++l) {
            std::vector<std::string> row{p.instrument_names[l], "instrument"};
            for (Index k = 0; k < s.K; ++k) row.push_back(format_double(sel.instrument_by_factor(l, k)));
            byf += csv_row(row);
        }
        for (Index j = 0; j < s.q; ++j) {
            std::vector<std::string> row{p.characteristic_names[j], "characteristic"};
            for (Index k = 0; k < s.K; ++k) row.push_back(format_double(sel.characteristic_by_factor(j, k)));
            byf += csv_row(row);
        }
        out.write("selection_by_factor_" + m + ".csv", byf);
        summary_csv += csv_row({m, std::to_string(sel.n_fits), std::to_string(sel.n_time_varying),
                                format_double(sel.ti_pct), format_double(sel.arb_pct), format_double(sel.avg_nbreg)});
    };

    for (const auto& run : res.runs) {
        const std::string m = to_string(run.method);

        std::string fits;
        for (const auto& f : run.fits) fits += detail::fit_json(f, s).dump() + "\n";
        out.write("fits_" + m + ".jsonl", fits);
        write_selection(run);
        if (res.stage == Stage::Fit) continue;

        nlohmann::ordered_json sp;
        sp["method"] = m;
        sp["n_effective"] = run.second_pass.n_effective;
        sp["nu_hat"] = detail::vector_json(run.second_pass.nu_hat);
        sp["nu_identified"] = run.second_pass.identified;
        sp["nu_pilot"] = detail::vector_json(run.second_pass.nu1_hat);
        sp["F_hat"] = detail::matrix_json(run.second_pass.F_hat.F);
        auto fsup = nlohmann::ordered_json::array();
        for (const auto& su : run.second_pass.F_hat.supports) fsup.push_back(su.indices());
        sp["F_support"] = fsup;
        sp["Lambda_hat"] = detail::matrix_json(run.second_pass.Lambda_hat);
        sp["warnings"] = run.second_pass.warnings;
        out.write("second_pass_" + m + ".json", sp.dump(2) + "\n");

        std::vector<std::string> head{"date"};
        for (const auto& f : p.factor_names) head.push_back(f);
        std::string lam = csv_row(head);
        for (Index u = 0; u < p.T(); ++u) {
            std::vector<std::string> row{format_month(p.dates[u])};
            for (Index k = 0; k < s.K; ++k) row.push_back(format_double(run.premia.lambda(u, k)));
            lam += csv_row(row);
        }
        out.write("lambda_" + m + ".csv", lam);

        std::string pred = csv_row({"asset_id", "date", "r_hat", "a_hat", "b_ef", "realized"});
        for (Index i = 0; i < p.n(); ++i)
            for (Index u = 0; u < res.eval_rows; ++u) {
                if (!std::isfinite(run.r_hat(u, i))) continue;
                pred += csv_row({p.assets[i], format_month(p.dates[res.eval_from + u]), format_double(run.r_hat(u, i)),
                                 format_double(run.a_hat(u, i)), format_double(run.b_ef(u, i)),
                                 format_double(p.returns(res.eval_from + u, i))});
            }
        out.write("predictions_" + m + ".csv", pred);
        if (res.stage == Stage::Predict) continue;

        std::string pe = csv_row({"date", "target", "predicted", "pe", "a_part", "b_ef_part", "partial"});
        for (Index k = 0; k < run.pe.pe.size(); ++k)
            pe += csv_row({format_month(p.dates[res.eval_from + run.pe.date[k]]), format_double(run.pe.target(k)),
                           format_double(run.pe.predicted(k)), format_double(run.pe.pe(k)), format_double(run.pe_a(k)),
                           format_double(run.pe_b(k)), run.pe.partial[k] ? "1" : "0"});
        out.write("pe_" + m + ".csv", pe);

        nlohmann::ordered_json mj;
        mj["rmspe"] = run.metrics.rmspe;
        mj["av_abs_pe"] = run.metrics.av_abs_pe;
        mj["std_abs_pe"] = run.metrics.std_abs_pe;
        mj["mape"] = run.metrics.mape;
        mj["n_dates"] = run.pe.pe.size();
        nlohmann::ordered_json r2;
        for (const auto& [y, v] : run.metrics.r2_by_year) r2[std::to_string(y)] = detail::number_json(v);
        mj["r2_by_year"] = r2;
        metrics[m] = mj;
        metrics_csv += csv_row({m, format_double(run.metrics.rmspe), format_double(run.metrics.av_abs_pe),
                                format_double(run.metrics.std_abs_pe), format_double(run.metrics.mape),
                                std::to_string(run.pe.pe.size())});
    }
    if (res.stage == Stage::Evaluate) {
        out.write("metrics.json", metrics.dump(2) + "\n");
        out.write("metrics.csv", metrics_csv);
    }
    out.write("selection_summary.csv", summary_csv);

    nlohmann::ordered_json man;
    man["tool"] = "aogl";
    man["version"] = kVersion;
    man["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                   std::to_string(EIGEN_MINOR_VERSION);
    man["compiler"] = __VERSION__;
    const auto cj = to_json(cfg);
    man["config"] = cj;
    man["config_hash"] = fnv1a_hex(cj.dump());
    man["seed"] = cfg.seed;
    man["stage"] = res.stage == Stage::Fit ? "fit" : res.stage == Stage::Predict ? "predict" : "evaluate";
    man["panel"] = {{"n_assets", p.n()},
                    {"T", p.T()},
                    {"first_date", format_month(p.dates.front())},
                    {"last_date", format_month(p.dates.back())},
                    {"K", s.K},
                    {"p", s.p},
                    {"q", s.q},
                    {"train_rows", res.train_rows},
                    {"eval_rows", res.eval_rows},
                    {"short_assets", p.short_assets}};
    nlohmann::ordered_json files;
    std::vector<std::string> names;
    for (const auto& [n, h] : out.files()) files[n] = h, names.push_back(n);
    man["files"] = files;
    man["warnings"] = res.warnings;
    out.write("manifest.json", man.dump(2) + "\n");
    names.push_back("manifest.json");
    return names;
}

// ---------------------------------------------------------------------------
// Simulated panels

/// The study-2 sample as a panel, dates from `first_month`, split after the
/// training rows. Already in model units, so run it without preprocessing.
inline PanelData panel_from_study2(const SimulationConfig& cfg, const Study2Design& d, const Study2Sample& smp,
                                   int first_month = 2000 * 12)
{
    const ModelSpec s = cfg.spec();
    const Index t = cfg.T(), n = cfg.n_assets;
    PanelData p;
    for (Index i = 0; i < n; ++i) p.assets.push_back(smp.train[std::size_t(i)].asset_id);
    std::sort(p.assets.begin(), p.assets.end());
    std::map<std::string, Index> src;
    for (Index i = 0; i < n; ++i) src[smp.train[std::size_t(i)].asset_id] = i;
    for (Index u = 0; u < t; ++u) p.dates.push_back(first_month + static_cast<int>(u));
    for (Index k = 0; k < s.K; ++k) p.factor_names.push_back("f" + std::to_string(k + 1));
    for (Index l = 0; l < s.p; ++l) p.instrument_names.push_back("z" + std::to_string(l + 1));
    for (Index j = 0; j < s.q; ++j) p.characteristic_names.push_back("c" + std::to_string(j + 1));
    p.factors = d.factors;
    p.instruments = d.instruments;
    p.returns.resize(t, n);
    for (Index i = 0; i < n; ++i) {
        const Index k = src.at(p.assets[i]);
        p.returns.col(i) << smp.train[std::size_t(k)].returns, smp.test[std::size_t(k)].returns;
        p.characteristics.push_back(d.characteristics[std::size_t(k)]);
        p.T_i.push_back(t);
    }
    p.validate();
    return p;
}

} // namespace aogl

