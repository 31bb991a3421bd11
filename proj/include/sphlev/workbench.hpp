#pragma once

/// \file workbench.hpp
/// Run configs, study orchestration, CSV tables, manifests and replay.

#include "sphlev/chaos_analysis.hpp"
#include "sphlev/covariance_model.hpp"
#include "sphlev/level_geometry.hpp"
#include "sphlev/limit_lab.hpp"
#include "sphlev/statistics.hpp"
#include "sphlev/text_format.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sphlev {

inline constexpr std::string_view kWorkbenchVersion = "0.1.0";

enum class StudyKind { MeanLength, VarianceScaling, BerryProfile, LimitLaw, ChaosAudit };

inline std::string_view study_name(StudyKind k) {
    switch (k) {
        case StudyKind::MeanLength: return "mean-length";
        case StudyKind::VarianceScaling: return "variance-scaling";
        case StudyKind::BerryProfile: return "berry-profile";
        case StudyKind::LimitLaw: return "limit-law";
        case StudyKind::ChaosAudit: return "chaos-audit";
    }
    return "?";
}

inline std::optional<StudyKind> parse_study_name(std::string_view s) {
    for (const auto k : {StudyKind::MeanLength, StudyKind::VarianceScaling, StudyKind::BerryProfile, StudyKind::LimitLaw,
                         StudyKind::ChaosAudit})
        if (study_name(k) == s) return k;
    return std::nullopt;
}

/// Which functional a variance or limit study measures.
enum class Quantity { Total, FirstChaos, SecondChaos };

inline std::string_view quantity_name(Quantity q) {
    switch (q) {
        case Quantity::Total: return "total";
        case Quantity::FirstChaos: return "first";
        case Quantity::SecondChaos: return "second";
    }
    return "?";
}

struct RunConfig {
    StudyKind study = StudyKind::MeanLength;
    std::vector<MultipoleEntry> spectrum;  ///< normalized entries
    int mesh_level = 5;
    double dt = 0.25;
    std::vector<double> horizons{10.0};  ///< one T, or the T ladder of a scaling study
    std::vector<double> levels{0.0};     ///< one u, or the u grid
    int replicates = 100;
    std::uint64_t seed = 1;
    std::string output = "out";
    int workers = 1;
    Quantity quantity = Quantity::Total;
    int q_max = 4;
    int oversample = 1;
    double tolerance = 0.02;            ///< mean-length relative tolerance / duality tolerance
    double exponent_tolerance = 0.1;
    double ks_threshold = 0.01;
    int reference_count = 4000;
    int n_inner = 1 << 16;
    int burn_factor = 4;

    bool operator==(const RunConfig&) const = default;

    std::shared_ptr<const PowerSpectrum> make_spectrum() const {
        PowerSpectrum::Options opt;
        opt.normalize = false;
        return std::make_shared<const PowerSpectrum>(PowerSpectrum::create(spectrum, opt));
    }
};

inline std::string render_config(const RunConfig& c) {
    std::ostringstream o;
    o << "study = " << study_name(c.study) << "\n";
    o << "mesh_level = " << c.mesh_level << "\n";
    o << "dt = " << format_double(c.dt) << "\n";
    o << "T = " << format_double_list(c.horizons) << "\n";
    o << "u = " << format_double_list(c.levels) << "\n";
    o << "replicates = " << c.replicates << "\n";
    o << "seed = " << c.seed << "\n";
    o << "output = " << c.output << "\n";
    o << "workers = " << c.workers << "\n";
    o << "quantity = " << quantity_name(c.quantity) << "\n";
    o << "q_max = " << c.q_max << "\n";
    o << "oversample = " << c.oversample << "\n";
    o << "tolerance = " << format_double(c.tolerance) << "\n";
    o << "exponent_tolerance = " << format_double(c.exponent_tolerance) << "\n";
    o << "ks_threshold = " << format_double(c.ks_threshold) << "\n";
    o << "reference_count = " << c.reference_count << "\n";
    o << "n_inner = " << c.n_inner << "\n";
    o << "burn_factor = " << c.burn_factor << "\n";
    // Entries are already normalized; keep them bit-exact on re-read.
    o << "normalize = false\n";
    PowerSpectrum::Options opt;
    opt.normalize = false;
    o << render_spectrum(PowerSpectrum::create(c.spectrum, opt));
    return o.str();
}

namespace detail {

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline int parse_int_in(const TextLine& l, long long lo, long long hi, std::string_view what) {
    const auto v = parse_integer(l);
    if (v < lo || v > hi)
        throw ConfigError(l.key, l.number, std::string(what) + " must lie in [" + std::to_string(lo) + ", " +
                                               std::to_string(hi) + "]");
    return static_cast<int>(v);
}

}  // namespace detail

/// Reads `key = value` lines followed by `[multipole]` blocks. A
/// `spectrum_file = path` line (relative to `base_dir`) may replace the blocks.
inline RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".") {
    const auto lines = lex_key_value_text(text);
    std::vector<bool> consumed;
    auto entries = parse_multipole_blocks(lines, consumed);
    RunConfig c;
    bool normalize = true;
    std::optional<std::string> spectrum_file;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        if (consumed[i]) continue;
        if (!l.section.empty()) {
            if (l.section == "run") continue;
            throw ConfigError(l.section, l.number, "unknown section");
        }
        const auto& k = l.key;
        if (k == "study") {
            const auto s = parse_study_name(l.value);
            if (!s) throw ConfigError(k, l.number, "unknown study '" + l.value + "'");
            c.study = *s;
        } else if (k == "mesh_level") {
            c.mesh_level = detail::parse_int_in(l, 0, 8, "mesh_level");
        } else if (k == "dt") {
            c.dt = parse_double(l);
            if (!(c.dt > 0.0)) throw ConfigError(k, l.number, "dt must be > 0");
        } else if (k == "T") {
            c.horizons = parse_double_list(l);
            for (std::size_t j = 0; j < c.horizons.size(); ++j) {
                if (!(c.horizons[j] > 0.0)) throw ConfigError(k, l.number, "every horizon T must be > 0");
                if (j > 0 && !(c.horizons[j] > c.horizons[j - 1]))
                    throw ConfigError(k, l.number, "T ladder must be strictly increasing");
            }
        } else if (k == "u") {
            c.levels = parse_double_list(l);
        } else if (k == "replicates") {
            c.replicates = detail::parse_int_in(l, 2, 100000000, "replicates");
        } else if (k == "seed") {
            c.seed = parse_unsigned(l);
        } else if (k == "output") {
            if (l.value.empty()) throw ConfigError(k, l.number, "output must be a non-empty path");
            c.output = l.value;
        } else if (k == "workers") {
            c.workers = detail::parse_int_in(l, 1, 1024, "workers");
        } else if (k == "quantity") {
            if (l.value == "total") c.quantity = Quantity::Total;
            else if (l.value == "first") c.quantity = Quantity::FirstChaos;
            else if (l.value == "second") c.quantity = Quantity::SecondChaos;
            else throw ConfigError(k, l.number, "quantity must be total, first or second");
        } else if (k == "q_max") {
            c.q_max = detail::parse_int_in(l, 1, ChaosTable::kMaxOrder, "q_max");
        } else if (k == "oversample") {
            c.oversample = detail::parse_int_in(l, 1, 64, "oversample");
        } else if (k == "tolerance") {
            c.tolerance = parse_double(l);
            if (!(c.tolerance > 0.0)) throw ConfigError(k, l.number, "tolerance must be > 0");
        } else if (k == "exponent_tolerance") {
            c.exponent_tolerance = parse_double(l);
            if (!(c.exponent_tolerance > 0.0)) throw ConfigError(k, l.number, "exponent_tolerance must be > 0");
        } else if (k == "ks_threshold") {
            c.ks_threshold = parse_double(l);
            if (!(c.ks_threshold > 0.0 && c.ks_threshold < 1.0)) throw ConfigError(k, l.number, "ks_threshold must lie in (0,1)");
        } else if (k == "reference_count") {
            c.reference_count = detail::parse_int_in(l, 2, 100000000, "reference_count");
        } else if (k == "n_inner") {
            c.n_inner = detail::parse_int_in(l, 2, 1 << 24, "n_inner");
        } else if (k == "burn_factor") {
            c.burn_factor = detail::parse_int_in(l, 1, 64, "burn_factor");
        } else if (k == "normalize") {
            normalize = parse_bool(l);
        } else if (k == "spectrum_file") {
            spectrum_file = l.value;
        } else {
            throw ConfigError(k, l.number, "unknown key");
        }
    }
    if (spectrum_file) {
        if (!entries.empty()) throw ConfigError("spectrum_file", 0, "give either spectrum_file or [multipole] blocks, not both");
        const auto sub = lex_key_value_text(detail::read_text_file(base_dir / *spectrum_file));
        std::vector<bool> used;
        entries = parse_multipole_blocks(sub, used);
        for (std::size_t i = 0; i < sub.size(); ++i)
            if (!used[i]) {
                if (sub[i].key == "normalize") normalize = parse_bool(sub[i]);
                else throw ConfigError(sub[i].key, sub[i].number, "unknown key in spectrum file");
            }
    }
    if (entries.empty()) throw ConfigError("multipole", 0, "config defines no [multipole] block");
    PowerSpectrum::Options opt;
    opt.normalize = normalize;
    try {
        c.spectrum = PowerSpectrum::create(std::move(entries), opt).entries();
    } catch (const std::exception& e) {
        throw ConfigError("multipole", 0, e.what());
    }
    // Study-level constraints, checked before any compute.
    if (c.study == StudyKind::VarianceScaling && c.horizons.size() < 4)
        throw ConfigError("T", 0, "variance-scaling needs a ladder of at least 4 horizons");
    if (c.study != StudyKind::VarianceScaling && c.horizons.size() != 1)
        throw ConfigError("T", 0, "this study takes a single horizon T");
    if ((c.study == StudyKind::LimitLaw || c.study == StudyKind::ChaosAudit || c.study == StudyKind::VarianceScaling) &&
        c.levels.size() != 1)
        throw ConfigError("u", 0, "this study takes a single level u");
    if (c.study == StudyKind::BerryProfile && c.levels.size() < 3)
        throw ConfigError("u", 0, "berry-profile needs a grid of at least 3 levels");
    const auto sp = PowerSpectrum::create(c.spectrum, PowerSpectrum::Options{false, true});
    for (const double T : c.horizons)
        if (T < c.dt) throw ConfigError("T", 0, "horizon must be at least one time step");
    if (c.study == StudyKind::LimitLaw || c.study == StudyKind::BerryProfile || c.study == StudyKind::VarianceScaling) {
        const auto rep = classify_regime(sp);
        if (c.study == StudyKind::LimitLaw && rep.regime == Regime::Boundary)
            throw ConfigError("multipole", 0, "limit-law study needs a long- or short-memory spectrum (boundary regime)");
        if (c.study == StudyKind::LimitLaw && rep.regime == Regime::LongMemory && 2.0 * rep.beta_star >= 1.0)
            throw ConfigError("multipole", 0, "Rosenblatt reference needs beta* < 1/2");
    }
    return c;
}

// ---- results ----------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct Table {
    std::string name;
    std::string header_comment;  ///< extra `# ...` line (e.g. fitted slope), may be empty
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> r) { rows.push_back(std::move(r)); }
};

struct StudyResult {
    RunConfig config;
    std::vector<Table> tables;
    std::vector<Table> plots;
    std::vector<CheckResult> checks;
    std::string manifest;
    double wall_seconds = 0.0;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Identity of the computation: output location and worker count do not
/// change any result, so they are excluded.
inline std::string config_hash(const RunConfig& c) {
    RunConfig k = c;
    k.output.clear();
    k.workers = 1;
    return hex64(fnv1a64(render_config(k)));
}

inline std::string render_csv(const Table& t, const std::string& manifest_hash) {
    std::string s = "# manifest_hash: " + manifest_hash + "\n";
    if (!t.header_comment.empty()) s += "# " + t.header_comment + "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
    s += "\n";
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
        s += "\n";
    }
    return s;
}

inline std::string num(double v) { return format_double(v); }

// ---- studies ---------------------------------------------------------------------

namespace detail {

inline PipelineConfig pipeline_for(const RunConfig& c, std::shared_ptr<const PowerSpectrum> s, bool geometry, int quad_q) {
    PipelineConfig p;
    p.spectrum = std::move(s);
    p.dt = c.dt;
    p.mesh_level = c.mesh_level;
    p.geometry = geometry;
    p.quadrature_q = quad_q;
    p.oversample = c.oversample;
    p.workers = c.workers;
    return p;
}

inline double pick(const ReplicateOutcome& o, Quantity q, std::size_t j) {
    switch (q) {
        case Quantity::Total: return o.total[j];
        case Quantity::FirstChaos: return o.first[j];
        case Quantity::SecondChaos: return o.second[j];
    }
    return 0.0;
}

inline void run_mean_length(const RunConfig& c, StudyResult& r) {
    const auto s = c.make_spectrum();
    const auto mesh = build_icosphere(c.mesh_level);
    const HarmonicBasis basis(mesh, harmonic_layout(*s));
    const FieldSynthesizer synth(basis);
    const EnsembleSampler sampler(s, TimeGrid::for_horizon(c.horizons.front(), c.dt), c.oversample);
    const auto T = sampler.grid().horizon();
    // Per replicate: time average of L_u(t_k).
    const auto per_rep = parallel_map<std::vector<double>>(
        static_cast<std::size_t>(c.replicates), c.workers, [&](std::size_t i) {
            const auto ens = sampler.sample(derive_seed(c.seed, {0x4D4CULL, i}));
            const auto bf = boundary_functionals(ens, synth, mesh, c.levels);
            std::vector<double> v;
            for (const auto& b : bf) v.push_back(b.raw_integral / T);
            return v;
        });
    Table t{"mean_length", "", {"u", "empirical_mean", "kac_rice", "rel_error", "z_score", "se"}, {}};
    Table pl{"mean_length_plot", "", {"u", "empirical_mean", "se", "kac_rice"}, {}};
    bool ok = true;
    std::string worst;
    for (std::size_t j = 0; j < c.levels.size(); ++j) {
        std::vector<double> x;
        for (const auto& v : per_rep) x.push_back(v[j]);
        const auto m = moments(x);
        const double kr = kac_rice_mean(*s, c.levels[j]);
        const double rel = (m.mean - kr) / kr;
        const double z = (m.mean - kr) / m.mean_se();
        t.add({num(c.levels[j]), num(m.mean), num(kr), num(rel), num(z), num(m.mean_se())});
        pl.add({num(c.levels[j]), num(m.mean), num(m.mean_se()), num(kr)});
        if (std::abs(rel) > c.tolerance) {
            ok = false;
            worst += " u=" + num(c.levels[j]) + " rel=" + num(rel);
        }
    }
    r.tables.push_back(std::move(t));
    r.plots.push_back(std::move(pl));
    r.checks.push_back({"kac-rice mean within tolerance", ok, ok ? "all levels within " + num(c.tolerance) : worst});
}

inline void run_variance_scaling(const RunConfig& c, StudyResult& r) {
    const auto s = c.make_spectrum();
    const bool geom = c.quantity == Quantity::Total;
    const auto cfg = pipeline_for(c, s, geom, 0);
    std::vector<std::vector<double>> samples;
    std::vector<double> Tg;
    for (const double T : c.horizons) {
        const PipelineRunner runner(cfg, T);
        const auto outs = runner.run(c.levels, static_cast<std::size_t>(c.replicates), c.seed);
        std::vector<double> x;
        for (const auto& o : outs) x.push_back(pick(o, c.quantity, 0));
        samples.push_back(std::move(x));
        Tg.push_back(runner.grid().horizon());
    }
    const auto fit = fit_variance_scaling(Tg, samples, c.seed);
    const auto rep = classify_regime(*s);
    std::optional<double> expected;
    if (c.quantity == Quantity::FirstChaos) {
        const auto* e0 = s->find(0);
        expected = (e0->beta < 1.0) ? 2.0 - e0->beta : 1.0;
    } else {
        expected = rep.expected_var_exponent;
    }
    Table t{"variance_scaling", "fitted_exponent: " + num(fit.fitted_exponent) + " se: " + num(fit.exponent_se),
            {"T", "variance", "variance_se"}, {}};
    Table pl{"variance_scaling_loglog",
             "slope: " + num(fit.fitted_exponent) + " intercept: " + num(fit.intercept) +
                 (expected ? " expected_slope: " + num(*expected) : ""),
             {"log_T", "log_variance", "log_variance_se", "fit_line"}, {}};
    for (std::size_t i = 0; i < Tg.size(); ++i) {
        t.add({num(Tg[i]), num(fit.variances[i]), num(fit.variance_se[i])});
        const double lx = std::log(Tg[i]);
        pl.add({num(lx), num(std::log(fit.variances[i])), num(fit.variance_se[i] / fit.variances[i]),
                num(fit.intercept + fit.fitted_exponent * lx)});
    }
    r.tables.push_back(std::move(t));
    r.plots.push_back(std::move(pl));
    if (expected) {
        const bool ok = std::abs(fit.fitted_exponent - *expected) <= c.exponent_tolerance;
        r.checks.push_back({"fitted exponent near prediction", ok,
                            "fitted " + num(fit.fitted_exponent) + " expected " + num(*expected)});
    } else {
        r.checks.push_back({"fitted exponent near prediction", true, "no prediction in the boundary regime"});
    }
}

inline void run_berry_profile(const RunConfig& c, StudyResult& r) {
    const auto s = c.make_spectrum();
    const auto prof = berry_study(s, c.levels, c.horizons.front(), static_cast<std::size_t>(c.replicates), c.seed, c.dt,
                                  c.workers);
    const auto rep = classify_regime(*s);
    Table t{"berry_profile", prof.u_star ? "u_star: " + num(*prof.u_star) : "u_star: none",
            {"u", "variance", "variance_se", "exact_variance", "long_constant"}, {}};
    Table pl{"berry_profile_plot", t.header_comment, {"u", "variance", "long_constant", "is_u_star"}, {}};
    std::vector<double> vars;
    for (const auto& row : prof.rows) {
        const std::string lc = row.long_constant ? num(*row.long_constant) : "nan";
        t.add({num(row.u), num(row.variance), num(row.variance_se), num(row.exact_variance), lc});
        const bool at = prof.u_star && std::abs(row.u - *prof.u_star) < 1e-12;
        pl.add({num(row.u), num(row.variance), lc, at ? "1" : "0"});
        vars.push_back(row.variance);
    }
    r.tables.push_back(std::move(t));
    r.plots.push_back(std::move(pl));
    std::vector<double> sorted = vars;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    if (prof.u_star && rep.i_star.size() == 1) {
        // One grid step: the largest spacing adjacent to the u* grid point.
        std::vector<double> g = c.levels;
        std::sort(g.begin(), g.end());
        double step = 0.0;
        for (std::size_t i = 1; i < g.size(); ++i) step = std::max(step, g[i] - g[i - 1]);
        const double umin = prof.rows[prof.argmin].u;
        const bool near = std::abs(std::abs(umin) - *prof.u_star) <= step + 1e-12;
        r.checks.push_back({"variance minimum near u*", near, "argmin u=" + num(umin) + " u*=" + num(*prof.u_star)});
        std::optional<double> v0, vs;
        for (const auto& row : prof.rows) {
            if (std::abs(row.u) < 1e-12) v0 = row.variance;
            if (std::abs(row.u - *prof.u_star) < 1e-12) vs = row.variance;
        }
        if (v0 && vs) {
            const bool ok = *vs < 0.1 * *v0;
            r.checks.push_back({"Var(u*) < 10% Var(0)", ok, "ratio " + num(*vs / *v0)});
        }
    } else {
        const bool ok = sorted.front() >= 0.25 * median;
        r.checks.push_back({"no cancellation (min >= 25% median)", ok, "min/median " + num(sorted.front() / median)});
    }
}

inline void run_limit_law(const RunConfig& c, StudyResult& r) {
    const auto s = c.make_spectrum();
    const bool geom = c.quantity == Quantity::Total;
    const PipelineRunner runner(pipeline_for(c, s, geom, 0), c.horizons.front());
    const auto outs = runner.run(c.levels, static_cast<std::size_t>(c.replicates), c.seed);
    std::vector<double> x;
    for (const auto& o : outs) x.push_back(pick(o, c.quantity, 0));
    LimitTestOptions opt;
    opt.threshold = c.ks_threshold;
    opt.reference_count = static_cast<std::size_t>(c.reference_count);
    opt.sampler.n_inner = c.n_inner;
    opt.sampler.burn_factor = c.burn_factor;
    const auto rep = test_limit_distribution(*s, c.levels.front(), x, opt, derive_seed(c.seed, {0x5245ULL}));
    Table t{"limit_law",
            "regime: " + std::string(regime_name(rep.regime)) + " ks: " + num(rep.ks_statistic) + " p: " + num(rep.p_value),
            {"replicate", "value", "standardized"}, {}};
    for (std::size_t i = 0; i < x.size(); ++i) t.add({std::to_string(i), num(x[i]), num(rep.standardized_samples[i])});
    r.tables.push_back(std::move(t));
    Table ps{"limit_law_sample_cdf", "", {"x", "F"}, {}};
    for (const auto& [v, f] : empirical_cdf(rep.standardized_samples)) ps.add({num(v), num(f)});
    r.plots.push_back(std::move(ps));
    Table pr{"limit_law_reference_cdf", rep.reference_samples.empty() ? "reference: N(0,1)" : "reference: composite Rosenblatt",
             {"x", "F"}, {}};
    if (rep.reference_samples.empty()) {
        for (int i = -400; i <= 400; ++i) pr.add({num(i / 100.0), num(gaussian_cdf(i / 100.0))});
    } else {
        for (const auto& [v, f] : empirical_cdf(rep.reference_samples)) pr.add({num(v), num(f)});
    }
    r.plots.push_back(std::move(pr));
    r.checks.push_back({"KS against the limit law", rep.pass, "D=" + num(rep.ks_statistic) + " p=" + num(rep.p_value)});
}

inline void run_chaos_audit(const RunConfig& c, StudyResult& r) {
    const auto s = c.make_spectrum();
    const PipelineRunner runner(pipeline_for(c, s, true, c.q_max), c.horizons.front());
    const auto outs = runner.run(c.levels, static_cast<std::size_t>(c.replicates), c.seed);
    Table t{"chaos_projections", "", {"replicate", "q", "value"}, {}};
    for (std::size_t i = 0; i < outs.size(); ++i)
        for (int q = 1; q <= c.q_max; ++q)
            t.add({std::to_string(i), std::to_string(q), num(outs[i].projections[0][static_cast<std::size_t>(q - 1)])});
    Table v{"chaos_variances", "", {"q", "mean", "mean_se", "variance"}, {}};
    for (int q = 1; q <= c.q_max; ++q) {
        std::vector<double> x;
        for (const auto& o : outs) x.push_back(o.projections[0][static_cast<std::size_t>(q - 1)]);
        const auto m = moments(x);
        v.add({std::to_string(q), num(m.mean), num(m.mean_se()), num(m.variance)});
    }
    std::vector<double> tot;
    double num2 = 0.0, den2 = 0.0;
    for (const auto& o : outs) {
        tot.push_back(o.total[0]);
        const double d = o.projections[0][1] - o.second[0];
        num2 += d * d;
        den2 += o.second[0] * o.second[0];
    }
    v.add({"total", num(sample_mean(tot)), num(std::sqrt(sample_variance(tot) / static_cast<double>(tot.size()))),
           num(sample_variance(tot))});
    const double disc = std::sqrt(num2 / den2);
    v.header_comment = "second_chaos_rms_discrepancy: " + num(disc);
    r.tables.push_back(std::move(t));
    r.tables.push_back(std::move(v));
    Table pl{"chaos_audit_plot", "", {"replicate", "second_spectral", "second_quadrature"}, {}};
    for (std::size_t i = 0; i < outs.size(); ++i) pl.add({std::to_string(i), num(outs[i].second[0]), num(outs[i].projections[0][1])});
    r.plots.push_back(std::move(pl));
    r.checks.push_back({"spectral vs quadrature second chaos", disc <= c.tolerance, "rms discrepancy " + num(disc)});
}

}  // namespace detail

inline std::string render_manifest(const StudyResult& r) {
    std::ostringstream o;
    o << "tool: sphlev-workbench\n";
    o << "version: " << kWorkbenchVersion << "\n";
    o << "study: " << study_name(r.config.study) << "\n";
    o << "seed: " << r.config.seed << "\n";
    o << "config_hash: " << config_hash(r.config) << "\n";
    o << "spectrum_hash: " << spectrum_hash(*r.config.make_spectrum()) << "\n";
    o << "mesh_level: " << r.config.mesh_level << "\n";
    o << "dt: " << format_double(r.config.dt) << "\n";
    o << "wall_time_s: " << format_double(r.wall_seconds) << "\n";
    for (const auto& t : r.tables) o << "table: " << t.name << ".csv " << hex64(fnv1a64(render_csv(t, config_hash(r.config)))) << "\n";
    for (const auto& c : r.checks) o << "check: " << (c.pass ? "pass" : "FAIL") << " | " << c.name << " | " << c.detail << "\n";
    o << "config:\n";
    std::istringstream cfg(render_config(r.config));
    for (std::string line; std::getline(cfg, line);) o << "  " << line << "\n";
    return o.str();
}

inline StudyResult run_study(const RunConfig& c) {
    StudyResult r;
    r.config = c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        switch (c.study) {
            case StudyKind::MeanLength: detail::run_mean_length(c, r); break;
            case StudyKind::VarianceScaling: detail::run_variance_scaling(c, r); break;
            case StudyKind::BerryProfile: detail::run_berry_profile(c, r); break;
            case StudyKind::LimitLaw: detail::run_limit_law(c, r); break;
            case StudyKind::ChaosAudit: detail::run_chaos_audit(c, r); break;
        }
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(study_name(c.study)) + " study failed: " + e.what());
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.manifest = render_manifest(r);
    return r;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    os << content;
    if (!os) throw std::runtime_error("write failed for '" + p.string() + "'");
}

}  // namespace detail

/// Writes every table as CSV plus manifest.txt into `dir`.
inline void write_study(const StudyResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto h = config_hash(r.config);
    for (const auto& t : r.tables) detail::write_file(dir / (t.name + ".csv"), render_csv(t, h));
    detail::write_file(dir / "manifest.txt", r.manifest);
}

/// Per-figure plot tables (CSV) into `dir`; returns the written paths.
inline std::vector<std::filesystem::path> emit_plot_data(const StudyResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    const auto h = config_hash(r.config);
    for (const auto& t : r.plots) {
        const auto p = dir / (t.name + ".csv");
        detail::write_file(p, render_csv(t, h));
        out.push_back(p);
    }
    return out;
}

/// Recovers the config and recorded table hashes from a manifest.
struct ParsedManifest {
    RunConfig config;
    std::vector<std::pair<std::string, std::string>> table_hashes;  ///< file name, hash
};

inline ParsedManifest parse_manifest(std::string_view text) {
    ParsedManifest m;
    std::string cfg;
    bool in_cfg = false;
    std::istringstream is{std::string(text)};
    for (std::string line; std::getline(is, line);) {
        if (in_cfg) {
            if (line.rfind("  ", 0) == 0) {
                cfg += line.substr(2) + "\n";
                continue;
            }
            in_cfg = false;
        }
        if (line == "config:") {
            in_cfg = true;
        } else if (line.rfind("table: ", 0) == 0) {
            std::istringstream ls(line.substr(7));
            std::string name, hash;
            ls >> name >> hash;
            m.table_hashes.emplace_back(name, hash);
        }
    }
    if (cfg.empty()) throw std::runtime_error("manifest has no config block");
    m.config = parse_config(cfg);
    return m;
}

}  // namespace sphlev
