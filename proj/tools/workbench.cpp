// sphlev-workbench: config-driven studies of level-curve functionals.
//
// Exit codes: 0 success, 1 usage/config/runtime error, 2 a study check failed
// (or a replay produced different tables).

#include "sphlev/workbench.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers, mesh_level, replicates;
    bool plots = false;
};

void add_common(CLI::App* sub, Overrides& o, bool needs_config) {
    auto* c = sub->add_option("--config,-c", o.config, "run config file");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed override");
    sub->add_option("--out,-o", o.out, "output directory override");
    sub->add_option("--workers,-j", o.workers, "worker threads")->check(CLI::Range(1, 1024));
    sub->add_option("--mesh-level", o.mesh_level, "icosphere subdivision level")->check(CLI::Range(0, 8));
    sub->add_option("--replicates,-n", o.replicates, "replicate count")->check(CLI::Range(2, 100000000));
    sub->add_flag("--plots", o.plots, "also write per-figure plot tables under <out>/plots");
}

void apply_overrides(sphlev::RunConfig& c, const Overrides& o) {
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output = *o.out;
    if (o.workers) c.workers = *o.workers;
    if (o.mesh_level) c.mesh_level = *o.mesh_level;
    if (o.replicates) c.replicates = *o.replicates;
}

int report(const sphlev::StudyResult& r) {
    for (const auto& c : r.checks)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    std::cout << "wrote " << r.tables.size() << " table(s) to " << r.config.output << " in "
              << sphlev::format_double(r.wall_seconds) << " s\n";
    return r.all_pass() ? 0 : 2;
}

int run(sphlev::StudyKind kind, const Overrides& o) {
    const std::filesystem::path cfg_path(o.config);
    auto cfg = sphlev::parse_config(sphlev::detail::read_text_file(cfg_path), cfg_path.parent_path());
    cfg.study = kind;
    apply_overrides(cfg, o);
    // Re-validate the study-specific constraints for the effective config.
    cfg = sphlev::parse_config(sphlev::render_config(cfg));
    const auto r = sphlev::run_study(cfg);
    sphlev::write_study(r, cfg.output);
    if (o.plots) sphlev::emit_plot_data(r, std::filesystem::path(cfg.output) / "plots");
    return report(r);
}

int replay(const std::string& manifest_path, const Overrides& o) {
    const auto m = sphlev::parse_manifest(sphlev::detail::read_text_file(manifest_path));
    auto cfg = m.config;
    if (o.out) cfg.output = *o.out;
    if (o.workers) cfg.workers = *o.workers;  // results do not depend on the worker count
    const auto r = sphlev::run_study(cfg);
    sphlev::write_study(r, cfg.output);
    if (o.plots) sphlev::emit_plot_data(r, std::filesystem::path(cfg.output) / "plots");
    const auto h = sphlev::config_hash(cfg);
    int bad = 0;
    for (const auto& [name, hash] : m.table_hashes) {
        std::string got = "missing";
        for (const auto& t : r.tables)
            if (t.name + ".csv" == name) got = sphlev::hex64(sphlev::fnv1a64(sphlev::render_csv(t, h)));
        const bool same = got == hash;
        bad += !same;
        std::cout << (same ? "MATCH " : "DIFFER ") << name << " " << got << "\n";
    }
    if (bad) return 2;
    return report(r) == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sphlev-workbench: Monte Carlo studies of level curves of spherical random fields"};
    app.require_subcommand(1);
    Overrides o;
    std::string manifest;
    const std::pair<const char*, sphlev::StudyKind> studies[] = {
        {"mean-length", sphlev::StudyKind::MeanLength},
        {"variance-scaling", sphlev::StudyKind::VarianceScaling},
        {"berry-profile", sphlev::StudyKind::BerryProfile},
        {"limit-law", sphlev::StudyKind::LimitLaw},
        {"chaos-audit", sphlev::StudyKind::ChaosAudit},
    };
    std::vector<std::pair<CLI::App*, sphlev::StudyKind>> subs;
    for (const auto& [name, kind] : studies) {
        auto* s = app.add_subcommand(name, std::string("run the ") + name + " study");
        add_common(s, o, true);
        subs.emplace_back(s, kind);
    }
    auto* rp = app.add_subcommand("replay", "re-run a study from its manifest and compare table hashes");
    rp->add_option("manifest", manifest, "manifest.txt of an earlier run")->required()->check(CLI::ExistingFile);
    add_common(rp, o, false);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        if (rp->parsed()) return replay(manifest, o);
        for (const auto& [s, kind] : subs)
            if (s->parsed()) return run(kind, o);
    } catch (const sphlev::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
