#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "boostgp/data.hpp"
#include "boostgp/diagnostics.hpp"
#include "boostgp/inference.hpp"
#include "boostgp/sampler.hpp"
#include "boostgp/simulate.hpp"
#include "boostgp/version.hpp"

namespace boostgp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitNumerical = 4;

/// Fully resolved invocation configuration; the manifest serializes exactly
/// these values so a run can be replayed bit-for-bit.
struct RunConfig {
    // shared
    std::string counts_path;
    std::string coords_path;
    std::string design_path;
    std::string out_dir = "boostgp_out";
    bool genes_in_rows = false;
    std::uint64_t seed = 1;
    int threads = 0; // 0: hardware concurrency

    // run
    long iters = 2000;
    double burn_in = 0.5;
    int chains = 4;
    double alpha = 0.05;
    double ppi_cutoff = 0.5;
    long filter_spot_min = 10;
    double filter_gene_frac = 0.10;
    bool size_factors_one = false;
    std::string l_prior = "uniform";
    bool prior_only = false;
    bool lambda_log_scale = false;
    Hyperparameters hp;
    double tau_lambda_flag = 0.0; // 0: scale-aware per-gene default
    double tau_l_flag = 0.0;      // 0: derived from the length-scale support

    // simulate
    std::string pattern = "spot";
    std::string mask_path;
    long sim_genes = 100;
    long sim_sv = 15;
    double fold_change = 0.0; // 0: pattern default (6 spot/linear, 3 mask)
    double spot_radius = 5.0;
    double false_zero = 0.0;
    double noise_sd = 0.3;
    double size_factor_sd = 0.2;
    double dispersion_mean = 10.0;
    double beta_baseline = 2.0;

    // diagnose
    std::string weights = "gaussian";
    int knn_k = 5;
    double bandwidth = 0.0; // 0: median pairwise distance
    std::string moran_input = "denoised";

    int resolved_threads() const {
        if (threads > 0) return threads;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }
};

namespace climod {

inline void add_shared_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--out", cfg.out_dir, "Output directory");
    cmd->add_option("--seed", cfg.seed, "Master RNG seed");
    cmd->add_option("--threads", cfg.threads, "Worker threads (0 = all hardware threads)");
    cmd->set_config("--config", "", "Flat key=value configuration file (flags override it)");
}

inline void add_run_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--counts", cfg.counts_path, "Count matrix file (TSV/CSV, optionally .gz)");
    cmd->add_option("--coords", cfg.coords_path, "Coordinate file (spot_id, x, y)");
    cmd->add_option("--design", cfg.design_path, "Optional covariate file (intercept added)");
    cmd->add_flag("--genes-in-rows", cfg.genes_in_rows, "Count file stores genes as rows");
    cmd->add_option("--iters", cfg.iters, "MCMC iterations per chain");
    cmd->add_option("--burn-in", cfg.burn_in, "Burn-in fraction in [0, 1)");
    cmd->add_option("--chains", cfg.chains, "Number of independent chains");
    cmd->add_option("--alpha", cfg.alpha, "Significance level for the combined rule");
    cmd->add_option("--ppi-cutoff", cfg.ppi_cutoff, "PPI cutoff for the combined rule");
    cmd->add_option("--filter-spot-min", cfg.filter_spot_min, "Minimum spot total count");
    cmd->add_option("--filter-gene-frac", cfg.filter_gene_frac,
                    "Minimum fraction of spots with non-zero count per gene");
    cmd->add_flag("--set-size-factors-one", cfg.size_factors_one,
                  "Use unit size factors (absolute expression)");
    cmd->add_option("--l-prior", cfg.l_prior, "Length-scale prior")
        ->check(CLI::IsMember({"uniform", "gamma"}));
    cmd->add_flag("--prior-only", cfg.prior_only,
                  "Disable all data-dependent terms (calibration mode)");
    cmd->add_flag("--lambda-log-scale", cfg.lambda_log_scale,
                  "Log-scale expression proposals instead of natural scale");
    cmd->add_option("--a-pi", cfg.hp.a_pi, "Extra-zero beta prior shape a");
    cmd->add_option("--b-pi", cfg.hp.b_pi, "Extra-zero beta prior shape b");
    cmd->add_option("--a-phi", cfg.hp.a_phi, "Dispersion gamma prior shape");
    cmd->add_option("--b-phi", cfg.hp.b_phi, "Dispersion gamma prior rate");
    cmd->add_option("--a-omega", cfg.hp.a_omega, "Spatial-proportion beta prior shape a");
    cmd->add_option("--b-omega", cfg.hp.b_omega, "Spatial-proportion beta prior shape b");
    cmd->add_option("--a-sigma", cfg.hp.a_sigma, "Variance inverse-gamma shape");
    cmd->add_option("--b-sigma", cfg.hp.b_sigma, "Variance inverse-gamma scale");
    cmd->add_option("--h-scale", cfg.hp.h, "Coefficient prior scale h");
    cmd->add_option("--tau-phi", cfg.hp.tau_phi, "Dispersion proposal step");
    cmd->add_option("--tau-lambda", cfg.tau_lambda_flag,
                    "Expression proposal step (0 = scale-aware per gene)");
    cmd->add_option("--tau-l", cfg.tau_l_flag, "Length-scale proposal step (0 = derived)");
    cmd->add_option("--l-gamma-shape", cfg.hp.l_gamma_shape, "Gamma length-scale prior shape");
    cmd->add_option("--l-gamma-rate", cfg.hp.l_gamma_rate, "Gamma length-scale prior rate");
}

inline void add_simulate_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--pattern", cfg.pattern, "Spatial pattern")
        ->check(CLI::IsMember({"spot", "linear", "mask"}));
    cmd->add_option("--mask", cfg.mask_path, "Mask file for --pattern mask (one label per spot)");
    cmd->add_option("--coords", cfg.coords_path, "Coordinate file for --pattern mask");
    cmd->add_option("--genes", cfg.sim_genes, "Number of genes");
    cmd->add_option("--n-sv", cfg.sim_sv, "Number of spatially variable genes");
    cmd->add_option("--fold-change", cfg.fold_change,
                    "Peak fold change (0 = pattern default: 6 spot/linear, 3 mask)");
    cmd->add_option("--radius", cfg.spot_radius, "Spot pattern decay radius");
    cmd->add_option("--false-zero", cfg.false_zero, "Fraction of spots forced to zero per gene");
    cmd->add_option("--noise-sd", cfg.noise_sd, "Log-scale noise standard deviation");
    cmd->add_option("--size-factor-sd", cfg.size_factor_sd, "Log size-factor standard deviation");
    cmd->add_option("--dispersion-mean", cfg.dispersion_mean, "Mean of exponential dispersions");
    cmd->add_option("--beta-baseline", cfg.beta_baseline, "Baseline log expression");
}

inline void add_diagnose_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--counts", cfg.counts_path,
                    "Count file (defaults to the run manifest's value)");
    cmd->add_option("--coords", cfg.coords_path,
                    "Coordinate file (defaults to the run manifest's value)");
    cmd->add_flag("--genes-in-rows", cfg.genes_in_rows, "Count file stores genes as rows");
    cmd->add_option("--filter-spot-min", cfg.filter_spot_min, "Minimum spot total count");
    cmd->add_option("--filter-gene-frac", cfg.filter_gene_frac,
                    "Minimum fraction of spots with non-zero count per gene");
    cmd->add_flag("--set-size-factors-one", cfg.size_factors_one, "Use unit size factors");
    cmd->add_option("--weights", cfg.weights, "Spatial weight scheme")
        ->check(CLI::IsMember({"gaussian", "knn"}));
    cmd->add_option("--knn-k", cfg.knn_k, "Neighbours for --weights knn");
    cmd->add_option("--bandwidth", cfg.bandwidth,
                    "Gaussian bandwidth (0 = median pairwise distance)");
    cmd->add_option("--moran-input", cfg.moran_input, "Values fed to Moran's I")
        ->check(CLI::IsMember({"denoised", "raw"}));
}

inline void write_kv(std::FILE* f, const char* key, const std::string& v) {
    if (!v.empty()) std::fprintf(f, "%s=%s\n", key, v.c_str());
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Flat key=value manifest; feeding it back through --config replays the run.
inline void write_run_manifest(const RunConfig& cfg, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write manifest: " + path);
    std::fprintf(f, "# boostgp %s run manifest\n", version());
    write_kv(f, "counts", cfg.counts_path);
    write_kv(f, "coords", cfg.coords_path);
    write_kv(f, "design", cfg.design_path);
    write_kv(f, "out", cfg.out_dir);
    std::fprintf(f, "genes-in-rows=%s\n", cfg.genes_in_rows ? "true" : "false");
    std::fprintf(f, "seed=%llu\n", static_cast<unsigned long long>(cfg.seed));
    std::fprintf(f, "threads=%d\n", cfg.threads);
    std::fprintf(f, "iters=%ld\n", cfg.iters);
    std::fprintf(f, "burn-in=%s\n", fmt_double(cfg.burn_in).c_str());
    std::fprintf(f, "chains=%d\n", cfg.chains);
    std::fprintf(f, "alpha=%s\n", fmt_double(cfg.alpha).c_str());
    std::fprintf(f, "ppi-cutoff=%s\n", fmt_double(cfg.ppi_cutoff).c_str());
    std::fprintf(f, "filter-spot-min=%ld\n", cfg.filter_spot_min);
    std::fprintf(f, "filter-gene-frac=%s\n", fmt_double(cfg.filter_gene_frac).c_str());
    std::fprintf(f, "set-size-factors-one=%s\n", cfg.size_factors_one ? "true" : "false");
    write_kv(f, "l-prior", cfg.l_prior);
    std::fprintf(f, "prior-only=%s\n", cfg.prior_only ? "true" : "false");
    std::fprintf(f, "lambda-log-scale=%s\n", cfg.lambda_log_scale ? "true" : "false");
    std::fprintf(f, "a-pi=%s\n", fmt_double(cfg.hp.a_pi).c_str());
    std::fprintf(f, "b-pi=%s\n", fmt_double(cfg.hp.b_pi).c_str());
    std::fprintf(f, "a-phi=%s\n", fmt_double(cfg.hp.a_phi).c_str());
    std::fprintf(f, "b-phi=%s\n", fmt_double(cfg.hp.b_phi).c_str());
    std::fprintf(f, "a-omega=%s\n", fmt_double(cfg.hp.a_omega).c_str());
    std::fprintf(f, "b-omega=%s\n", fmt_double(cfg.hp.b_omega).c_str());
    std::fprintf(f, "a-sigma=%s\n", fmt_double(cfg.hp.a_sigma).c_str());
    std::fprintf(f, "b-sigma=%s\n", fmt_double(cfg.hp.b_sigma).c_str());
    std::fprintf(f, "h-scale=%s\n", fmt_double(cfg.hp.h).c_str());
    std::fprintf(f, "tau-phi=%s\n", fmt_double(cfg.hp.tau_phi).c_str());
    std::fprintf(f, "tau-lambda=%s\n", fmt_double(cfg.tau_lambda_flag).c_str());
    std::fprintf(f, "tau-l=%s\n", fmt_double(cfg.tau_l_flag).c_str());
    std::fprintf(f, "l-gamma-shape=%s\n", fmt_double(cfg.hp.l_gamma_shape).c_str());
    std::fprintf(f, "l-gamma-rate=%s\n", fmt_double(cfg.hp.l_gamma_rate).c_str());
    std::fclose(f);
}

inline void write_sim_manifest(const RunConfig& cfg, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw io_error("cannot write manifest: " + path);
    std::fprintf(f, "# boostgp %s simulate manifest\n", version());
    write_kv(f, "pattern", cfg.pattern);
    write_kv(f, "mask", cfg.mask_path);
    write_kv(f, "coords", cfg.coords_path);
    write_kv(f, "out", cfg.out_dir);
    std::fprintf(f, "seed=%llu\n", static_cast<unsigned long long>(cfg.seed));
    std::fprintf(f, "genes=%ld\n", cfg.sim_genes);
    std::fprintf(f, "n-sv=%ld\n", cfg.sim_sv);
    std::fprintf(f, "fold-change=%s\n", fmt_double(cfg.fold_change).c_str());
    std::fprintf(f, "radius=%s\n", fmt_double(cfg.spot_radius).c_str());
    std::fprintf(f, "false-zero=%s\n", fmt_double(cfg.false_zero).c_str());
    std::fprintf(f, "noise-sd=%s\n", fmt_double(cfg.noise_sd).c_str());
    std::fprintf(f, "size-factor-sd=%s\n", fmt_double(cfg.size_factor_sd).c_str());
    std::fprintf(f, "dispersion-mean=%s\n", fmt_double(cfg.dispersion_mean).c_str());
    std::fprintf(f, "beta-baseline=%s\n", fmt_double(cfg.beta_baseline).c_str());
    std::fclose(f);
}

/// Minimal key=value reader used to pull data paths out of a run manifest.
inline std::unordered_map<std::string, std::string> read_manifest(const std::string& path) {
    const std::string text = detail::read_file(path);
    std::unordered_map<std::string, std::string> kv;
    for (const auto line : detail::split_lines(text)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string_view::npos) continue;
        kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    return kv;
}

struct LoadedData {
    CountMatrix counts;
    SpatialCoords coords;
    SizeFactors s;
    DesignMatrix design;
};

inline LoadedData ingest(const RunConfig& cfg) {
    if (cfg.counts_path.empty()) throw validation_error("--counts is required");
    if (cfg.coords_path.empty()) throw validation_error("--coords is required");
    const Orientation orient =
        cfg.genes_in_rows ? Orientation::genes_in_rows : Orientation::genes_in_columns;
    CountMatrix raw_counts = load_counts(cfg.counts_path, orient);
    SpatialCoords raw_coords = align_coords(load_coords(cfg.coords_path), raw_counts);
    auto [counts, coords] = filter(raw_counts, raw_coords, cfg.filter_spot_min,
                                   cfg.filter_gene_frac);
    LoadedData out;
    out.s = cfg.size_factors_one ? SizeFactors::ones(counts.n_spots())
                                 : compute_size_factors(counts);
    out.design = cfg.design_path.empty() ? DesignMatrix::intercept_only(counts.n_spots())
                                         : load_design(cfg.design_path, counts);
    out.counts = std::move(counts);
    out.coords = std::move(coords);
    return out;
}

inline Hyperparameters resolve_hyperparameters(const RunConfig& cfg) {
    Hyperparameters hp = cfg.hp;
    hp.l_prior = cfg.l_prior == "gamma" ? LengthScalePrior::gamma : LengthScalePrior::uniform;
    if (cfg.tau_lambda_flag > 0.0) hp.tau_lambda = cfg.tau_lambda_flag;
    if (cfg.tau_l_flag > 0.0) hp.tau_l = cfg.tau_l_flag;
    hp.validate();
    return hp;
}

inline int cmd_run(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const LoadedData data = ingest(cfg);
    const Hyperparameters hp = resolve_hyperparameters(cfg);

    SamplerOptions opt;
    opt.n_iter = cfg.iters;
    opt.burn_in_frac = cfg.burn_in;
    opt.likelihood_enabled = !cfg.prior_only;
    opt.lambda_log_scale = cfg.lambda_log_scale;
    opt.record_snapshots = false; // post-hoc inference uses the stored means
    const int total_threads = cfg.resolved_threads();
    const int chain_threads = std::max(1, std::min(cfg.chains, total_threads));
    opt.inner_threads = std::max(1, total_threads / chain_threads);

    const auto traces = run_multichain(data.counts, data.coords, data.design, data.s, hp, opt,
                                       cfg.chains, cfg.seed, chain_threads);
    const auto results = summarize(traces, cfg.alpha, cfg.ppi_cutoff);

    fs::create_directories(cfg.out_dir);
    write_results(results, (fs::path(cfg.out_dir) / "results.tsv").string());
    for (const auto& t : traces)
        save_trace(t, (fs::path(cfg.out_dir) / ("chain_" + std::to_string(t.chain_id) +
                                                ".trace.tsv")).string());
    write_run_manifest(cfg, (fs::path(cfg.out_dir) / "manifest.txt").string());

    long selected = 0;
    for (const auto& r : results) selected += r.selected;
    std::printf("selected %ld of %lld genes (alpha=%g, ppi cutoff=%g)\n", selected,
                static_cast<long long>(results.size()), cfg.alpha, cfg.ppi_cutoff);
    for (const auto& t : traces)
        for (const auto& w : t.warnings)
            std::fprintf(stderr, "warning: chain %d: %s\n", t.chain_id, w.c_str());
    return kExitOk;
}

inline int cmd_simulate(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    PatternSpec pattern;
    if (cfg.pattern == "spot") {
        pattern = PatternSpec::spot_pattern(cfg.fold_change > 0.0 ? cfg.fold_change : 6.0,
                                            cfg.spot_radius);
    } else if (cfg.pattern == "linear") {
        pattern = PatternSpec::linear_pattern(cfg.fold_change > 0.0 ? cfg.fold_change : 6.0);
    } else {
        if (cfg.mask_path.empty() || cfg.coords_path.empty())
            throw validation_error("--pattern mask requires --mask and --coords");
        pattern = PatternSpec::mask_pattern(load_coords(cfg.coords_path), load_mask(cfg.mask_path),
                                            cfg.fold_change > 0.0 ? cfg.fold_change : 3.0);
    }

    SimConfig sim;
    sim.n_genes = cfg.sim_genes;
    sim.n_sv = cfg.sim_sv;
    sim.beta_baseline = cfg.beta_baseline;
    sim.noise_sd = cfg.noise_sd;
    sim.size_factor_sd = cfg.size_factor_sd;
    sim.dispersion_mean = cfg.dispersion_mean;
    sim.false_zero_frac = cfg.false_zero;
    sim.seed = cfg.seed;

    const LabeledDataset data = generate_dataset(pattern, sim);
    fs::create_directories(cfg.out_dir);
    save_counts(data.counts, (fs::path(cfg.out_dir) / "counts.tsv").string());
    save_coords(data.coords, (fs::path(cfg.out_dir) / "coords.tsv").string());
    save_truth(data, (fs::path(cfg.out_dir) / "truth.tsv").string());
    write_sim_manifest(cfg, (fs::path(cfg.out_dir) / "sim_manifest.txt").string());
    std::printf("wrote %lld spots x %lld genes (%lld spatially variable) to %s\n",
                static_cast<long long>(data.counts.n_spots()),
                static_cast<long long>(data.counts.n_genes()),
                static_cast<long long>(cfg.sim_sv), cfg.out_dir.c_str());
    return kExitOk;
}

inline int cmd_diagnose(RunConfig cfg) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(cfg.out_dir))
        throw validation_error("output directory not found: " + cfg.out_dir);

    std::vector<std::string> trace_paths;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("chain_", 0) == 0 && name.find(".trace.tsv") != std::string::npos)
            trace_paths.push_back(entry.path().string());
    }
    std::sort(trace_paths.begin(), trace_paths.end());
    if (trace_paths.empty())
        throw validation_error("no trace files in " + cfg.out_dir + "; run the sampler first");

    const fs::path manifest_path = fs::path(cfg.out_dir) / "manifest.txt";
    if (fs::exists(manifest_path)) {
        const auto kv = read_manifest(manifest_path.string());
        auto fill = [&](const char* key, std::string& dst) {
            const auto it = kv.find(key);
            if (dst.empty() && it != kv.end()) dst = it->second;
        };
        fill("counts", cfg.counts_path);
        fill("coords", cfg.coords_path);
        if (const auto it = kv.find("genes-in-rows"); it != kv.end())
            cfg.genes_in_rows = it->second == "true";
        if (const auto it = kv.find("filter-spot-min"); it != kv.end())
            cfg.filter_spot_min = std::stol(it->second);
        if (const auto it = kv.find("filter-gene-frac"); it != kv.end())
            cfg.filter_gene_frac = std::stod(it->second);
        if (const auto it = kv.find("set-size-factors-one"); it != kv.end())
            cfg.size_factors_one = it->second == "true";
    }

    std::vector<ChainTrace> traces;
    traces.reserve(trace_paths.size());
    for (const auto& p : trace_paths) traces.push_back(load_trace(p));

    const LoadedData data = ingest(cfg);
    if (data.counts.n_genes() != traces[0].p || data.counts.n_spots() != traces[0].n ||
        data.counts.gene_ids != traces[0].gene_ids)
        throw validation_error("filtered data does not match the stored traces; "
                               "check the data paths and filter thresholds");

    const WeightMatrix weights = cfg.weights == "knn"
                                     ? WeightMatrix::knn(data.coords, cfg.knn_k)
                                     : WeightMatrix::gaussian(data.coords, cfg.bandwidth);

    Eigen::MatrixXd values;
    if (cfg.moran_input == "raw") {
        values = (data.counts.values.cast<double>().array().colwise() /
                  data.s.s.array()).log1p();
    } else {
        values = Eigen::MatrixXd::Zero(traces[0].n, traces[0].p);
        for (const auto& t : traces) values += t.lambda_mean;
        values /= static_cast<double>(traces.size());
    }

    std::FILE* f = std::fopen((fs::path(cfg.out_dir) / "morans_i.tsv").string().c_str(), "wb");
    if (!f) throw io_error("cannot write morans_i.tsv");
    std::fputs("gene_id\tmorans_i\n", f);
    for (Eigen::Index j = 0; j < traces[0].p; ++j) {
        double stat = std::numeric_limits<double>::quiet_NaN();
        try {
            stat = morans_i(values.col(j), weights);
        } catch (const validation_error&) {
            // constant field: leave NaN
        }
        std::fprintf(f, "%s\t%.12g\n", traces[0].gene_ids[static_cast<size_t>(j)].c_str(), stat);
    }
    std::fclose(f);

    if (traces.size() >= 2) {
        const ChainHealthReport report = chain_health(traces);
        f = std::fopen((fs::path(cfg.out_dir) / "chain_health.tsv").string().c_str(), "wb");
        if (!f) throw io_error("cannot write chain_health.tsv");
        for (size_t c = 0; c < report.per_chain_acceptance.size(); ++c) {
            const auto& a = report.per_chain_acceptance[c];
            std::fprintf(f,
                         "# chain %zu acceptance: phi=%.4f lambda=%.4f add=%.4f delete=%.4f "
                         "lwithin=%.4f eta_flip_rate=%.4f\n",
                         c, AcceptanceCounters::rate(a.phi_accepted, a.phi_proposed),
                         AcceptanceCounters::rate(a.lambda_accepted, a.lambda_proposed),
                         AcceptanceCounters::rate(a.add_accepted, a.add_proposed),
                         AcceptanceCounters::rate(a.delete_accepted, a.delete_proposed),
                         AcceptanceCounters::rate(a.lwithin_accepted, a.lwithin_proposed),
                         AcceptanceCounters::rate(a.eta_flips, a.eta_updates));
        }
        for (const auto& w : report.warnings) std::fprintf(f, "# warning: %s\n", w.c_str());
        std::fputs("gene_id\tppi_sd\tflagged\n", f);
        for (Eigen::Index j = 0; j < traces[0].p; ++j)
            std::fprintf(f, "%s\t%.12g\t%d\n", report.gene_ids[static_cast<size_t>(j)].c_str(),
                         report.ppi_sd[j], report.flagged[static_cast<size_t>(j)] ? 1 : 0);
        std::fclose(f);
    } else {
        std::fprintf(stderr, "note: single chain, skipping the chain-health report\n");
    }
    std::printf("diagnostics written to %s\n", cfg.out_dir.c_str());
    return kExitOk;
}

} // namespace climod

/// Parses argv and dispatches; returns the process exit code
/// (0 ok, 2 io, 3 validation, 4 numerical).
inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Bayesian detection of spatially variable genes in spatial molecular "
                 "profiling count data"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    RunConfig cfg;
    CLI::App* run = app.add_subcommand("run", "Fit the model and rank genes");
    climod::add_shared_options(run, cfg);
    climod::add_run_options(run, cfg);
    CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic benchmark dataset");
    climod::add_shared_options(sim, cfg);
    climod::add_simulate_options(sim, cfg);
    CLI::App* diag = app.add_subcommand("diagnose", "Spatial and chain diagnostics for a run");
    climod::add_shared_options(diag, cfg);
    climod::add_diagnose_options(diag, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (run->parsed()) return climod::cmd_run(cfg);
        if (sim->parsed()) return climod::cmd_simulate(cfg);
        return climod::cmd_diagnose(cfg);
    } catch (const io_error& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const validation_error& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const numerical_error& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kExitNumerical;
    }
}

inline int cli_main(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("boostgp");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

} // namespace boostgp
