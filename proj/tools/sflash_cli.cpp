// Command-line front end: simulate, stats, moments, estimate, compare, shoot.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sflash/sflash.hpp"

namespace fs = std::filesystem;
using namespace sflash;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_numerical = 2;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string format;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
    auto* opt = cmd->add_option("--config", c.config, "experiment configuration file");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    else opt->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--seed", c.seed, "master seed (overrides the configuration)");
    cmd->add_option("--threads", c.threads, "worker threads (SFLASH_THREADS overrides)");
    cmd->add_option("--format", c.format, "image format")->check(CLI::IsMember({"pgm", "raw"}));
}

std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Writes a moment or variance image; PGM variance images span [0, max].
fs::path save_image(const Image& img, const fs::path& stem, const std::string& format, bool variance = false) {
    if (format == "pgm" && variance) {
        const double hi = img.max() > 0.0 ? img.max() : 1.0;
        fs::path p = stem;
        p += ".pgm";
        write_pgm(img, p, 0.0, hi);
        return p;
    }
    return write_image(img, stem, format);
}

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.format.empty()) cfg.format = c.format;
    return cfg;
}

fs::path out_dir(const Common& c, const ExperimentConfig* cfg) {
    if (!c.out.empty()) return c.out;
    if (cfg) return cfg->resolve(cfg->out_dir);
    throw std::invalid_argument("--out is required");
}

// --- verbs -------------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& i0, const std::string& manifest) {
    const int threads = resolve_threads(c.threads);
    if (!manifest.empty()) {
        if (c.out.empty()) throw std::invalid_argument("--out is required when regenerating from a manifest");
        const Manifest m = regenerate_dataset(manifest, c.out, threads);
        std::cout << "regenerated " << m.samples.size() << " samples, " << m.failed() << " failed, " << m.folded()
                  << " folded\n";
        return exit_ok;
    }
    if (c.config.empty()) throw std::invalid_argument("--config or --manifest is required");
    ExperimentConfig cfg = load(c);
    if (!i0.empty()) cfg.i0 = fs::absolute(i0).string();
    const Image I0 = cfg.load_i0();
    const FourierVelocity v0 = cfg.load_v0();
    cfg.noise_params();
    const Manifest m = simulate_dataset(cfg, I0, v0, out_dir(c, &cfg), cfg.format, threads);
    std::cout << "simulated " << m.samples.size() << " samples, " << m.failed() << " failed, " << m.folded()
              << " folded\n";
    return exit_ok;
}

int cmd_stats(const Common& c, const std::string& dataset, const std::vector<std::string>& images,
              const std::vector<std::string>& t0) {
    std::vector<Image> samples;
    if (!dataset.empty()) samples = load_dataset(dataset).images;
    for (const auto& p : images) samples.push_back(read_image(p));
    if (samples.empty()) throw std::invalid_argument("no images given");
    std::vector<Image> initial;
    for (const auto& p : t0) initial.push_back(read_image(p));
    Image mean, var, i0hat, unused;
    sample_moments(samples, mean, var);
    if (!initial.empty()) {
        sample_moments(initial, i0hat, unused);
        require_same_shape(i0hat, mean);
    }
    const fs::path out = out_dir(c, nullptr);
    const std::string format = c.format.empty() ? "raw" : c.format;
    fs::create_directories(out);
    save_image(mean, out / "mean", format);
    save_image(var, out / "variance", format, true);
    if (!initial.empty()) save_image(i0hat, out / "i0hat", format);
    std::cout << "n " << samples.size() << " mean_range " << fmt12(mean.min()) << ' ' << fmt12(mean.max())
              << " variance_max " << fmt12(var.max()) << "\n";
    return exit_ok;
}

int cmd_moments(const Common& c, const std::string& i0) {
    ExperimentConfig cfg = load(c);
    if (!i0.empty()) cfg.i0 = fs::absolute(i0).string();
    const Image I0 = cfg.load_i0();
    const FourierVelocity v0 = cfg.load_v0();
    const auto noise = make_noise_fields(cfg.grid, cfg.noise_params());
    const fs::path out = out_dir(c, &cfg);
    const MomentResult r = evolve_moments(v0, noise, cfg.nsteps, cfg.kernel);
    const MomentImages mi = moment_images(I0, r.state);
    fs::create_directories(out);
    save_image(mi.mean_image, out / "mean_image", cfg.format);
    save_image(mi.var_image, out / "var_image", cfg.format, true);
    write_deformation(r.state.mean_psi, out / "mean_psi.dgf");
    DeformationGrid var(r.state.var_psi.nx(), r.state.var_psi.ny());
    var.xs() = r.state.var_psi.xs();
    var.ys() = r.state.var_psi.ys();
    write_deformation(var, out / "var_psi.dgf");
    write_spectral(r.state.mean_v, out / "mean_v.sfv");
    std::cout << "evaluations " << r.evaluations << " var_image_max " << fmt12(mi.var_image.max()) << "\n";
    return exit_ok;
}

void write_text(const fs::path& p, const std::string& s) { write_file_bytes(p, s); }

int cmd_estimate(const Common& c, const std::string& dataset) {
    const Dataset d = load_dataset(dataset);
    if (d.images.size() < 2) throw std::invalid_argument("estimation needs at least 2 successful samples");
    ExperimentConfig est = d.config;
    if (!c.config.empty()) {
        est = load_config(c.config);
        if (!est.grid.same_lattice(d.config.grid)) throw std::invalid_argument("config grid differs from the dataset");
    }
    if (est.fields.empty()) throw std::invalid_argument("no noise fields configured");
    if (c.seed) est.estimate.seed = *c.seed;
    const fs::path out = out_dir(c, nullptr);

    ModelSetup s;
    s.grid = d.config.grid;
    s.kernel = est.kernel;
    s.v0 = d.v0;
    s.centers = est.centers();
    s.nsteps = est.nsteps;
    DataMoments dm = data_moments(d.images, d.I0);

    EstimateOptions opt;
    opt.bounds = {est.estimate.tau_lo, est.estimate.tau_hi, est.estimate.lambda_lo, est.estimate.lambda_hi};
    opt.trials = est.estimate.trials;
    opt.seed = est.estimate.seed;
    if (est.estimate.lambda_init) opt.lambda_init.assign(s.centers.size(), *est.estimate.lambda_init);
    opt.skip_lambda_stage = est.estimate.skip_lambda;
    opt.descent.max_iter = est.estimate.max_iter;
    opt.low_information_ratio = est.estimate.low_information_ratio;
    opt.threads = resolve_threads(c.threads);
    const EstimateResult r = estimate(s, dm, opt);

    // Truth comes from the dataset's own configuration when it is complete.
    const bool truth = d.config.truth_known() && d.config.fields.size() == s.centers.size();
    std::ostringstream params;
    params.precision(12);
    params << "field,mu_x,mu_y,tau,lambda,curvature,low_information";
    if (truth) params << ",true_tau,true_lambda,rel_err_tau,rel_err_lambda";
    params << "\n";
    for (std::size_t k = 0; k < s.centers.size(); ++k) {
        params << k + 1 << ',' << s.centers[k][0] << ',' << s.centers[k][1] << ',' << r.params.taus[k] << ','
               << r.params.lambdas[k] << ',' << (r.lambda_stage_run ? r.curvature[k] : 0.0) << ','
               << (r.lambda_stage_run && r.low_information[k] ? 1 : 0);
        if (truth) {
            const double tt = *d.config.fields[k].tau, tl = *d.config.fields[k].lambda;
            params << ',' << tt << ',' << tl << ',' << (r.params.taus[k] - tt) / tt << ','
                   << (tl != 0.0 ? (r.params.lambdas[k] - tl) / tl : 0.0);
        }
        params << "\n";
    }
    std::ostringstream summary;
    summary << "samples " << d.images.size() << " failed " << d.manifest.failed() << "\n";
    summary << "tau_stage " << r.tau_stage.descent.trace.rows.size() - 1 << " iterations, "
            << r.tau_stage.descent.stop_reason << (r.tau_stage.descent.stalled ? ", stalled" : "") << ", objective "
            << fmt12(r.tau_stage.descent.value) << "\n";
    if (r.lambda_stage_run)
        summary << "lambda_stage " << r.lambda_stage.descent.trace.rows.size() - 1 << " iterations, "
                << r.lambda_stage.descent.stop_reason << (r.lambda_stage.descent.stalled ? ", stalled" : "")
                << ", objective " << fmt12(r.lambda_stage.descent.value) << "\n";
    else
        summary << "lambda_stage skipped\n";

    fs::create_directories(out);
    write_text(out / "params.csv", params.str());
    std::ostringstream t1, t2;
    write_trace_csv(t1, r.tau_stage);
    write_text(out / "trace_tau.csv", t1.str());
    if (r.lambda_stage_run) {
        write_trace_csv(t2, r.lambda_stage);
        write_text(out / "trace_lambda.csv", t2.str());
    }
    write_text(out / "summary.txt", summary.str());
    std::cout << params.str() << summary.str();
    return exit_ok;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& measure, int bins,
                const std::string& range) {
    const Image A = read_image(a), B = read_image(b);
    require_same_shape(A, B);
    HistogramConfig h;
    h.bins = bins;
    h.range = range == "per-image" ? HistogramConfig::Range::PerImage : HistogramConfig::Range::Fixed;
    h.validate();
    double v = 0.0;
    if (measure == "l2") v = l2_distance(A, B);
    else if (measure == "mi") v = mutual_information(A, B, h);
    else v = normalized_mutual_information(A, B, h);
    std::cout << fmt12(v) << "\n";
    return exit_ok;
}

int cmd_shoot(const Common& c, const std::string& i0, const std::vector<int>& record) {
    ExperimentConfig cfg = load(c);
    if (!i0.empty()) cfg.i0 = fs::absolute(i0).string();
    const Image I0 = cfg.load_i0();
    const FourierVelocity v0 = cfg.load_v0();
    const auto noise = make_noise_fields(cfg.grid, cfg.noise_params());
    for (int s : record)
        if (s < 0 || s > cfg.nsteps) throw std::invalid_argument("recorded step outside [0, nsteps]");
    const fs::path out = out_dir(c, &cfg);
    FlowOptions fo;
    fo.record_steps = record;
    const WienerPath w = noise_path(cfg.seed, cfg.nsteps, noise.size());
    const FlowResult r = integrate_flow(v0, noise, w, cfg.kernel, fo);
    fs::create_directories(out);
    save_image(warp_image(I0, r.psi), out / "warped", cfg.format);
    write_deformation(r.psi, out / "psi.dgf");
    write_deformation(r.phi, out / "phi.dgf");
    write_spectral(r.v, out / "v.sfv");
    for (const auto& snap : r.trajectory) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "warped_step%04d", snap.step);
        save_image(warp_image(I0, snap.psi), out / stem, cfg.format);
    }
    std::cout << "min_det " << fmt12(r.min_jacobian_det) << " foldovers " << r.foldovers << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic FLASH deformation models: simulation, moments and estimation"};
    app.require_subcommand(1);

    Common c;
    std::string i0, manifest, dataset, measure = "nmi", range = "fixed";
    std::vector<std::string> images, t0;
    std::vector<int> record;
    int bins = 32;

    auto* sim = app.add_subcommand("simulate", "simulate a dataset of warped images");
    add_common(sim, c, false);
    sim->add_option("--i0", i0, "template image (overrides the configuration)")->check(CLI::ExistingFile);
    sim->add_option("--manifest", manifest, "regenerate the dataset in this directory")->check(CLI::ExistingDirectory);

    auto* stats = app.add_subcommand("stats", "pixelwise sample mean and variance");
    add_common(stats, c, false);
    stats->add_option("--dataset", dataset, "dataset directory")->check(CLI::ExistingDirectory);
    stats->add_option("images", images, "image files")->check(CLI::ExistingFile);
    stats->add_option("--t0", t0, "time-zero images averaged into i0hat")->check(CLI::ExistingFile);

    auto* mom = app.add_subcommand("moments", "solve the moment equations");
    add_common(mom, c, true);
    mom->add_option("--i0", i0, "template image (overrides the configuration)")->check(CLI::ExistingFile);

    auto* est = app.add_subcommand("estimate", "estimate noise parameters from a dataset");
    add_common(est, c, false);
    est->add_option("--dataset", dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);

    auto* cmp = app.add_subcommand("compare", "similarity of two images");
    std::string a, b;
    cmp->add_option("a", a)->required()->check(CLI::ExistingFile);
    cmp->add_option("b", b)->required()->check(CLI::ExistingFile);
    cmp->add_option("--measure", measure)->check(CLI::IsMember({"l2", "mi", "nmi"}));
    cmp->add_option("--bins", bins)->check(CLI::Range(2, 4096));
    cmp->add_option("--range", range)->check(CLI::IsMember({"fixed", "per-image"}));

    auto* shoot = app.add_subcommand("shoot", "integrate one stochastic path");
    add_common(shoot, c, true);
    shoot->add_option("--i0", i0, "template image (overrides the configuration)")->check(CLI::ExistingFile);
    shoot->add_option("--record", record, "steps whose warped image is written")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        if (sim->parsed()) return cmd_simulate(c, i0, manifest);
        if (stats->parsed()) return cmd_stats(c, dataset, images, t0);
        if (mom->parsed()) return cmd_moments(c, i0);
        if (est->parsed()) return cmd_estimate(c, dataset);
        if (cmp->parsed()) return cmd_compare(a, b, measure, bins, range);
        if (shoot->parsed()) return cmd_shoot(c, i0, record);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const EstimationError& e) {
        std::cerr << "estimation failed: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    }
    return exit_validation;
}
