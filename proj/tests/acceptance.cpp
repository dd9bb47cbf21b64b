// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 4 10     run a subset
//
// Every criterion runs to completion and reports its measured values; the
// process exits 0 once the whole run finishes, so a FAIL line is a recorded
// result rather than a crash. Set SFLASH_THREADS to use more cores.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace sflash;
using sflash::testing::dense_coadjoint;
using sflash::testing::pearson;
using sflash::testing::random_band_field;
using sflash::testing::relative_error;
using sflash::testing::smooth_velocity;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kCoadjointRelTol = 1e-6;
constexpr int kCoadjointTrials = 50;
constexpr double kEnergyDriftTol = 1e-3;
constexpr double kDriftRatioLo = 8.0, kDriftRatioHi = 32.0;
constexpr double kInverseConsistencyFactor = 5.0;
constexpr int kMonteCarloPaths = 10000;
constexpr double kStandardErrors = 3.0;
constexpr double kWithinFraction = 0.99;
constexpr double kMcVarianceCorr = 0.9;
constexpr double kImageVarianceCorr = 0.85;
constexpr double kTauTol = 0.25;
constexpr double kLambdaTol = 0.35;
constexpr double kShootBudget = 3.0;
constexpr double kMomentBudget = 16.0;
constexpr double kBruteForceTol = 1e-12;
constexpr double kShuffleMi = 0.05;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[4096];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

int threads() { return resolve_threads(0); }

const fs::path work = fs::temp_directory_path() / "sflash_acceptance";

// --- shared datasets ---------------------------------------------------------

std::vector<Image> simulate_images(const GridSpec& g, const std::vector<NoiseParams>& params, int n,
                                   std::uint64_t seed) {
    const auto noise = make_noise_fields(g, params);
    const Image I0 = concentric_blobs(g.nx, g.ny);
    std::vector<Image> out(n);
    parallel_for(n, threads(), [&](std::size_t i) {
        out[i] = simulate_sample(FourierVelocity(g), noise, I0, 100, KernelParams{}, mix_seed(seed, i));
    });
    return out;
}

const std::vector<Image>& single_field_images() {
    static const std::vector<Image> imgs = simulate_images(GridSpec(64, 64, 16), {{0.5, 0.5, 0.06, 2.0}}, 200, 2024);
    return imgs;
}

std::vector<NoiseParams> lattice_params(double tau, double lambda) {
    std::vector<NoiseParams> out;
    for (const auto& c : field_lattice(3)) out.push_back({c[0], c[1], tau, lambda});
    return out;
}

bool monotone(const OptTrace& t) {
    for (std::size_t i = 1; i < t.rows.size(); ++i)
        if (t.rows[i].objective > t.rows[i - 1].objective) return false;
    return true;
}

// --- criteria ----------------------------------------------------------------

Outcome spectral_operator_oracle() {
    double worst = 0.0;
    int trials = 0;
    for (const GridSpec& g : {GridSpec(16, 16, 8), GridSpec(32, 32, 16), GridSpec(16, 16, 8, Derivative::CentralDifference),
                              GridSpec(32, 32, 16, Derivative::CentralDifference)})
        for (int t = 0; t < kCoadjointTrials; ++t) {
            const FourierVelocity v = random_band_field(g, 1000 + 2 * t, 1.0, 0.05);
            const FourierVelocity m = random_band_field(g, 1001 + 2 * t, 1.0, 0.05);
            worst = std::max(worst, relative_error(coadjoint(v, m, g), dense_coadjoint(v, m)));
            ++trials;
        }
    return {worst < kCoadjointRelTol, fmt("%d trials on 16^2 and 32^2, max relative error %.2e (tol %.0e)", trials,
                                          worst, kCoadjointRelTol)};
}

Outcome energy_conservation() {
    const GridSpec g(64, 64, 16);
    const KernelParams k;
    const FourierVelocity v0 = smooth_velocity(g, 0.2);
    const double e0 = hamiltonian(v0, k);
    auto drift = [&](int nsteps) {
        FourierVelocity v = v0;
        double worst = 0.0;
        for (int s = 0; s < nsteps; ++s) {
            v = epdiff_deterministic_step(v, 1.0 / nsteps, k);
            worst = std::max(worst, std::abs(hamiltonian(v, k) - e0) / e0);
        }
        return worst;
    };
    const double d100 = drift(100), d200 = drift(200);
    const double ratio = d100 / d200;
    const bool ok = d100 < kEnergyDriftTol && ratio >= kDriftRatioLo && ratio <= kDriftRatioHi;
    return {ok, fmt("drift %.3e at dt=1/100 (tol %.0e), %.3e at dt=1/200, ratio %.1f (band [%g, %g])", d100,
                    kEnergyDriftTol, d200, ratio, kDriftRatioLo, kDriftRatioHi)};
}

Outcome zero_noise_reduction() {
    const GridSpec g(64, 64, 16);
    const KernelParams k;
    const FourierVelocity v0 = smooth_velocity(g, 0.2);
    const auto noise = make_noise_fields(g, lattice_params(0.06, 0.0));
    FlowOptions opt;
    for (int s = 0; s <= 100; ++s) opt.record_steps.push_back(s);
    const FlowResult a = integrate_flow(v0, noise, noise_path(77, 100, noise.size()), k, opt);
    const FlowResult b = integrate_deterministic_flow(v0, 100, k, opt);
    int mismatched = 0;
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        const auto &x = a.trajectory[i], &y = b.trajectory[i];
        mismatched += !(x.v == y.v && x.phi == y.phi && x.psi == y.psi);
    }
    const bool ok = a.trajectory.size() == 101 && b.trajectory.size() == 101 && mismatched == 0;
    return {ok, fmt("%zu recorded steps, %d differ bitwise (v, phi, psi)", a.trajectory.size(), mismatched)};
}

Outcome inverse_consistency() {
    const GridSpec g(64, 64, 16);
    const int nsteps = 100;
    const FlowResult r = integrate_deterministic_flow(smooth_velocity(g, 0.2), nsteps, KernelParams{});
    const double err = inverse_consistency_error(r.phi, r.psi);
    const double tol = kInverseConsistencyFactor / nsteps;
    return {err <= tol, fmt("max |phi(psi(x)) - x| = %.3e (tol %.3g), min det %.3f", err, tol, r.min_jacobian_det)};
}

Outcome moments_vs_monte_carlo() {
    const GridSpec g(32, 32, 16);
    const KernelParams k;
    const auto noise = make_noise_fields(g, {{0.5, 0.5, 0.06, 0.5}});
    const std::size_t n = g.pixels();
    const FourierVelocity v0(g);

    // Fixed blocks keep the summation order independent of the thread count.
    constexpr int blocks = 16;
    struct Sums {
        std::vector<double> s1, s2;
        double v1 = 0.0, v2 = 0.0;
    };
    std::vector<Sums> part(blocks);
    parallel_for(blocks, threads(), [&](std::size_t b) {
        Sums& s = part[b];
        s.s1.assign(2 * n, 0.0);
        s.s2.assign(2 * n, 0.0);
        for (int i = static_cast<int>(b); i < kMonteCarloPaths; i += blocks) {
            const FlowResult r = integrate_flow(v0, noise, noise_path(mix_seed(505, i), 100, 1), k);
            for (std::size_t p = 0; p < n; ++p)
                for (int c = 0; c < 2; ++c) {
                    const double x = r.psi.plane(c)[p];
                    s.s1[c * n + p] += x;
                    s.s2[c * n + p] += x * x;
                }
            const double vn = r.v.norm();
            s.v1 += vn;
            s.v2 += vn * vn;
        }
    });
    std::vector<double> s1(2 * n, 0.0), s2(2 * n, 0.0);
    double v1 = 0.0;
    for (const Sums& s : part) {
        for (std::size_t q = 0; q < 2 * n; ++q) {
            s1[q] += s.s1[q];
            s2[q] += s.s2[q];
        }
        v1 += s.v1;
    }
    const double N = kMonteCarloPaths;
    const MomentResult m = evolve_moments(v0, noise, 100, k);

    int within = 0;
    double worst_z = 0.0;
    std::vector<double> mc_var(2 * n), model_var(2 * n);
    for (std::size_t q = 0; q < 2 * n; ++q) {
        const int c = static_cast<int>(q / n);
        const std::size_t p = q % n;
        const double mean = s1[q] / N;
        const double var = std::max(s2[q] / N - mean * mean, 0.0) * N / (N - 1);
        const double se = std::sqrt(var / N);
        const double diff = std::abs(m.state.mean_psi.plane(c)[p] - mean);
        within += diff <= kStandardErrors * se + 1e-12;
        if (se > 0.0) worst_z = std::max(worst_z, diff / se);
        mc_var[q] = var;
        model_var[q] = m.state.var_psi.plane(c)[p];
    }
    const double frac = within / (2.0 * n);
    const double corr = pearson(model_var, mc_var);
    // The velocity starts at zero and stays there along every path and in the
    // moment equation.
    const double mc_v = v1 / N, model_v = m.state.mean_v.norm();
    const bool v_ok = mc_v == 0.0 && model_v == 0.0;
    const bool ok = frac >= kWithinFraction && corr > kMcVarianceCorr && v_ok;
    return {ok, fmt("%d paths: <psi_1> within %g SE at %.1f%% of entries (need %.0f%%, worst %.1f SE); "
                    "Var corr %.3f (need > %.2g); |<v_1>| model %.1e, MC %.1e",
                    kMonteCarloPaths, kStandardErrors, 100 * frac, 100 * kWithinFraction, worst_z, corr,
                    kMcVarianceCorr, model_v, mc_v)};
}

Outcome image_moment_fidelity() {
    const GridSpec g(64, 64, 16);
    const auto& imgs = single_field_images();
    Image mean, var;
    sample_moments(imgs, mean, var);
    const auto noise = make_noise_fields(g, {{0.5, 0.5, 0.06, 2.0}});
    const MomentImages m = moment_images(concentric_blobs(64, 64), evolve_moments(FourierVelocity(g), noise, 100, KernelParams{}).state);
    const double corr = pearson(m.var_image.pixels(), var.pixels());
    return {corr > kImageVarianceCorr, fmt("200 samples: var_image vs sample variance corr %.3f (need > %.2g); "
                                           "peak model %.3g, data %.3g",
                                           corr, kImageVarianceCorr, m.var_image.max(), var.max())};
}

EstimateResult run_estimate(const GridSpec& g, const std::vector<NoiseParams>& truth, const std::vector<Image>& imgs,
                            const EstimateOptions& opt) {
    ModelSetup s;
    s.grid = g;
    s.v0 = FourierVelocity(g);
    for (const auto& p : truth) s.centers.push_back({p.mu_x, p.mu_y});
    const DataMoments d = data_moments(imgs, concentric_blobs(g.nx, g.ny));
    return estimate(s, d, opt);
}

Outcome single_field_recovery() {
    const auto t0 = Clock::now();
    EstimateOptions opt;
    opt.seed = 7;
    opt.threads = threads();
    const EstimateResult r = run_estimate(GridSpec(64, 64, 16), {{0.5, 0.5, 0.06, 2.0}}, single_field_images(), opt);
    const double et = r.params.taus[0] / 0.06 - 1.0, el = r.params.lambdas[0] / 2.0 - 1.0;
    const bool mono = monotone(r.tau_stage.descent.trace) && monotone(r.lambda_stage.descent.trace);
    const bool ok = std::abs(et) <= kTauTol && std::abs(el) <= kLambdaTol && mono;
    return {ok, fmt("tau %.4f (%+.1f%%, tol %.0f%%), lambda %.3f (%+.1f%%, tol %.0f%%), traces %s, %.0fs",
                    r.params.taus[0], 100 * et, 100 * kTauTol, r.params.lambdas[0], 100 * el, 100 * kLambdaTol,
                    mono ? "monotone" : "NOT monotone", seconds_since(t0))};
}

// Fields whose centre lies inside the template's outer edge.
bool interior(const NoiseParams& p) {
    const BlobSpec b;
    const double x = (p.mu_x - b.cx) / b.rx, y = (p.mu_y - b.cy) / b.ry;
    return x * x + y * y < 1.0;
}

Outcome multi_field_recovery() {
    const auto t0 = Clock::now();
    const GridSpec g(64, 64, 16);
    EstimateOptions opt;
    opt.seed = 7;
    opt.threads = threads();

    const auto truth = lattice_params(0.06, 2.0);
    const EstimateResult r = run_estimate(g, truth, simulate_images(g, truth, 200, 2025), opt);
    int tau_ok = 0, lam_ok = 0, n_interior = 0, flagged = 0, n_boundary = 0;
    std::ostringstream fields;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const bool in = interior(truth[k]);
        tau_ok += std::abs(r.params.taus[k] / 0.06 - 1.0) <= kTauTol;
        if (in) {
            ++n_interior;
            lam_ok += std::abs(r.params.lambdas[k] / 2.0 - 1.0) <= kLambdaTol;
        } else {
            ++n_boundary;
            flagged += r.low_information[k];
        }
        fields << fmt(" (%.3f,%.2f%s)", r.params.taus[k], r.params.lambdas[k],
                      r.low_information[k] ? ",low" : "");
    }

    const auto wide = lattice_params(0.1, 2.0);
    EstimateOptions wopt = opt;
    wopt.skip_lambda_stage = true;
    const EstimateResult w = run_estimate(g, wide, simulate_images(g, wide, 200, 2026), wopt);
    int wide_ok = 0;
    std::ostringstream wfields;
    for (std::size_t k = 0; k < wide.size(); ++k) {
        wide_ok += std::abs(w.params.taus[k] / 0.1 - 1.0) <= kTauTol;
        wfields << fmt(" %.3f", w.params.taus[k]);
    }

    const bool ok = tau_ok == 9 && lam_ok == n_interior && n_interior >= 4 && flagged == n_boundary && wide_ok == 9;
    return {ok, fmt("tau within %.0f%%: %d/9; interior lambda within %.0f%%: %d/%d; boundary flagged %d/%d; "
                    "overlap tau within %.0f%%: %d/9; %.0fs\n      (tau,lambda):%s\n      overlap tau:%s",
                    100 * kTauTol, tau_ok, 100 * kLambdaTol, lam_ok, n_interior, flagged, n_boundary,
                    100 * kTauTol, wide_ok, seconds_since(t0), fields.str().c_str(), wfields.str().c_str())};
}

Outcome timing_budgets() {
    const GridSpec g(128, 128, 16);
    const KernelParams k;
    const auto noise = make_noise_fields(g, {{0.5, 0.5, 0.06, 2.0}});
    const auto quiet = make_noise_fields(g, {{0.5, 0.5, 0.06, 0.0}});

    auto t = Clock::now();
    integrate_flow(FourierVelocity(g), noise, noise_path(1, 100, 1), k);
    const double shoot = seconds_since(t);
    t = Clock::now();
    integrate_flow(smooth_velocity(g, 0.2), quiet, noise_path(1, 100, 1), k);
    const double shoot_v = seconds_since(t);
    t = Clock::now();
    evolve_moments(FourierVelocity(g), noise, 100, k);
    const double mom = seconds_since(t);
    const bool ok = shoot <= kShootBudget && shoot_v <= kShootBudget && mom <= kMomentBudget;
    return {ok, fmt("128^2 shoot %.2fs (noise) / %.2fs (velocity, zero-amplitude field), budget %gs; "
                    "moment solve %.2fs, budget %gs",
                    shoot, shoot_v, kShootBudget, mom, kMomentBudget)};
}

// Double loop over bin pairs, recounting pixels for each pair.
double brute_force_mi(const Image& a, const Image& b, const HistogramConfig& h) {
    const auto ia = bin_indices(a, h), ib = bin_indices(b, h);
    const double n = static_cast<double>(ia.size());
    double mi = 0.0;
    for (int x = 0; x < h.bins; ++x)
        for (int y = 0; y < h.bins; ++y) {
            double pxy = 0, px = 0, py = 0;
            for (std::size_t p = 0; p < ia.size(); ++p) {
                pxy += (ia[p] == x && ib[p] == y);
                px += (ia[p] == x);
                py += (ib[p] == y);
            }
            if (pxy > 0) mi += pxy / n * std::log(pxy * n / (px * py));
        }
    return mi;
}

double brute_force_nmi(const Image& a, const Image& b, const HistogramConfig& h) {
    const auto ia = bin_indices(a, h), ib = bin_indices(b, h);
    const double n = static_cast<double>(ia.size());
    auto H = [&](auto&& count) {
        double e = 0.0;
        for (int x = 0; x < h.bins; ++x)
            for (int y = 0; y < h.bins; ++y) {
                const double c = count(x, y);
                if (c > 0) e -= c / n * std::log(c / n);
            }
        return e;
    };
    const double ha = H([&](int x, int y) { return y == 0 ? double(std::count(ia.begin(), ia.end(), x)) : 0.0; });
    const double hb = H([&](int x, int y) { return x == 0 ? double(std::count(ib.begin(), ib.end(), y)) : 0.0; });
    const double hab = H([&](int x, int y) {
        double c = 0;
        for (std::size_t p = 0; p < ia.size(); ++p) c += (ia[p] == x && ib[p] == y);
        return c;
    });
    return (ha + hb) / hab;
}

Outcome similarity_suite() {
    const Image blobs = concentric_blobs(64, 64);
    std::mt19937_64 rng(10);
    Image noisy = blobs, shuffled = blobs;
    std::normal_distribution<double> nd(0.0, 0.05);
    for (auto& v : noisy.pixels()) v += nd(rng);
    std::shuffle(shuffled.pixels().begin(), shuffled.pixels().end(), rng);

    const HistogramConfig fixed{32, 0.0, 1.0}, per{32, 0.0, 1.0, HistogramConfig::Range::PerImage};
    double self = 0.0, nmi2 = 0.0, brute = 0.0;
    for (const Image* a : std::initializer_list<const Image*>{&blobs, &noisy}) {
        self = std::max(self, std::abs(mutual_information(*a, *a, fixed) - marginal_entropy(*a, fixed)));
        nmi2 = std::max(nmi2, std::abs(normalized_mutual_information(*a, *a, per) - 2.0));
    }
    for (const HistogramConfig& h : {fixed, per, HistogramConfig{8, 0.0, 1.0}})
        for (const auto& [a, b] : std::initializer_list<std::pair<const Image*, const Image*>>{{&blobs, &noisy}, {&noisy, &shuffled}}) {
            brute = std::max(brute, std::abs(mutual_information(*a, *b, h) - brute_force_mi(*a, *b, h)));
            brute = std::max(brute, std::abs(normalized_mutual_information(*a, *b, h) - brute_force_nmi(*a, *b, h)));
        }
    const double shuffle_mi = mutual_information(blobs, shuffled, fixed);
    const bool ok = self < kBruteForceTol && nmi2 < kBruteForceTol && shuffle_mi < kShuffleMi && brute < kBruteForceTol;
    return {ok, fmt("|MI(A,A)-H(A)| %.1e, |NMI(A,A)-2| %.1e, shuffled MI %.4f (< %g), brute force diff %.1e (tol %.0e)",
                    self, nmi2, shuffle_mi, kShuffleMi, brute, kBruteForceTol)};
}

// --- CLI reproducibility -------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(SFLASH_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Lists files under dir that differ from the mirror tree (either side).
std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b) {
    std::set<std::string> names;
    for (const fs::path& root : {a, b})
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) names.insert(fs::relative(e.path(), root).string());
    std::vector<std::string> diff;
    for (const auto& n : names)
        if (!fs::exists(a / n) || !fs::exists(b / n) || read_file_bytes(a / n) != read_file_bytes(b / n))
            diff.push_back(n);
    return diff;
}

Outcome cli_reproducibility() {
    const fs::path root = work / "cli";
    fs::remove_all(root);
    fs::create_directories(root);
    write_file_bytes(root / "tiny.cfg",
                     "[grid]\nnx = 32\nny = 32\ntrunc = 16\n[model]\nnsteps = 20\n"
                     "[noise]\nfield = 0.5 0.5 0.08 0.8\n[samples]\ncount = 8\nseed = 3\n"
                     "[estimate]\ntrials = 2\nmax_iter = 2\nseed = 5\n");
    const std::string cfg = (root / "tiny.cfg").string();

    std::map<std::string, std::function<std::string(const fs::path&)>> verbs = {
        {"simulate", [&](const fs::path& o) { return "simulate --config " + cfg + " --out " + (o / "data").string(); }},
        {"simulate-manifest",
         [&](const fs::path& o) {
             return "simulate --manifest " + (root / "ref" / "data").string() + " --out " + (o / "data").string();
         }},
        {"stats",
         [&](const fs::path& o) {
             return "stats --dataset " + (root / "ref" / "data").string() + " --out " + o.string() + " --format pgm";
         }},
        {"moments", [&](const fs::path& o) { return "moments --config " + cfg + " --out " + o.string(); }},
        {"estimate",
         [&](const fs::path& o) {
             return "estimate --dataset " + (root / "ref" / "data").string() + " --out " + o.string();
         }},
        {"compare",
         [&](const fs::path&) {
             const std::string d = (root / "ref" / "data").string();
             return "compare " + d + "/sample_0000.raw " + d + "/sample_0001.raw --measure nmi --range per-image";
         }},
        {"shoot",
         [&](const fs::path& o) { return "shoot --config " + cfg + " --out " + o.string() + " --record 0,10,20"; }},
    };

    // Reference dataset for the verbs that read one.
    if (run_cli(verbs["simulate"](root / "ref"), root / "ref.log") != 0)
        return {false, "could not simulate the reference dataset"};

    std::vector<std::string> bad;
    for (const auto& [name, args] : verbs) {
        int codes[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path o = root / name / ("run" + std::to_string(rep));
            fs::create_directories(o);
            codes[rep] = run_cli(args(o), root / name / ("stdout" + std::to_string(rep) + ".txt"));
        }
        auto diff = tree_differences(root / name / "run0", root / name / "run1");
        const bool same_out = read_file_bytes(root / name / "stdout0.txt") == read_file_bytes(root / name / "stdout1.txt");
        if (codes[0] != 0 || codes[1] != 0) bad.push_back(name + " (exit " + std::to_string(codes[0]) + ")");
        else if (!diff.empty() || !same_out) bad.push_back(name + " (" + (same_out ? diff.front() : "stdout") + ")");
    }
    std::string list;
    for (const auto& b : bad) list += " " + b;
    return {bad.empty(), fmt("%zu verb invocations run twice; differing:%s", verbs.size(),
                             bad.empty() ? " none" : list.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
        {"spectral-operator oracle", spectral_operator_oracle},
        {"deterministic EPDiff conservation", energy_conservation},
        {"zero-noise reduction", zero_noise_reduction},
        {"inverse consistency", inverse_consistency},
        {"moment ODE vs Monte Carlo", moments_vs_monte_carlo},
        {"image-moment fidelity", image_moment_fidelity},
        {"single-field parameter recovery", single_field_recovery},
        {"multi-field parameter recovery", multi_field_recovery},
        {"timing budgets", timing_budgets},
        {"similarity suite", similarity_suite},
        {"CLI reproducibility", cli_reproducibility},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    fs::create_directories(work);
    int run = 0, passed = 0;
    std::ofstream report("acceptance_report.txt");
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        ++run;
        passed += o.pass;
        const std::string line = fmt("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                                     o.detail.c_str(), seconds_since(t0));
        std::fputs(line.c_str(), stdout);
        report << line << std::flush;
    }
    const std::string done = fmt("acceptance run complete: %d/%d criteria passed\n", passed, run);
    std::fputs(done.c_str(), stdout);
    report << done;
    return 0;
}
