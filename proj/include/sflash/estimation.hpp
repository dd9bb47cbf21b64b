#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/fields.hpp"
#include "sflash/moments.hpp"
#include "sflash/noise.hpp"
#include "sflash/parallel.hpp"
#include "sflash/similarity.hpp"

namespace sflash {

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParamVector {
    std::vector<double> taus;
    std::vector<double> lambdas;

    std::size_t size() const { return taus.size(); }
    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Sample moments of the observed images and the template they deform.
struct DataMoments {
    Image mu1;
    Image var1;
    int n = 0;
    Image I0hat;
};

/// Pixelwise mean and biased (1/n) variance.
inline void sample_moments(const std::vector<Image>& samples, Image& mean, Image& var) {
    if (samples.empty()) throw std::invalid_argument("need at least one sample");
    const Image& first = samples.front();
    mean = Image(first.nx(), first.ny());
    var = Image(first.nx(), first.ny());
    for (const Image& s : samples) {
        require_same_shape(first, s);
        for (std::size_t p = 0; p < s.size(); ++p) mean[p] += s[p];
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] *= inv;
    for (const Image& s : samples)
        for (std::size_t p = 0; p < s.size(); ++p) {
            const double d = s[p] - mean[p];
            var[p] += d * d;
        }
    for (std::size_t p = 0; p < var.size(); ++p) var[p] *= inv;
}

inline DataMoments data_moments(const std::vector<Image>& samples, Image I0hat) {
    DataMoments d;
    sample_moments(samples, d.mu1, d.var1);
    require_same_shape(d.mu1, I0hat);
    d.n = static_cast<int>(samples.size());
    d.I0hat = std::move(I0hat);
    return d;
}

/// Everything the moment model needs besides the estimated parameters.
struct ModelSetup {
    GridSpec grid;
    KernelParams kernel;
    FourierVelocity v0;
    std::vector<std::array<double, 2>> centers;
    int nsteps = 100;
    /// Each image is binned over its own range, so the similarity terms see
    /// the spatial pattern of a moment image rather than its scale.
    HistogramConfig hist{32, 0.0, 1.0, HistogramConfig::Range::PerImage};
    MomentIntegrator integrator = MomentIntegrator::Auto;

    std::vector<NoiseParams> noise_params(const ParamVector& x) const {
        if (x.taus.size() != centers.size() || x.lambdas.size() != centers.size())
            throw std::invalid_argument("parameter vector has " + std::to_string(x.taus.size()) + " taus and " +
                                        std::to_string(x.lambdas.size()) + " lambdas for " +
                                        std::to_string(centers.size()) + " fields");
        std::vector<NoiseParams> out;
        for (std::size_t k = 0; k < centers.size(); ++k)
            out.push_back({centers[k][0], centers[k][1], x.taus[k], x.lambdas[k]});
        return out;
    }
};

/// Moment images of the model at the given parameters.
inline MomentImages model_images(const ModelSetup& s, const ParamVector& x, const Image& I0hat) {
    const auto noise = make_noise_fields(s.grid, s.noise_params(x));
    MomentOptions opt;
    opt.integrator = s.integrator;
    const MomentResult r = evolve_moments(s.v0, noise, s.nsteps, s.kernel, opt);
    return moment_images(I0hat, r.state);
}

namespace detail {

template <class F>
double guarded(F&& f) {
    try {
        const double v = f();
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace detail

/// -[NMI(mean image, mu1) + NMI(variance image, var1)]; +inf when the moment
/// solve fails.
inline double objective_f(const ModelSetup& s, const DataMoments& d, const ParamVector& x) {
    return detail::guarded([&] {
        const MomentImages m = model_images(s, x, d.I0hat);
        return -(normalized_mutual_information(m.mean_image, d.mu1, s.hist) +
                 normalized_mutual_information(m.var_image, d.var1, s.hist));
    });
}

/// ||mean - mu1|| - MI(mean, mu1) + ||var - var1|| - MI(var, var1); +inf when
/// the moment solve fails.
inline double objective_g(const ModelSetup& s, const DataMoments& d, const ParamVector& x) {
    return detail::guarded([&] {
        const MomentImages m = model_images(s, x, d.I0hat);
        return l2_distance(m.mean_image, d.mu1) - mutual_information(m.mean_image, d.mu1, s.hist) +
               l2_distance(m.var_image, d.var1) - mutual_information(m.var_image, d.var1, s.hist);
    });
}

using Objective = std::function<double(const std::vector<double>&)>;

struct RandomInit {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> draws;
    std::vector<double> values;
};

/// Evaluates `trials` uniform draws from the box [lo, hi] and keeps the best.
inline RandomInit random_init(const Objective& obj, const std::vector<double>& lo, const std::vector<double>& hi,
                              int trials, std::uint64_t seed, int threads = 1) {
    if (trials < 1) throw std::invalid_argument("random initialisation needs at least one trial");
    if (lo.size() != hi.size()) throw std::invalid_argument("bounds differ in length");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (!(hi[i] >= lo[i])) throw std::invalid_argument("empty search interval");
    RandomInit r;
    std::mt19937_64 rng(seed);
    for (int t = 0; t < trials; ++t) {
        std::vector<double> x(lo.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
        r.draws.push_back(std::move(x));
    }
    r.values.assign(r.draws.size(), 0.0);
    parallel_for(r.draws.size(), threads, [&](std::size_t t) { r.values[t] = obj(r.draws[t]); });
    for (std::size_t t = 0; t < r.draws.size(); ++t)
        if (r.values[t] < r.value) {
            r.value = r.values[t];
            r.x = r.draws[t];
        }
    if (!std::isfinite(r.value)) throw EstimationError("every random initialisation failed");
    return r;
}

/// Coordinate in which a parameter is optimised.
enum class Scale { Linear, Log };

struct DescentOptions {
    /// Relative central-difference step per optimisation coordinate.
    double fd_step = 1e-2;
    double armijo = 1e-4;
    int max_halvings = 20;
    double grad_tol = 1e-4;
    double rel_tol = 1e-6;
    int max_iter = 200;
    /// Length of the first trial step in optimisation coordinates.
    double initial_step = 0.5;
    /// Lower bound applied to Linear coordinates.
    double linear_floor = 0.0;
    int threads = 1;
};

struct TraceRow {
    int iteration = 0;
    std::vector<double> x;
    double objective = 0.0;
    double step = 0.0;
    double gradnorm = 0.0;
};

struct OptTrace {
    std::vector<TraceRow> rows;
};

struct DescentResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    OptTrace trace;
    bool stalled = false;
    std::string stop_reason;
};

/// Gradient descent with central finite-difference gradients and Armijo
/// backtracking. Log coordinates are optimised as log x.
inline DescentResult gradient_descent(const Objective& obj, const std::vector<double>& x0,
                                      const std::vector<Scale>& scales, const DescentOptions& opt = {}) {
    const std::size_t n = x0.size();
    if (scales.size() != n) throw std::invalid_argument("one scale per coordinate required");
    for (std::size_t i = 0; i < n; ++i)
        if (scales[i] == Scale::Log && !(x0[i] > 0.0))
            throw std::invalid_argument("log-scaled coordinate must start positive");

    auto to_x = [&](const std::vector<double>& z) {
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i)
            x[i] = scales[i] == Scale::Log ? std::exp(z[i]) : std::max(z[i], opt.linear_floor);
        return x;
    };
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = scales[i] == Scale::Log ? std::log(x0[i]) : x0[i];

    DescentResult res;
    double f = obj(to_x(z));
    if (!std::isfinite(f)) throw EstimationError("objective is not finite at the starting point");
    res.trace.rows.push_back({0, to_x(z), f, 0.0, 0.0});

    std::vector<double> probes(2 * n);
    double alpha0 = -1.0;
    for (int it = 1;; ++it) {
        // Central differences, all probes evaluated independently.
        std::vector<double> h(n);
        for (std::size_t i = 0; i < n; ++i) h[i] = opt.fd_step * std::max(std::abs(z[i]), 0.1);
        parallel_for(2 * n, opt.threads, [&](std::size_t q) {
            std::vector<double> zq = z;
            const std::size_t i = q / 2;
            zq[i] += q % 2 == 0 ? h[i] : -h[i];
            probes[q] = obj(to_x(zq));
        });
        std::vector<double> g(n, 0.0);
        bool blind = false;
        for (std::size_t i = 0; i < n; ++i) {
            const double fp = probes[2 * i], fm = probes[2 * i + 1];
            if (std::isfinite(fp) && std::isfinite(fm)) g[i] = (fp - fm) / (2.0 * h[i]);
            else if (std::isfinite(fp)) g[i] = (fp - f) / h[i];
            else if (std::isfinite(fm)) g[i] = (f - fm) / h[i];
            else blind = true;
        }
        if (blind) {
            res.stalled = true;
            res.stop_reason = "objective not finite on both sides of the current point";
            break;
        }
        double gn = 0.0;
        for (double v : g) gn += v * v;
        gn = std::sqrt(gn);
        res.trace.rows.back().gradnorm = gn;
        if (gn < opt.grad_tol) {
            res.stop_reason = "gradient norm below tolerance";
            break;
        }

        double alpha = alpha0 > 0.0 ? 2.0 * alpha0 : opt.initial_step / gn;
        bool accepted = false;
        std::vector<double> zn(n);
        double fn = f;
        for (int k = 0; k <= opt.max_halvings; ++k, alpha *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) {
                zn[i] = z[i] - alpha * g[i];
                if (scales[i] == Scale::Linear) zn[i] = std::max(zn[i], opt.linear_floor);
            }
            fn = obj(to_x(zn));
            double decrease = 0.0;
            for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (z[i] - zn[i]);
            if (std::isfinite(fn) && fn <= f - opt.armijo * decrease && fn <= f) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.stalled = true;
            res.stop_reason = it == 1 ? "no admissible step at the starting point" : "line search failed";
            break;
        }
        alpha0 = alpha;
        double step = 0.0;
        for (std::size_t i = 0; i < n; ++i) step += (zn[i] - z[i]) * (zn[i] - z[i]);
        const double change = std::abs(f - fn);
        const double scale = std::max(std::abs(f), 1e-12);
        z = zn;
        f = fn;
        res.trace.rows.push_back({it, to_x(z), f, std::sqrt(step), 0.0});
        if (change <= opt.rel_tol * scale) {
            res.stop_reason = "relative objective change below tolerance";
            break;
        }
        if (it >= opt.max_iter) {
            res.stop_reason = "iteration limit";
            break;
        }
    }
    res.x = to_x(z);
    res.value = f;
    return res;
}

struct SearchBounds {
    double tau_lo = 0.02;
    double tau_hi = 0.2;
    double lambda_lo = 0.1;
    double lambda_hi = 5.0;
};

struct EstimateOptions {
    SearchBounds bounds;
    int trials = 40;
    std::uint64_t seed = 0;
    /// Amplitudes held during the first stage; empty means the midpoint of the
    /// amplitude bounds for every field.
    std::vector<double> lambda_init;
    bool skip_lambda_stage = false;
    DescentOptions descent;
    /// Fields whose objective curvature in log lambda falls below this fraction
    /// of the largest are flagged as weakly identified.
    double low_information_ratio = 0.1;
    int threads = 1;
};

struct StageResult {
    RandomInit init;
    DescentResult descent;
    /// Trace rows expressed as full parameter vectors.
    std::vector<ParamVector> params;
};

struct EstimateResult {
    ParamVector params;
    StageResult tau_stage;
    StageResult lambda_stage;
    bool lambda_stage_run = false;
    /// d^2 g / d(log lambda_k)^2 at the estimate.
    std::vector<double> curvature;
    std::vector<bool> low_information;
};

/// Two-stage moment matching: taus under objective_f with amplitudes held,
/// then amplitudes under objective_g with taus frozen.
inline EstimateResult estimate(const ModelSetup& s, const DataMoments& d, const EstimateOptions& opt = {}) {
    const std::size_t p = s.centers.size();
    if (p == 0) throw std::invalid_argument("no noise fields to estimate");
    if (d.n < 2) throw std::invalid_argument("estimation needs at least 2 samples");
    require_same_shape(d.mu1, d.var1);
    if (!d.mu1.matches(s.grid)) throw std::invalid_argument("data images do not match the model grid");
    DescentOptions dopt = opt.descent;
    dopt.threads = opt.threads;

    EstimateResult res;
    res.params.lambdas = opt.lambda_init.empty()
                             ? std::vector<double>(p, 0.5 * (opt.bounds.lambda_lo + opt.bounds.lambda_hi))
                             : opt.lambda_init;
    if (res.params.lambdas.size() != p) throw std::invalid_argument("lambda_init has the wrong length");

    try {
        const Objective f = [&](const std::vector<double>& taus) {
            return objective_f(s, d, ParamVector{taus, res.params.lambdas});
        };
        res.tau_stage.init = random_init(f, std::vector<double>(p, opt.bounds.tau_lo),
                                         std::vector<double>(p, opt.bounds.tau_hi), opt.trials, opt.seed, opt.threads);
        res.tau_stage.descent = gradient_descent(f, res.tau_stage.init.x, std::vector<Scale>(p, Scale::Log), dopt);
    } catch (const std::exception& e) {
        throw EstimationError(std::string("tau stage: ") + e.what());
    }
    res.params.taus = res.tau_stage.descent.x;
    for (const auto& row : res.tau_stage.descent.trace.rows) res.tau_stage.params.push_back({row.x, res.params.lambdas});

    if (opt.skip_lambda_stage) return res;
    res.lambda_stage_run = true;
    const Objective g = [&](const std::vector<double>& lambdas) {
        return objective_g(s, d, ParamVector{res.params.taus, lambdas});
    };
    try {
        res.lambda_stage.init = random_init(g, std::vector<double>(p, opt.bounds.lambda_lo),
                                            std::vector<double>(p, opt.bounds.lambda_hi), opt.trials,
                                            mix_seed(opt.seed, 1), opt.threads);
        res.lambda_stage.descent =
            gradient_descent(g, res.lambda_stage.init.x, std::vector<Scale>(p, Scale::Linear), dopt);
    } catch (const std::exception& e) {
        throw EstimationError(std::string("lambda stage: ") + e.what());
    }
    res.params.lambdas = res.lambda_stage.descent.x;
    for (const auto& row : res.lambda_stage.descent.trace.rows) res.lambda_stage.params.push_back({res.params.taus, row.x});

    // Identifiability of each amplitude from the curvature of g along log lambda_k.
    const double g0 = res.lambda_stage.descent.value;
    const double h = 0.1;
    std::vector<double> probes(2 * p);
    parallel_for(2 * p, opt.threads, [&](std::size_t q) {
        std::vector<double> l = res.params.lambdas;
        const std::size_t k = q / 2;
        l[k] = std::max(l[k], 1e-6) * std::exp(q % 2 == 0 ? h : -h);
        probes[q] = g(l);
    });
    res.curvature.assign(p, 0.0);
    double top = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        const double c = (probes[2 * k] - 2.0 * g0 + probes[2 * k + 1]) / (h * h);
        res.curvature[k] = std::isfinite(c) ? c : 0.0;
        top = std::max(top, res.curvature[k]);
    }
    res.low_information.assign(p, false);
    for (std::size_t k = 0; k < p; ++k)
        res.low_information[k] = !(res.curvature[k] > opt.low_information_ratio * top);
    return res;
}

/// CSV rows: iteration, tau_1..tau_p, lambda_1..lambda_p, objective, step, gradnorm.
inline void write_trace_csv(std::ostream& os, const StageResult& stage) {
    const std::size_t p = stage.params.empty() ? 0 : stage.params.front().size();
    os << "iteration";
    for (std::size_t k = 1; k <= p; ++k) os << ",tau_" << k;
    for (std::size_t k = 1; k <= p; ++k) os << ",lambda_" << k;
    os << ",objective,step,gradnorm\n";
    const auto& rows = stage.descent.trace.rows;
    const auto old = os.precision(17);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        os << rows[r].iteration;
        for (double t : stage.params[r].taus) os << ',' << t;
        for (double l : stage.params[r].lambdas) os << ',' << l;
        os << ',' << rows[r].objective << ',' << rows[r].step << ',' << rows[r].gradnorm << '\n';
    }
    os.precision(old);
}

}  // namespace sflash
