#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/fields.hpp"
#include "sflash/fourier.hpp"
#include "sflash/grid.hpp"

namespace sflash {

/// Parameters of one isotropic Gaussian noise kernel
/// sigma(x) = lambda * exp(-|x - mu|^2 / (2 tau^2)) * Id_2.
struct NoiseParams {
    double mu_x = 0.5;
    double mu_y = 0.5;
    double tau = 0.06;
    double lambda = 0.0;

    friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

/// Squared periodic (minimum image) distance on the unit square.
inline double periodic_dist2(double x, double y, double cx, double cy) {
    double dx = x - cx;
    double dy = y - cy;
    dx -= std::round(dx);
    dy -= std::round(dy);
    return dx * dx + dy * dy;
}

/// An isotropic Gaussian noise field sampled on one grid.
///
/// sigma_k = g_k Id_2 acts on a two-dimensional Wiener increment, so each field
/// contributes two vector fields (columns) g_k e_x and g_k e_y with independent
/// scalar drivers. The lattice samples of g_k are exact; `column(a)` holds the
/// band limit of g_k e_a back on the lattice with its Jacobian, as used by the
/// spectral operators.
class NoiseField {
public:
    NoiseField() = default;
    NoiseField(const GridSpec& g, const NoiseParams& p) : params_(p) {
        if (!(p.tau > 0.0)) throw std::invalid_argument("noise field needs tau > 0, got " + std::to_string(p.tau));
        if (!std::isfinite(p.lambda)) throw std::invalid_argument("noise amplitude must be finite");
        auto c = std::make_shared<Cache>();
        c->grid = g;
        c->profile.resize(g.pixels());
        const double inv = 1.0 / (2.0 * p.tau * p.tau);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double d2 = periodic_dist2(static_cast<double>(i) / g.nx, static_cast<double>(j) / g.ny,
                                                 p.mu_x, p.mu_y);
                c->profile[static_cast<std::size_t>(j) * g.nx + i] = p.lambda * std::exp(-d2 * inv);
            }
        for (int a = 0; a < 2; ++a) {
            SpatialVectorField f(g);
            f.plane(a) = c->profile;
            c->spectrum[a] = to_spectral(f, g);
            c->columns[a] = sample_with_jacobian(c->spectrum[a], g);
        }
        cache_ = std::move(c);
    }

    const NoiseParams& params() const { return params_; }
    const GridSpec& grid() const { return cache_->grid; }

    /// Scalar profile g_k at lattice points.
    const std::vector<double>& profile() const { return cache_->profile; }
    /// Band-limited spectrum of the column g_k e_a.
    const FourierVelocity& spectrum(int a) const { return cache_->spectrum[a]; }
    const SampledField& column(int a) const { return cache_->columns[a]; }

    /// Closed-form profile at an arbitrary domain point.
    double evaluate(double x, double y) const {
        return params_.lambda *
               std::exp(-periodic_dist2(x, y, params_.mu_x, params_.mu_y) / (2.0 * params_.tau * params_.tau));
    }

    /// Bilinear interpolation of the lattice profile.
    double interpolate(double x, double y) const {
        return bilinear_periodic(cache_->profile, cache_->grid.nx, cache_->grid.ny, x, y);
    }

private:
    struct Cache {
        GridSpec grid;
        std::vector<double> profile;
        std::array<FourierVelocity, 2> spectrum;
        std::array<SampledField, 2> columns;
    };

    NoiseParams params_;
    std::shared_ptr<const Cache> cache_;
};

inline std::vector<NoiseField> make_noise_fields(const GridSpec& g, const std::vector<NoiseParams>& ps) {
    std::vector<NoiseField> out;
    out.reserve(ps.size());
    for (const auto& p : ps) out.emplace_back(g, p);
    return out;
}

/// splitmix64 finalizer; derives independent stream seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Increments of scalar Wiener processes over nsteps equal steps of size dt.
/// A path for p isotropic noise fields carries 2 p processes, ordered
/// (field 0 x, field 0 y, field 1 x, ...).
class WienerPath {
public:
    WienerPath() = default;
    WienerPath(std::uint64_t seed, int nsteps, int processes, double dt)
        : seed_(seed), nsteps_(nsteps), p_(processes), dt_(dt) {
        if (nsteps < 1 || processes < 0 || !(dt > 0.0)) throw std::invalid_argument("invalid Wiener path shape");
        inc_.resize(static_cast<std::size_t>(nsteps) * processes);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double sd = std::sqrt(dt);
        for (auto& v : inc_) v = sd * normal(rng);
        if (inc_.size() >= 10000) {
            double s2 = 0.0;
            for (double v : inc_) s2 += v * v;
            const double var = s2 / static_cast<double>(inc_.size());
            if (std::abs(var / dt - 1.0) > 0.1)
                throw NumericalError("Wiener increments fail the variance sanity check");
        }
    }

    /// Path with given increments, laid out step-major as in operator().
    static WienerPath from_increments(std::vector<double> inc, int nsteps, int processes, double dt) {
        if (nsteps < 1 || processes < 0 || !(dt > 0.0) ||
            inc.size() != static_cast<std::size_t>(nsteps) * static_cast<std::size_t>(processes))
            throw std::invalid_argument("invalid Wiener path shape");
        WienerPath w;
        w.nsteps_ = nsteps;
        w.p_ = processes;
        w.dt_ = dt;
        w.inc_ = std::move(inc);
        return w;
    }

    /// Sums groups of `factor` consecutive steps into a coarser path.
    WienerPath coarsen(int factor) const {
        if (factor < 1 || nsteps_ % factor != 0) throw std::invalid_argument("coarsening factor must divide the step count");
        std::vector<double> out(static_cast<std::size_t>(nsteps_ / factor) * p_, 0.0);
        for (int n = 0; n < nsteps_; ++n)
            for (int k = 0; k < p_; ++k) out[static_cast<std::size_t>(n / factor) * p_ + k] += (*this)(n, k);
        WienerPath w = from_increments(std::move(out), nsteps_ / factor, p_, dt_ * factor);
        w.seed_ = seed_;
        return w;
    }

    std::uint64_t seed() const { return seed_; }
    int steps() const { return nsteps_; }
    int processes() const { return p_; }
    double dt() const { return dt_; }
    /// Increment of process k over step n.
    double operator()(int n, int k) const { return inc_[static_cast<std::size_t>(n) * p_ + k]; }
    std::span<const double> step(int n) const {
        return {inc_.data() + static_cast<std::size_t>(n) * p_, static_cast<std::size_t>(p_)};
    }
    const std::vector<double>& increments() const { return inc_; }

private:
    std::uint64_t seed_ = 0;
    int nsteps_ = 0;
    int p_ = 0;
    double dt_ = 0.0;
    std::vector<double> inc_;
};

/// Wiener path for p isotropic noise fields on the unit time interval.
inline WienerPath noise_path(std::uint64_t seed, int nsteps, std::size_t fields) {
    return WienerPath(seed, nsteps, static_cast<int>(2 * fields), 1.0 / nsteps);
}

}  // namespace sflash
