#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/epdiff.hpp"
#include "sflash/fields.hpp"
#include "sflash/flow.hpp"
#include "sflash/fourier.hpp"
#include "sflash/noise.hpp"

namespace sflash {

struct VarianceTag {};

/// Per-pixel, per-component variances <(psi^c - <psi^c>)^2>.
using VarianceField = PlanarField<VarianceTag>;

/// Transition moments of the inverse flow and the velocity under the
/// independence closure.
struct MomentState {
    double t = 0.0;
    DeformationGrid mean_psi;
    VarianceField var_psi;
    FourierVelocity mean_v;

    static MomentState initial(const FourierVelocity& v0) {
        const GridSpec& g = v0.grid();
        return {0.0, identity_map(g), VarianceField(g), v0};
    }
};

struct MomentImages {
    Image mean_image;
    Image var_image;
};

/// Right-hand side of the <v~> moment equation:
/// -K ad*_<v> <m> + 1/2 sum_k (D~ w_k) * w_k with w_k = K ad*_{sigma~_k} <m>.
inline FourierVelocity mean_v_rhs(const FourierVelocity& mean_v, std::span<const NoiseField> noise,
                                  const KernelParams& k) {
    const GridSpec& g = mean_v.grid();
    for (const auto& f : noise)
        if (!(f.grid() == g)) throw std::invalid_argument("noise field sampled on a different grid");
    FourierVelocity out(g);
    if (mean_v.is_zero()) return out;
    const SampledField m = sample_with_jacobian(apply_L(mean_v, k), g);
    out = apply_K(coadjoint(sample_with_jacobian(mean_v, g), m, g), k);
    out *= -1.0;
    for (const auto& f : noise)
        for (int a = 0; a < 2; ++a) {
            const FourierVelocity w = apply_K(coadjoint(f.column(a), m, g), k);
            out.axpy(0.5, jacobian_times_field(sample_with_jacobian(w, g), g));
        }
    return out;
}

namespace detail {

inline void check_lattice(const DeformationGrid& psi, std::span<const NoiseField> noise) {
    for (const auto& f : noise)
        if (f.grid().nx != psi.nx() || f.grid().ny != psi.ny())
            throw std::invalid_argument("noise field and deformation grid dimensions differ");
}

/// Allocation-free evaluation of the <psi> and Var psi rates on one lattice.
class PsiRates {
public:
    PsiRates(int nx, int ny, std::span<const NoiseField> noise) : nx_(nx), ny_(ny), noise_(noise) {
        const std::size_t n = static_cast<std::size_t>(nx) * ny;
        for (auto* v : {&dx_, &dy_, &jxx_, &jxy_, &jyx_, &jyy_, &cx_, &cy_}) v->assign(n, 0.0);
    }

    /// Writes d<psi>/dt into rate and d Var psi / dt into var_rate. v may be
    /// null for a zero mean velocity.
    void operator()(const DeformationGrid& psi, const SpatialVectorField* v, std::array<std::vector<double>, 2>& rate,
                    std::array<std::vector<double>, 2>& var_rate) {
        const std::size_t n = psi.size();
        jacobian(psi);
        for (int c = 0; c < 2; ++c) {
            rate[c].assign(n, 0.0);
            var_rate[c].assign(n, 0.0);
        }
        if (v)
            for (std::size_t p = 0; p < n; ++p) {
                rate[0][p] = -(jxx_[p] * v->xs()[p] + jxy_[p] * v->ys()[p]);
                rate[1][p] = -(jyx_[p] * v->xs()[p] + jyy_[p] * v->ys()[p]);
            }
        for (const auto& f : noise_) {
            const auto& s = f.profile();
            for (int a = 0; a < 2; ++a) {
                // c = D<psi> sigma_k e_a
                const std::vector<double>& ja = a == 0 ? jxx_ : jxy_;
                const std::vector<double>& jb = a == 0 ? jyx_ : jyy_;
                for (std::size_t p = 0; p < n; ++p) {
                    cx_[p] = ja[p] * s[p];
                    cy_[p] = jb[p] * s[p];
                    var_rate[0][p] += cx_[p] * cx_[p];
                    var_rate[1][p] += cy_[p] * cy_[p];
                }
                accumulate_transport(cx_, rate[0]);
                accumulate_transport(cy_, rate[1]);
            }
        }
    }

    /// Upper bound on the spectral radius of the linearised noise-induced
    /// diffusion 1/2 sum (c . grad)^2 at the given mean map.
    double stiffness(const DeformationGrid& psi) {
        jacobian(psi);
        double worst = 0.0;
        for (std::size_t p = 0; p < psi.size(); ++p) {
            // The linearisation mixes D<psi> sigma with sigma itself, so the
            // Jacobian enters with a floor of one.
            const double jn2 = jxx_[p] * jxx_[p] + jxy_[p] * jxy_[p] + jyx_[p] * jyx_[p] + jyy_[p] * jyy_[p];
            double g2 = 0.0;
            for (const auto& f : noise_) g2 += f.profile()[p] * f.profile()[p];
            worst = std::max(worst, 2.0 * g2 * std::max(jn2, 1.0));
        }
        return 0.5 * worst * (static_cast<double>(nx_) * nx_ + static_cast<double>(ny_) * ny_);
    }

private:
    void jacobian(const DeformationGrid& psi) {
        const std::size_t n = psi.size();
        for (int j = 0; j < ny_; ++j)
            for (int i = 0; i < nx_; ++i) {
                const std::size_t k = static_cast<std::size_t>(j) * nx_ + i;
                dx_[k] = psi.xs()[k] - static_cast<double>(i) / nx_;
                dy_[k] = psi.ys()[k] - static_cast<double>(j) / ny_;
            }
        central_dx(dx_, nx_, ny_, jxx_);
        central_dy(dx_, nx_, ny_, jxy_);
        central_dx(dy_, nx_, ny_, jyx_);
        central_dy(dy_, nx_, ny_, jyy_);
        for (std::size_t p = 0; p < n; ++p) {
            jxx_[p] += 1.0;
            jyy_[p] += 1.0;
        }
    }

    /// out += 1/2 D[f] . c for one component f of c = (cx_, cy_).
    void accumulate_transport(const std::vector<double>& f, std::vector<double>& out) const {
        const double sx = 0.5 * nx_, sy = 0.5 * ny_;
        for (int j = 0; j < ny_; ++j) {
            const std::size_t row = static_cast<std::size_t>(j) * nx_;
            const std::size_t up = static_cast<std::size_t>(j + 1 == ny_ ? 0 : j + 1) * nx_;
            const std::size_t dn = static_cast<std::size_t>(j == 0 ? ny_ - 1 : j - 1) * nx_;
            for (int i = 0; i < nx_; ++i) {
                const int ip = i + 1 == nx_ ? 0 : i + 1;
                const int im = i == 0 ? nx_ - 1 : i - 1;
                const std::size_t p = row + i;
                const double fx = (f[row + ip] - f[row + im]) * sx;
                const double fy = (f[up + i] - f[dn + i]) * sy;
                out[p] += 0.5 * (fx * cx_[p] + fy * cy_[p]);
            }
        }
    }

    int nx_, ny_;
    std::span<const NoiseField> noise_;
    std::vector<double> dx_, dy_, jxx_, jxy_, jyx_, jyy_, cx_, cy_;
};

}  // namespace detail

/// Rate of <psi>: -D<psi> <v> + 1/2 sum_k D[D<psi> sigma_k] D<psi> sigma_k, all
/// Jacobians by periodic central differences on the lattice.
inline SpatialVectorField mean_psi_rhs(const DeformationGrid& mean_psi, const SpatialVectorField& mean_v,
                                       std::span<const NoiseField> noise) {
    if (!mean_psi.same_shape(mean_v)) throw std::invalid_argument("velocity and deformation dimensions differ");
    detail::check_lattice(mean_psi, noise);
    detail::PsiRates rates(mean_psi.nx(), mean_psi.ny(), noise);
    std::array<std::vector<double>, 2> r, var;
    rates(mean_psi, &mean_v, r, var);
    SpatialVectorField out(mean_psi.nx(), mean_psi.ny());
    out.xs() = std::move(r[0]);
    out.ys() = std::move(r[1]);
    return out;
}

/// Rate of Var[psi^c]: sum_k (D<psi> sigma_k)_c^2, the diagonal of b b^T under
/// the closure.
inline VarianceField var_psi_rhs(const DeformationGrid& mean_psi, std::span<const NoiseField> noise) {
    detail::check_lattice(mean_psi, noise);
    detail::PsiRates rates(mean_psi.nx(), mean_psi.ny(), noise);
    std::array<std::vector<double>, 2> r, var;
    rates(mean_psi, nullptr, r, var);
    VarianceField out(mean_psi.nx(), mean_psi.ny());
    out.xs() = std::move(var[0]);
    out.ys() = std::move(var[1]);
    return out;
}

/// Time integrator for the moment system.
enum class MomentIntegrator {
    /// RK4 while the step is inside its stability interval, otherwise one
    /// second-order Runge-Kutta-Chebyshev step with enough stages. A solve that
    /// diverges this way is repeated with RK4.
    Auto,
    /// RK4 throughout, each step split into enough substeps for stability.
    RK4,
};

struct MomentOptions {
    /// Steps after which the state is kept (0 keeps the initial state).
    std::vector<int> record_steps;
    MomentIntegrator integrator = MomentIntegrator::Auto;
    /// Most RK4 substeps per step when Auto falls back to RK4; beyond it the
    /// solve fails with NumericalError instead of running for minutes.
    int fallback_substep_limit = 128;
};

struct MomentResult {
    MomentState state;
    std::vector<MomentState> trajectory;
    /// Right-hand-side evaluations spent.
    long evaluations = 0;
};

/// Length of the RK4 stability interval on the negative real axis.
inline constexpr double rk4_real_stability = 2.78;

namespace detail {

/// Flattened moment state (or rate): <v~> plus [<psi>x, <psi>y, Var x, Var y].
struct MomentVec {
    FourierVelocity v;
    std::vector<double> y;

    MomentVec& axpy(double a, const MomentVec& o) {
        v.axpy(a, o.v);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * o.y[i];
        return *this;
    }
    MomentVec& scale(double a) {
        v *= a;
        for (auto& e : y) e *= a;
        return *this;
    }
};

/// Chebyshev values T_j, T_j', T_j'' at w for j = 0..s.
struct Chebyshev {
    std::vector<double> t, d1, d2;
    Chebyshev(int s, double w) : t(s + 1), d1(s + 1), d2(s + 1) {
        t[0] = 1.0;
        d1[0] = d2[0] = 0.0;
        if (s >= 1) {
            t[1] = w;
            d1[1] = 1.0;
            d2[1] = 0.0;
        }
        for (int j = 2; j <= s; ++j) {
            t[j] = 2.0 * w * t[j - 1] - t[j - 2];
            d1[j] = 2.0 * t[j - 1] + 2.0 * w * d1[j - 1] - d1[j - 2];
            d2[j] = 4.0 * d1[j - 1] + 2.0 * w * d2[j - 1] - d2[j - 2];
        }
    }
};

/// Damping of the RKC2 scheme. Strong damping widens the stability region
/// around the real axis, which the transport terms of the moment system need.
inline constexpr double rkc_damping = 5.0;

/// Fewest RKC2 stages whose real stability interval covers h rho.
inline int rkc_stages(double h_rho) {
    for (int s = 2;; ++s) {
        const double w0 = 1.0 + rkc_damping / (static_cast<double>(s) * s);
        const Chebyshev ch(s, w0);
        if ((w0 + 1.0) * ch.d2[s] / ch.d1[s] >= h_rho) return s;
    }
}

/// One damped RKC2 step of y' = F(y).
template <class Rate>
MomentVec rkc2_step(const MomentVec& y0, const MomentVec& f0, double h, int s, Rate&& rate) {
    const double w0 = 1.0 + rkc_damping / (static_cast<double>(s) * s);
    const Chebyshev ch(s, w0);
    const double w1 = ch.d1[s] / ch.d2[s];
    std::vector<double> b(s + 1);
    for (int j = 2; j <= s; ++j) b[j] = ch.d2[j] / (ch.d1[j] * ch.d1[j]);
    b[0] = b[1] = b[2];

    MomentVec prev2 = y0;
    MomentVec prev = y0;
    prev.axpy(b[1] * w1 * h, f0);
    for (int j = 2; j <= s; ++j) {
        const double mu = 2.0 * b[j] * w0 / b[j - 1];
        const double nu = -b[j] / b[j - 2];
        const double mut = 2.0 * b[j] * w1 / b[j - 1];
        const double gt = -(1.0 - b[j - 1] * ch.t[j - 1]) * mut;
        const MomentVec fj = rate(prev);
        MomentVec next = y0;
        next.scale(1.0 - mu - nu).axpy(mu, prev).axpy(nu, prev2).axpy(mut * h, fj).axpy(gt * h, f0);
        prev2 = std::move(prev);
        prev = std::move(next);
    }
    return prev;
}

}  // namespace detail

/// Co-integration of (<v~>, <psi>, Var psi) over t in [0, 1] in nsteps steps.
/// The spatial <v> is refreshed from <v~> at every stage; the variance is
/// clamped at zero after every step. The noise-induced drift acts as a
/// diffusion with coefficient of order lambda^2, so the step is bounded by its
/// spectral radius: Auto switches to RKC2 and RK4 substeps when plain RK4 would
/// be unstable. Without noise both integrators are plain RK4 with nsteps steps.
inline MomentResult evolve_moments(const FourierVelocity& v0, std::span<const NoiseField> noise, int nsteps,
                                   const KernelParams& kernel, const MomentOptions& opt = {}) {
    if (nsteps < 1) throw std::invalid_argument("need at least one time step");
    const GridSpec& g = v0.grid();
    for (const auto& f : noise)
        if (!(f.grid() == g)) throw std::invalid_argument("noise field sampled on a different grid");
    const double dt = 1.0 / nsteps;
    const std::size_t n = g.pixels();
    detail::PsiRates psi_rates(g.nx, g.ny, noise);
    MomentResult res;

    DeformationGrid psi(g.nx, g.ny);
    std::array<std::vector<double>, 2> rp, rv;
    auto rate = [&](const detail::MomentVec& y) {
        ++res.evaluations;
        detail::MomentVec r;
        r.v = mean_v_rhs(y.v, noise, kernel);
        std::copy(y.y.begin(), y.y.begin() + n, psi.xs().begin());
        std::copy(y.y.begin() + n, y.y.begin() + 2 * n, psi.ys().begin());
        if (y.v.is_zero()) {
            psi_rates(psi, nullptr, rp, rv);
        } else {
            const SpatialVectorField vs = to_spatial(y.v, g);
            psi_rates(psi, &vs, rp, rv);
        }
        r.y.resize(4 * n);
        std::copy(rp[0].begin(), rp[0].end(), r.y.begin());
        std::copy(rp[1].begin(), rp[1].end(), r.y.begin() + n);
        std::copy(rv[0].begin(), rv[0].end(), r.y.begin() + 2 * n);
        std::copy(rv[1].begin(), rv[1].end(), r.y.begin() + 3 * n);
        return r;
    };

    auto rk4 = [&](const detail::MomentVec& y, double h) {
        const detail::MomentVec k1 = rate(y);
        const detail::MomentVec k2 = rate(detail::MomentVec(y).axpy(0.5 * h, k1));
        const detail::MomentVec k3 = rate(detail::MomentVec(y).axpy(0.5 * h, k2));
        const detail::MomentVec k4 = rate(detail::MomentVec(y).axpy(h, k3));
        detail::MomentVec out = y;
        out.axpy(h / 6.0, k1).axpy(h / 3.0, k2).axpy(h / 3.0, k3).axpy(h / 6.0, k4);
        return out;
    };

    auto to_state = [&](const detail::MomentVec& y, double t) {
        MomentState s;
        s.t = t;
        s.mean_v = y.v;
        s.mean_psi = DeformationGrid(g.nx, g.ny);
        s.var_psi = VarianceField(g.nx, g.ny);
        std::copy(y.y.begin(), y.y.begin() + n, s.mean_psi.xs().begin());
        std::copy(y.y.begin() + n, y.y.begin() + 2 * n, s.mean_psi.ys().begin());
        std::copy(y.y.begin() + 2 * n, y.y.begin() + 3 * n, s.var_psi.xs().begin());
        std::copy(y.y.begin() + 3 * n, y.y.end(), s.var_psi.ys().begin());
        return s;
    };

    detail::MomentVec y;
    auto record = [&](int step) {
        if (std::find(opt.record_steps.begin(), opt.record_steps.end(), step) != opt.record_steps.end())
            res.trajectory.push_back(to_state(y, step * dt));
    };

    auto integrate = [&](MomentIntegrator mode, int substep_limit) {
        const MomentState s0 = MomentState::initial(v0);
        y.v = s0.mean_v;
        y.y.assign(4 * n, 0.0);
        std::copy(s0.mean_psi.xs().begin(), s0.mean_psi.xs().end(), y.y.begin());
        std::copy(s0.mean_psi.ys().begin(), s0.mean_psi.ys().end(), y.y.begin() + n);
        res.trajectory.clear();
        record(0);
        for (int step = 0; step < nsteps; ++step) {
            double h_rho = 0.0;
            if (!noise.empty()) {
                std::copy(y.y.begin(), y.y.begin() + n, psi.xs().begin());
                std::copy(y.y.begin() + n, y.y.begin() + 2 * n, psi.ys().begin());
                h_rho = dt * psi_rates.stiffness(psi);
            }
            if (h_rho / rk4_real_stability > 1e7)
                throw NumericalError("moment equations too stiff at step " + std::to_string(step + 1));
            if (h_rho <= rk4_real_stability) {
                y = rk4(y, dt);
            } else if (mode == MomentIntegrator::Auto) {
                const detail::MomentVec f0 = rate(y);
                y = detail::rkc2_step(y, f0, dt, detail::rkc_stages(h_rho), rate);
            } else {
                const int sub = static_cast<int>(std::ceil(h_rho / rk4_real_stability));
                if (sub > substep_limit)
                    throw NumericalError("moment equations need " + std::to_string(sub) + " RK4 substeps at step " +
                                         std::to_string(step + 1));
                for (int q = 0; q < sub; ++q) y = rk4(y, dt / sub);
            }
            for (std::size_t i = 2 * n; i < 4 * n; ++i) y.y[i] = std::max(y.y[i], 0.0);
            bool ok = y.v.finite();
            for (double e : y.y) ok = ok && std::isfinite(e);
            if (!ok) throw NumericalError("moment equations diverged at step " + std::to_string(step + 1));
            record(step + 1);
        }
    };

    if (opt.integrator == MomentIntegrator::Auto) {
        // RKC2 is only stable near the real axis; strong transport can push the
        // spectrum off it, in which case the solve is redone with RK4 substeps.
        try {
            integrate(MomentIntegrator::Auto, 0);
        } catch (const NumericalError&) {
            integrate(MomentIntegrator::RK4, opt.fallback_substep_limit);
        }
    } else {
        integrate(MomentIntegrator::RK4, std::numeric_limits<int>::max());
    }
    res.state = to_state(y, 1.0);
    return res;
}

/// Central-difference gradient of an image in domain units.
inline std::array<std::vector<double>, 2> image_gradient(const Image& img) {
    std::array<std::vector<double>, 2> g;
    central_dx(img.pixels(), img.nx(), img.ny(), g[0]);
    central_dy(img.pixels(), img.nx(), img.ny(), g[1]);
    return g;
}

/// Mean image I0 o <psi> and first-order variance image
/// sum_c (d_c (I0 o <psi>))^2 Var[psi^c].
inline MomentImages moment_images(const Image& I0, const MomentState& s) {
    if (I0.nx() != s.mean_psi.nx() || I0.ny() != s.mean_psi.ny())
        throw std::invalid_argument("image and moment state dimensions differ");
    MomentImages out;
    out.mean_image = warp_image(I0, s.mean_psi);
    const auto grad = image_gradient(out.mean_image);
    out.var_image = Image(I0.nx(), I0.ny());
    for (std::size_t p = 0; p < I0.size(); ++p)
        out.var_image[p] = grad[0][p] * grad[0][p] * s.var_psi.xs()[p] + grad[1][p] * grad[1][p] * s.var_psi.ys()[p];
    return out;
}

}  // namespace sflash
