#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "sflash/epdiff.hpp"
#include "sflash/fields.hpp"
#include "sflash/fourier.hpp"
#include "sflash/noise.hpp"

namespace sflash {

/// How the inverse map psi = phi^-1 is advanced.
enum class InverseScheme {
    /// psi_n = S_0 o S_1 o ... o S_{n-1}, where S_m(x) traces x back along the
    /// step-m velocity by a Heun predictor-corrector. Only the smooth step
    /// velocities are interpolated, never psi itself.
    Characteristics,
    /// Heun step of d psi = -D psi u with periodic central differences.
    CentralDifference,
};

struct FlowOptions {
    InverseScheme inverse_scheme = InverseScheme::Characteristics;
    /// Steps after which a snapshot is kept (0 keeps the initial state).
    std::vector<int> record_steps;
    /// Check det(D psi) of the final and recorded inverse maps.
    bool check_foldover = true;
};

struct FlowSnapshot {
    int step = 0;
    double t = 0.0;
    FourierVelocity v;
    DeformationGrid phi;
    DeformationGrid psi;
};

struct FlowResult {
    FourierVelocity v;
    DeformationGrid phi;
    DeformationGrid psi;
    std::vector<FlowSnapshot> trajectory;
    /// Checked inverse maps (final and recorded) with det(D psi) <= 0 somewhere.
    int foldovers = 0;
    double min_jacobian_det = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Lattice values of the step velocity u = v dt + sum_k sigma_k dW_k.
inline std::array<std::vector<double>, 2> lattice_step_velocity(const SampledField& v, bool v_zero,
                                                                std::span<const NoiseField> noise,
                                                                std::span<const double> dW, double dt,
                                                                std::size_t n) {
    std::array<std::vector<double>, 2> u{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    if (!v_zero)
        for (int c = 0; c < 2; ++c)
            for (std::size_t p = 0; p < n; ++p) u[c][p] = v.val[c][p] * dt;
    for (std::size_t k = 0; k < noise.size(); ++k) {
        const auto& prof = noise[k].profile();
        const double wx = dW[2 * k];
        const double wy = dW[2 * k + 1];
        for (std::size_t p = 0; p < n; ++p) {
            u[0][p] += prof[p] * wx;
            u[1][p] += prof[p] * wy;
        }
    }
    return u;
}

/// Step velocity at an off-lattice point by bilinear interpolation.
inline void step_velocity_at(const std::array<std::vector<double>, 2>& u, int nx, int ny, double x, double y,
                             double& ux, double& uy) {
    const BilinearCell c = locate_cell(nx, ny, x, y);
    ux = interpolate(u[0], c);
    uy = interpolate(u[1], c);
}

/// -D psi . u at each lattice point.
inline std::array<std::vector<double>, 2> transport_rate(const DeformationGrid& psi,
                                                         const std::array<std::vector<double>, 2>& u) {
    const MapJacobian J = map_jacobian(psi);
    const std::size_t n = psi.size();
    std::array<std::vector<double>, 2> r{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t p = 0; p < n; ++p) {
        r[0][p] = -(J.xx[p] * u[0][p] + J.xy[p] * u[1][p]);
        r[1][p] = -(J.yx[p] * u[0][p] + J.yy[p] * u[1][p]);
    }
    return r;
}

}  // namespace detail

/// Jointly integrates the velocity (stochastic EPDiff), the forward flow
/// d phi = v(phi) dt + sum sigma_k(phi) o dW^k and its inverse
/// d psi = -D psi v dt - sum D psi sigma_k o dW^k over t in [0, 1], all
/// driven by the same Wiener increments.
inline FlowResult integrate_flow(const FourierVelocity& v0, std::span<const NoiseField> noise, const WienerPath& path,
                                 const KernelParams& kernel, const FlowOptions& opt = {}) {
    const GridSpec& g = v0.grid();
    const int nsteps = path.steps();
    if (nsteps < 1) throw std::invalid_argument("need at least one time step");
    if (static_cast<std::size_t>(path.processes()) != 2 * noise.size())
        throw std::invalid_argument("Wiener path has " + std::to_string(path.processes()) + " processes for " +
                                    std::to_string(noise.size()) + " isotropic noise fields");
    for (const auto& f : noise)
        if (!(f.grid() == g)) throw std::invalid_argument("noise field sampled on a different grid");
    const double dt = path.dt();
    const int nx = g.nx, ny = g.ny;
    const std::size_t n = g.pixels();
    const bool characteristics = opt.inverse_scheme == InverseScheme::Characteristics;

    FlowResult res;
    res.v = v0;
    res.phi = identity_map(g);
    res.psi = identity_map(g);

    // Step velocities at the start and the predicted end of every step; the
    // second entry is empty when it equals the first.
    std::vector<std::array<std::vector<double>, 2>> u_start, u_end;

    auto check = [&](const DeformationGrid& psi) {
        if (!opt.check_foldover) return;
        const double d = min_jacobian_determinant(psi);
        res.min_jacobian_det = std::min(res.min_jacobian_det, d);
        if (d <= 0.0) ++res.foldovers;
    };
    auto compose = [&](int m) {
        DeformationGrid psi(nx, ny);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                double x = static_cast<double>(i) / nx, y = static_cast<double>(j) / ny;
                for (int q = m - 1; q >= 0; --q) {
                    const auto& a = u_start[q];
                    const auto& b = u_end[q].front().empty() ? a : u_end[q];
                    double bx, by, ax, ay;
                    detail::step_velocity_at(b, nx, ny, x, y, bx, by);
                    detail::step_velocity_at(a, nx, ny, x - bx, y - by, ax, ay);
                    x -= 0.5 * (bx + ax);
                    y -= 0.5 * (by + ay);
                }
                const std::size_t p = static_cast<std::size_t>(j) * nx + i;
                psi.xs()[p] = x;
                psi.ys()[p] = y;
            }
        return psi;
    };
    auto wanted = [&](int step) {
        return std::find(opt.record_steps.begin(), opt.record_steps.end(), step) != opt.record_steps.end();
    };
    auto record = [&](int step) {
        if (!wanted(step)) return;
        if (characteristics && step > 0 && step < nsteps) {
            DeformationGrid psi = compose(step);
            check(psi);
            res.trajectory.push_back({step, step * dt, res.v, res.phi, std::move(psi)});
        } else {
            res.trajectory.push_back({step, step * dt, res.v, res.phi, res.psi});
        }
    };
    record(0);

    for (int step = 0; step < nsteps; ++step) {
        const std::span<const double> dW = path.step(step);

        // Velocity: Heun on the stochastic EPDiff equation.
        const bool v_zero = res.v.is_zero();
        SampledField vs, vps;
        FourierVelocity v_next = res.v;
        if (!v_zero) {
            vs = sample_with_jacobian(res.v, g);
            const FourierVelocity a1 = epdiff_increment(res.v, vs, noise, dW, dt, kernel);
            const FourierVelocity vp = res.v + a1;
            vps = sample_with_jacobian(vp, g);
            const FourierVelocity a2 = epdiff_increment(vp, vps, noise, dW, dt, kernel);
            v_next.axpy(0.5, a1).axpy(0.5, a2);
            require_finite(v_next, "flow integration");
        }

        auto u0 = detail::lattice_step_velocity(vs, v_zero, noise, dW, dt, n);
        std::array<std::vector<double>, 2> u1;
        if (!v_zero) u1 = detail::lattice_step_velocity(vps, false, noise, dW, dt, n);
        const auto& u1r = v_zero ? u0 : u1;

        // Forward map: Heun on each trajectory.
        DeformationGrid phi_next(nx, ny);
        for (std::size_t p = 0; p < n; ++p) {
            const double x = res.phi.xs()[p], y = res.phi.ys()[p];
            double ax, ay, bx, by;
            detail::step_velocity_at(u0, nx, ny, x, y, ax, ay);
            detail::step_velocity_at(u1r, nx, ny, x + ax, y + ay, bx, by);
            phi_next.xs()[p] = x + 0.5 * (ax + bx);
            phi_next.ys()[p] = y + 0.5 * (ay + by);
        }
        if (!phi_next.finite()) throw NumericalError("non-finite deformation at step " + std::to_string(step + 1));

        if (!characteristics) {
            const auto r0 = detail::transport_rate(res.psi, u0);
            DeformationGrid psi_p = res.psi;
            for (std::size_t p = 0; p < n; ++p) {
                psi_p.xs()[p] += r0[0][p];
                psi_p.ys()[p] += r0[1][p];
            }
            const auto r1 = detail::transport_rate(psi_p, u1r);
            DeformationGrid psi_next(nx, ny);
            for (std::size_t p = 0; p < n; ++p) {
                psi_next.xs()[p] = res.psi.xs()[p] + 0.5 * (r0[0][p] + r1[0][p]);
                psi_next.ys()[p] = res.psi.ys()[p] + 0.5 * (r0[1][p] + r1[1][p]);
            }
            if (!psi_next.finite())
                throw NumericalError("non-finite deformation at step " + std::to_string(step + 1));
            res.psi = std::move(psi_next);
            if (step + 1 < nsteps && wanted(step + 1)) check(res.psi);
        } else {
            u_start.push_back(std::move(u0));
            u_end.push_back(std::move(u1));
        }

        res.v = std::move(v_next);
        res.phi = std::move(phi_next);
        record(step + 1);
    }

    if (characteristics) {
        res.psi = compose(nsteps);
        if (!res.psi.finite()) throw NumericalError("non-finite inverse deformation");
        if (wanted(nsteps)) res.trajectory.back().psi = res.psi;
    }
    check(res.psi);
    return res;
}

/// Deterministic flow: the same stepper with no noise fields.
inline FlowResult integrate_deterministic_flow(const FourierVelocity& v0, int nsteps, const KernelParams& kernel,
                                               const FlowOptions& opt = {}) {
    return integrate_flow(v0, {}, WienerPath(0, nsteps, 0, 1.0 / nsteps), kernel, opt);
}

/// max_x |phi(psi(x)) - x| over the lattice, phi sampled bilinearly.
inline double inverse_consistency_error(const DeformationGrid& phi, const DeformationGrid& psi) {
    if (!phi.same_shape(psi)) throw std::invalid_argument("map dimensions differ");
    std::vector<double> dx, dy;
    map_displacement(phi, dx, dy);
    double worst = 0.0;
    for (int j = 0; j < psi.ny(); ++j)
        for (int i = 0; i < psi.nx(); ++i) {
            const std::size_t p = static_cast<std::size_t>(j) * psi.nx() + i;
            double x, y;
            sample_map(phi, dx, dy, psi.xs()[p], psi.ys()[p], x, y);
            worst = std::max(worst, std::hypot(x - static_cast<double>(i) / psi.nx(), y - static_cast<double>(j) / psi.ny()));
        }
    return worst;
}

/// Image action I o psi: bilinear sample of I at psi(x_i, y_j), periodic wrap.
inline Image warp_image(const Image& img, const DeformationGrid& psi) {
    if (img.nx() != psi.nx() || img.ny() != psi.ny())
        throw std::invalid_argument("image and deformation dimensions differ");
    if (!psi.finite()) throw NumericalError("cannot warp by a non-finite deformation");
    Image out(img.nx(), img.ny());
    for (std::size_t p = 0; p < img.size(); ++p)
        out[p] = bilinear_periodic(img.pixels(), img.nx(), img.ny(), psi.xs()[p], psi.ys()[p]);
    return out;
}

}  // namespace sflash
