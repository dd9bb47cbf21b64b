#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "sflash/fourier.hpp"
#include "sflash/noise.hpp"

namespace sflash {

/// Right-hand side -K ad*_v (L v) of the deterministic EPDiff equation.
inline FourierVelocity epdiff_rhs(const FourierVelocity& v, const KernelParams& k) {
    const GridSpec& g = v.grid();
    FourierVelocity out = apply_K(coadjoint(v, apply_L(v, k), g), k);
    out *= -1.0;
    return out;
}

inline void require_finite(const FourierVelocity& v, const char* where) {
    if (!v.finite()) throw NumericalError(std::string("non-finite velocity in ") + where);
}

/// One classical RK4 step of dv/dt = -K ad*_v (L v).
inline FourierVelocity epdiff_deterministic_step(const FourierVelocity& v, double dt, const KernelParams& k) {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    const FourierVelocity k1 = epdiff_rhs(v, k);
    const FourierVelocity k2 = epdiff_rhs(FourierVelocity(v).axpy(0.5 * dt, k1), k);
    const FourierVelocity k3 = epdiff_rhs(FourierVelocity(v).axpy(0.5 * dt, k2), k);
    const FourierVelocity k4 = epdiff_rhs(FourierVelocity(v).axpy(dt, k3), k);
    FourierVelocity out = v;
    out.axpy(dt / 6.0, k1).axpy(dt / 3.0, k2).axpy(dt / 3.0, k3).axpy(dt / 6.0, k4);
    require_finite(out, "deterministic EPDiff step");
    return out;
}

namespace detail {

/// Combined drift-plus-diffusion velocity of one step sampled on the lattice:
/// u = v dt + sum_k sigma_k dW_k. With no noise fields this is exactly v dt.
inline SampledField step_velocity(const SampledField& v, std::span<const NoiseField> noise,
                                  std::span<const double> dW, double dt) {
    SampledField u = v;
    u.scale(dt);
    for (std::size_t k = 0; k < noise.size(); ++k) {
        u.axpy(dW[2 * k], noise[k].column(0));
        u.axpy(dW[2 * k + 1], noise[k].column(1));
    }
    return u;
}

}  // namespace detail

/// Stochastic velocity increment -K [ad*_v m dt + sum_k ad*_{sigma_k} m dW_k]
/// with m = L v, given v already sampled on the lattice. dW holds two
/// increments per noise field.
inline FourierVelocity epdiff_increment(const FourierVelocity& v, const SampledField& v_sampled,
                                        std::span<const NoiseField> noise, std::span<const double> dW, double dt,
                                        const KernelParams& k) {
    const GridSpec& g = v.grid();
    const SampledField m = sample_with_jacobian(apply_L(v, k), g);
    const SampledField u = detail::step_velocity(v_sampled, noise, dW, dt);
    FourierVelocity out = apply_K(coadjoint(u, m, g), k);
    out *= -1.0;
    return out;
}

/// One Heun (Stratonovich predictor-corrector) step of the stochastic EPDiff
/// equation. Noise fields with zero amplitude leave the step identical to the
/// noise-free Heun step.
inline FourierVelocity epdiff_stochastic_step(const FourierVelocity& v, std::span<const NoiseField> noise,
                                              std::span<const double> dW, double dt, const KernelParams& k) {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    if (dW.size() != 2 * noise.size())
        throw std::invalid_argument("need two Wiener increments per isotropic noise field");
    const GridSpec& g = v.grid();
    const FourierVelocity a1 = epdiff_increment(v, sample_with_jacobian(v, g), noise, dW, dt, k);
    const FourierVelocity vp = v + a1;
    const FourierVelocity a2 = epdiff_increment(vp, sample_with_jacobian(vp, g), noise, dW, dt, k);
    FourierVelocity out = v;
    out.axpy(0.5, a1).axpy(0.5, a2);
    require_finite(out, "stochastic EPDiff step");
    return out;
}

}  // namespace sflash
