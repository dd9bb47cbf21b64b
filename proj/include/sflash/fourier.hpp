#pragma once

#include <fftw3.h>

#include <array>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sflash/fields.hpp"
#include "sflash/grid.hpp"

namespace sflash {

using cplx = std::complex<double>;

/// Band-limited coefficients of a real 2D vector field.
///
/// Convention: f(x) = sum_k c(k) exp(2 pi i k . x), so the DC coefficient of a
/// constant field equals that constant. Coefficients are stored per component
/// as a trunc x trunc block indexed by signed frequency.
class FourierVelocity {
public:
    FourierVelocity() = default;
    explicit FourierVelocity(const GridSpec& g) : grid_(g), c_(2 * g.band_size(), cplx{0.0, 0.0}) {}

    const GridSpec& grid() const { return grid_; }

    bool in_band(int k1, int k2) const {
        const int km = grid_.kmax();
        return k1 >= -km && k1 <= km && k2 >= -km && k2 <= km;
    }

    std::size_t index(int comp, int k1, int k2) const {
        const int off = grid_.offset();
        return static_cast<std::size_t>(comp) * grid_.band_size() +
               static_cast<std::size_t>(k2 + off) * grid_.trunc + static_cast<std::size_t>(k1 + off);
    }

    cplx& at(int comp, int k1, int k2) { return c_[index(comp, k1, k2)]; }
    cplx at(int comp, int k1, int k2) const { return c_[index(comp, k1, k2)]; }

    std::span<cplx> component(int comp) { return {c_.data() + comp * grid_.band_size(), grid_.band_size()}; }
    std::span<const cplx> component(int comp) const {
        return {c_.data() + comp * grid_.band_size(), grid_.band_size()};
    }

    std::vector<cplx>& data() { return c_; }
    const std::vector<cplx>& data() const { return c_; }

    /// Visits every retained frequency pair (k1, k2).
    template <class F>
    void for_each_mode(F&& f) const {
        const int km = grid_.kmax();
        for (int k2 = -km; k2 <= km; ++k2)
            for (int k1 = -km; k1 <= km; ++k1) f(k1, k2);
    }

    /// Largest |c(-k) - conj(c(k))| over the band.
    double hermitian_defect() const {
        double worst = 0.0;
        for (int comp = 0; comp < 2; ++comp)
            for_each_mode([&](int k1, int k2) {
                worst = std::max(worst, std::abs(at(comp, -k1, -k2) - std::conj(at(comp, k1, k2))));
            });
        return worst;
    }

    double norm() const {
        double s = 0.0;
        for (const auto& v : c_) s += std::norm(v);
        return std::sqrt(s);
    }

    double max_abs() const {
        double s = 0.0;
        for (const auto& v : c_) s = std::max(s, std::abs(v));
        return s;
    }

    bool finite() const {
        for (const auto& v : c_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    bool is_zero() const {
        for (const auto& v : c_)
            if (v != cplx{0.0, 0.0}) return false;
        return true;
    }

    FourierVelocity& operator+=(const FourierVelocity& o) {
        check_same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    FourierVelocity& operator-=(const FourierVelocity& o) {
        check_same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    FourierVelocity& operator*=(double s) {
        for (auto& v : c_) v *= s;
        return *this;
    }
    /// this += s * o
    FourierVelocity& axpy(double s, const FourierVelocity& o) {
        check_same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += s * o.c_[i];
        return *this;
    }

    friend FourierVelocity operator+(FourierVelocity a, const FourierVelocity& b) { return a += b; }
    friend FourierVelocity operator-(FourierVelocity a, const FourierVelocity& b) { return a -= b; }
    friend FourierVelocity operator*(double s, FourierVelocity a) { return a *= s; }
    friend bool operator==(const FourierVelocity&, const FourierVelocity&) = default;

private:
    void check_same(const FourierVelocity& o) const {
        if (!(grid_ == o.grid_)) throw std::invalid_argument("spectral fields live on different grids");
    }

    GridSpec grid_;
    std::vector<cplx> c_;
};

namespace detail {

/// FFTW plans for one lattice size. Plan creation is serialized; execution
/// uses the new-array interface and is safe from any thread.
class FftPlans {
public:
    FftPlans(int nx, int ny) : nx_(nx), ny_(ny) {
        std::vector<double> real(static_cast<std::size_t>(nx) * ny);
        std::vector<cplx> half(static_cast<std::size_t>(ny) * (nx / 2 + 1));
        auto* h = reinterpret_cast<fftw_complex*>(half.data());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        forward_ = fftw_plan_dft_r2c_2d(ny, nx, real.data(), h, flags);
        inverse_ = fftw_plan_dft_c2r_2d(ny, nx, h, real.data(), flags);
        if (!forward_ || !inverse_) throw std::runtime_error("FFTW plan creation failed");
    }
    ~FftPlans() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
    }
    FftPlans(const FftPlans&) = delete;
    FftPlans& operator=(const FftPlans&) = delete;

    int half_width() const { return nx_ / 2 + 1; }

    void r2c(const double* in, cplx* out) const {
        fftw_execute_dft_r2c(forward_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
    }
    // c2r destroys its input.
    void c2r(cplx* in, double* out) const {
        fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(in), out);
    }

    static const FftPlans& get(int nx, int ny) {
        static std::mutex mu;
        static std::map<std::pair<int, int>, std::unique_ptr<FftPlans>> cache;
        std::lock_guard<std::mutex> lock(mu);
        auto& slot = cache[{nx, ny}];
        if (!slot) slot = std::make_unique<FftPlans>(nx, ny);
        return *slot;
    }

private:
    int nx_, ny_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

inline std::vector<cplx>& half_scratch(std::size_t n) {
    thread_local std::vector<cplx> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

/// Writes a band-limited scalar spectrum, multiplied by symbol(k1, k2), onto
/// the lattice.
template <class Symbol>
void band_to_plane(std::span<const cplx> band, const GridSpec& g, Symbol&& symbol, std::vector<double>& out) {
    const auto& plans = FftPlans::get(g.nx, g.ny);
    const int hw = plans.half_width();
    auto& half = half_scratch(static_cast<std::size_t>(g.ny) * hw);
    std::fill(half.begin(), half.begin() + static_cast<std::ptrdiff_t>(g.ny) * hw, cplx{0.0, 0.0});
    const int km = g.kmax();
    const int off = g.offset();
    for (int k2 = -km; k2 <= km; ++k2) {
        const std::size_t row = static_cast<std::size_t>(wrap_index(k2, g.ny)) * hw;
        const std::size_t brow = static_cast<std::size_t>(k2 + off) * g.trunc;
        for (int k1 = 0; k1 <= km; ++k1) half[row + k1] = band[brow + k1 + off] * symbol(k1, k2);
    }
    out.resize(g.pixels());
    plans.c2r(half.data(), out.data());
}

/// Forward transform of one lattice plane, truncated to the band and made
/// exactly Hermitian.
inline void plane_to_band(const std::vector<double>& in, const GridSpec& g, std::span<cplx> band) {
    const auto& plans = FftPlans::get(g.nx, g.ny);
    const int hw = plans.half_width();
    auto& half = half_scratch(static_cast<std::size_t>(g.ny) * hw);
    plans.r2c(in.data(), half.data());
    const double scale = 1.0 / static_cast<double>(g.pixels());
    const int km = g.kmax();
    const int off = g.offset();
    std::fill(band.begin(), band.end(), cplx{0.0, 0.0});
    for (int k2 = -km; k2 <= km; ++k2) {
        const std::size_t row = static_cast<std::size_t>(wrap_index(k2, g.ny)) * hw;
        const std::size_t brow = static_cast<std::size_t>(k2 + off) * g.trunc;
        const std::size_t nrow = static_cast<std::size_t>(-k2 + off) * g.trunc;
        for (int k1 = 1; k1 <= km; ++k1) {
            const cplx v = half[row + k1] * scale;
            band[brow + k1 + off] = v;
            band[nrow - k1 + off] = std::conj(v);
        }
    }
    // k1 = 0 column: keep k2 >= 0 and mirror.
    for (int k2 = 0; k2 <= km; ++k2) {
        const std::size_t row = static_cast<std::size_t>(wrap_index(k2, g.ny)) * hw;
        cplx v = half[row] * scale;
        if (k2 == 0) v = {v.real(), 0.0};
        band[static_cast<std::size_t>(k2 + off) * g.trunc + off] = v;
        band[static_cast<std::size_t>(-k2 + off) * g.trunc + off] = std::conj(v);
    }
}

struct UnitSymbol {
    double operator()(int, int) const { return 1.0; }
};

}  // namespace detail

/// Central-difference derivative symbol i sin(2 pi k h) / h along one axis.
inline cplx central_difference_symbol(int k, int n) {
    const double h = 1.0 / n;
    return {0.0, std::sin(2.0 * std::numbers::pi * k * h) / h};
}

/// Derivative symbol along an axis with n lattice points.
inline cplx derivative_symbol(int k, int n, Derivative d) {
    if (d == Derivative::CentralDifference) return central_difference_symbol(k, n);
    return {0.0, 2.0 * std::numbers::pi * k};
}

/// Band-limited spectrum of a lattice vector field.
inline FourierVelocity to_spectral(const SpatialVectorField& f, const GridSpec& g) {
    if (!f.matches(g))
        throw std::invalid_argument("field is " + std::to_string(f.nx()) + "x" + std::to_string(f.ny()) +
                                    ", grid is " + std::to_string(g.nx) + "x" + std::to_string(g.ny));
    FourierVelocity out(g);
    detail::plane_to_band(f.xs(), g, out.component(0));
    detail::plane_to_band(f.ys(), g, out.component(1));
    return out;
}

/// Real field on the full lattice from band-limited coefficients.
inline SpatialVectorField to_spatial(const FourierVelocity& v, const GridSpec& g) {
    if (!(v.grid() == g)) throw std::invalid_argument("spectral field does not belong to this grid");
    if (const double d = v.hermitian_defect(); d > 1e-10)
        throw NumericalError("spectral field violates Hermitian symmetry by " + std::to_string(d));
    SpatialVectorField out(g);
    detail::band_to_plane(v.component(0), g, detail::UnitSymbol{}, out.xs());
    detail::band_to_plane(v.component(1), g, detail::UnitSymbol{}, out.ys());
    return out;
}

inline FourierVelocity apply_L(FourierVelocity v, const KernelParams& k) {
    v.for_each_mode([&](int k1, int k2) {
        const double s = k.symbol(k1, k2);
        v.at(0, k1, k2) *= s;
        v.at(1, k1, k2) *= s;
    });
    return v;
}

inline FourierVelocity apply_K(FourierVelocity m, const KernelParams& k) {
    m.for_each_mode([&](int k1, int k2) {
        const double s = 1.0 / k.symbol(k1, k2);
        m.at(0, k1, k2) *= s;
        m.at(1, k1, k2) *= s;
    });
    return m;
}

/// 0.5 <m, v> summed over the band with m = L v.
inline double hamiltonian(const FourierVelocity& v, const KernelParams& k) {
    double e = 0.0;
    v.for_each_mode([&](int k1, int k2) {
        e += k.symbol(k1, k2) * (std::norm(v.at(0, k1, k2)) + std::norm(v.at(1, k1, k2)));
    });
    return 0.5 * e;
}

/// Spectral Jacobian: by_axis[a] holds d v / d x_a for both components,
/// using the grid's derivative symbol.
struct SpectralJacobian {
    std::array<FourierVelocity, 2> by_axis;
};

inline SpectralJacobian spectral_jacobian(const FourierVelocity& v, const GridSpec& g) {
    if (!(v.grid() == g)) throw std::invalid_argument("spectral field does not belong to this grid");
    SpectralJacobian J{{FourierVelocity(g), FourierVelocity(g)}};
    v.for_each_mode([&](int k1, int k2) {
        const cplx sx = derivative_symbol(k1, g.nx, g.derivative);
        const cplx sy = derivative_symbol(k2, g.ny, g.derivative);
        for (int c = 0; c < 2; ++c) {
            J.by_axis[0].at(c, k1, k2) = sx * v.at(c, k1, k2);
            J.by_axis[1].at(c, k1, k2) = sy * v.at(c, k1, k2);
        }
    });
    return J;
}

/// A band-limited field sampled on the lattice together with its Jacobian
/// under the grid's derivative symbol; jac[c][a] = d val_c / d x_a.
struct SampledField {
    std::array<std::vector<double>, 2> val;
    std::array<std::array<std::vector<double>, 2>, 2> jac;

    bool empty() const { return val[0].empty(); }

    /// this += s * o
    void axpy(double s, const SampledField& o) {
        for (int c = 0; c < 2; ++c) {
            add_scaled(val[c], s, o.val[c]);
            for (int a = 0; a < 2; ++a) add_scaled(jac[c][a], s, o.jac[c][a]);
        }
    }

    void scale(double s) {
        for (int c = 0; c < 2; ++c) {
            for (auto& x : val[c]) x *= s;
            for (int a = 0; a < 2; ++a)
                for (auto& x : jac[c][a]) x *= s;
        }
    }

private:
    static void add_scaled(std::vector<double>& y, double s, const std::vector<double>& x) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
    }
};

inline SampledField sample_with_jacobian(const FourierVelocity& v, const GridSpec& g) {
    if (!(v.grid() == g)) throw std::invalid_argument("spectral field does not belong to this grid");
    SampledField s;
    const int nx = g.nx, ny = g.ny;
    const Derivative d = g.derivative;
    for (int c = 0; c < 2; ++c) {
        detail::band_to_plane(v.component(c), g, detail::UnitSymbol{}, s.val[c]);
        detail::band_to_plane(v.component(c), g, [nx, d](int k1, int) { return derivative_symbol(k1, nx, d); },
                              s.jac[c][0]);
        detail::band_to_plane(v.component(c), g, [ny, d](int, int k2) { return derivative_symbol(k2, ny, d); },
                              s.jac[c][1]);
    }
    return s;
}

/// Pointwise (Du)^T m + Dm u + m div u on the lattice.
inline std::array<std::vector<double>, 2> coadjoint_pointwise(const SampledField& u, const SampledField& m) {
    const std::size_t n = u.val[0].size();
    std::array<std::vector<double>, 2> out{std::vector<double>(n), std::vector<double>(n)};
    const auto& ux = u.val[0];
    const auto& uy = u.val[1];
    const auto& mx = m.val[0];
    const auto& my = m.val[1];
    const auto& du = u.jac;
    const auto& dm = m.jac;
    for (std::size_t p = 0; p < n; ++p) {
        const double div = du[0][0][p] + du[1][1][p];
        out[0][p] = du[0][0][p] * mx[p] + du[1][0][p] * my[p] + dm[0][0][p] * ux[p] + dm[0][1][p] * uy[p] +
                    mx[p] * div;
        out[1][p] = du[0][1][p] * mx[p] + du[1][1][p] * my[p] + dm[1][0][p] * ux[p] + dm[1][1][p] * uy[p] +
                    my[p] * div;
    }
    return out;
}

/// Truncates a pair of lattice planes back to the band.
inline FourierVelocity planes_to_spectral(const std::array<std::vector<double>, 2>& planes, const GridSpec& g) {
    FourierVelocity out(g);
    detail::plane_to_band(planes[0], g, out.component(0));
    detail::plane_to_band(planes[1], g, out.component(1));
    return out;
}

/// ad*_u m from already-sampled operands.
inline FourierVelocity coadjoint(const SampledField& u, const SampledField& m, const GridSpec& g) {
    return planes_to_spectral(coadjoint_pointwise(u, m), g);
}

/// ad*_v m = (Dv)^T m + Dm v + m div v, evaluated by truncated convolution:
/// both operands go to the lattice, the product is formed pointwise, and the
/// result is truncated back to the band.
inline FourierVelocity coadjoint(const FourierVelocity& v, const FourierVelocity& m, const GridSpec& g) {
    if (!(v.grid() == g) || !(m.grid() == g)) throw std::invalid_argument("coadjoint operands on different grids");
    FourierVelocity out = coadjoint(sample_with_jacobian(v, g), sample_with_jacobian(m, g), g);
    assert(out.hermitian_defect() < 1e-10);
    return out;
}

/// Truncated convolution of a spectral Jacobian with a spectral vector:
/// pointwise (Dw) w on the lattice, re-truncated to the band.
inline FourierVelocity jacobian_times_field(const SampledField& w, const GridSpec& g) {
    const std::size_t n = w.val[0].size();
    std::array<std::vector<double>, 2> out{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t p = 0; p < n; ++p) {
        out[0][p] = w.jac[0][0][p] * w.val[0][p] + w.jac[0][1][p] * w.val[1][p];
        out[1][p] = w.jac[1][0][p] * w.val[0][p] + w.jac[1][1][p] * w.val[1][p];
    }
    return planes_to_spectral(out, g);
}

}  // namespace sflash
