#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/grid.hpp"

namespace sflash {

/// Scalar grid on the image lattice, row-major with x fastest.
class Image {
public:
    Image() = default;
    Image(int nx, int ny, double fill = 0.0)
        : nx_(nx), ny_(ny), px_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), fill) {
        if (nx <= 0 || ny <= 0) throw std::invalid_argument("image dimensions must be positive");
    }
    Image(int nx, int ny, std::vector<double> pixels) : nx_(nx), ny_(ny), px_(std::move(pixels)) {
        if (nx <= 0 || ny <= 0 || px_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
            throw std::invalid_argument("pixel buffer does not match image dimensions");
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t size() const { return px_.size(); }

    double& operator()(int i, int j) { return px_[static_cast<std::size_t>(j) * nx_ + i]; }
    double operator()(int i, int j) const { return px_[static_cast<std::size_t>(j) * nx_ + i]; }
    double& operator[](std::size_t k) { return px_[k]; }
    double operator[](std::size_t k) const { return px_[k]; }

    std::vector<double>& pixels() { return px_; }
    const std::vector<double>& pixels() const { return px_; }

    bool same_shape(const Image& o) const { return nx_ == o.nx_ && ny_ == o.ny_; }
    bool matches(const GridSpec& g) const { return nx_ == g.nx && ny_ == g.ny; }

    double min() const { return *std::min_element(px_.begin(), px_.end()); }
    double max() const { return *std::max_element(px_.begin(), px_.end()); }
    bool finite() const {
        return std::all_of(px_.begin(), px_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int nx_ = 0;
    int ny_ = 0;
    std::vector<double> px_;
};

/// Two-plane real vector field on the lattice. The tag keeps velocity fields
/// and deformation maps from being mixed up.
template <class Tag>
class PlanarField {
public:
    PlanarField() = default;
    PlanarField(int nx, int ny)
        : nx_(nx), ny_(ny),
          x_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0.0),
          y_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0.0) {
        if (nx <= 0 || ny <= 0) throw std::invalid_argument("field dimensions must be positive");
    }
    explicit PlanarField(const GridSpec& g) : PlanarField(g.nx, g.ny) {}

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t size() const { return x_.size(); }

    std::vector<double>& plane(int c) { return c == 0 ? x_ : y_; }
    const std::vector<double>& plane(int c) const { return c == 0 ? x_ : y_; }
    std::vector<double>& xs() { return x_; }
    std::vector<double>& ys() { return y_; }
    const std::vector<double>& xs() const { return x_; }
    const std::vector<double>& ys() const { return y_; }

    bool matches(const GridSpec& g) const { return nx_ == g.nx && ny_ == g.ny; }
    template <class Other>
    bool same_shape(const PlanarField<Other>& o) const { return nx_ == o.nx() && ny_ == o.ny(); }

    bool finite() const {
        auto ok = [](double v) { return std::isfinite(v); };
        return std::all_of(x_.begin(), x_.end(), ok) && std::all_of(y_.begin(), y_.end(), ok);
    }

    friend bool operator==(const PlanarField&, const PlanarField&) = default;

private:
    int nx_ = 0;
    int ny_ = 0;
    std::vector<double> x_;
    std::vector<double> y_;
};

struct VelocityTag {};
struct MapTag {};

/// Real vector field v(x) sampled on the lattice (domain lengths per unit time).
using SpatialVectorField = PlanarField<VelocityTag>;

/// Pointwise map phi(x_i, y_j) or psi(x_i, y_j) in unwrapped domain coordinates.
using DeformationGrid = PlanarField<MapTag>;

inline DeformationGrid identity_map(int nx, int ny) {
    DeformationGrid g(nx, ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const std::size_t k = static_cast<std::size_t>(j) * nx + i;
            g.xs()[k] = static_cast<double>(i) / nx;
            g.ys()[k] = static_cast<double>(j) / ny;
        }
    return g;
}

inline DeformationGrid identity_map(const GridSpec& g) { return identity_map(g.nx, g.ny); }

// --- periodic central differences ------------------------------------------

/// (f[i+1] - f[i-1]) / (2 h) along x with periodic wrap.
inline void central_dx(const std::vector<double>& f, int nx, int ny, std::vector<double>& out) {
    out.resize(f.size());
    const double s = 0.5 * nx;
    for (int j = 0; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        for (int i = 0; i < nx; ++i) {
            const int ip = i + 1 == nx ? 0 : i + 1;
            const int im = i == 0 ? nx - 1 : i - 1;
            out[row + i] = (f[row + ip] - f[row + im]) * s;
        }
    }
}

inline void central_dy(const std::vector<double>& f, int nx, int ny, std::vector<double>& out) {
    out.resize(f.size());
    const double s = 0.5 * ny;
    for (int j = 0; j < ny; ++j) {
        const int jp = j + 1 == ny ? 0 : j + 1;
        const int jm = j == 0 ? ny - 1 : j - 1;
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        const std::size_t rp = static_cast<std::size_t>(jp) * nx;
        const std::size_t rm = static_cast<std::size_t>(jm) * nx;
        for (int i = 0; i < nx; ++i) out[row + i] = (f[rp + i] - f[rm + i]) * s;
    }
}

/// Spatial Jacobian of a map: entry (c, a) holds d map_c / d x_a. The map is
/// split into identity plus a periodic displacement before differencing, so a
/// map that leaves the unit square still differentiates correctly.
struct MapJacobian {
    std::vector<double> xx, xy, yx, yy;  // d(map_x)/dx, d(map_x)/dy, d(map_y)/dx, d(map_y)/dy
};

inline MapJacobian map_jacobian(const DeformationGrid& m) {
    const int nx = m.nx(), ny = m.ny();
    std::vector<double> dispx(m.size()), dispy(m.size());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const std::size_t k = static_cast<std::size_t>(j) * nx + i;
            dispx[k] = m.xs()[k] - static_cast<double>(i) / nx;
            dispy[k] = m.ys()[k] - static_cast<double>(j) / ny;
        }
    MapJacobian J;
    central_dx(dispx, nx, ny, J.xx);
    central_dy(dispx, nx, ny, J.xy);
    central_dx(dispy, nx, ny, J.yx);
    central_dy(dispy, nx, ny, J.yy);
    for (auto& v : J.xx) v += 1.0;
    for (auto& v : J.yy) v += 1.0;
    return J;
}

// --- bilinear sampling with periodic wrap ----------------------------------

/// Cell and weights of a bilinear periodic lookup.
struct BilinearCell {
    std::size_t p00, p10, p01, p11;
    double tx, ty;
};

inline int wrap_cell(long long f, int n) {
    if (f >= 0 && f < n) return static_cast<int>(f);
    return static_cast<int>(((f % n) + n) % n);
}

/// floor for coordinates well inside the long long range.
inline long long floor_ll(double v) {
    const auto t = static_cast<long long>(v);
    return v < static_cast<double>(t) ? t - 1 : t;
}

inline BilinearCell locate_cell(int nx, int ny, double x, double y) {
    double gx = x * nx;
    double gy = y * ny;
    // Snap coordinates that sit on a lattice line up to rounding of i / n * n.
    if (const double r = static_cast<double>(floor_ll(gx + 0.5)); std::abs(gx - r) < 1e-9) gx = r;
    if (const double r = static_cast<double>(floor_ll(gy + 0.5)); std::abs(gy - r) < 1e-9) gy = r;
    const long long fx = floor_ll(gx);
    const long long fy = floor_ll(gy);
    const int i0 = wrap_cell(fx, nx);
    const int j0 = wrap_cell(fy, ny);
    const int i1 = i0 + 1 == nx ? 0 : i0 + 1;
    const int j1 = j0 + 1 == ny ? 0 : j0 + 1;
    const std::size_t r0 = static_cast<std::size_t>(j0) * nx;
    const std::size_t r1 = static_cast<std::size_t>(j1) * nx;
    return {r0 + i0, r0 + i1, r1 + i0, r1 + i1, gx - static_cast<double>(fx), gy - static_cast<double>(fy)};
}

inline double interpolate(const std::vector<double>& f, const BilinearCell& c) {
    // Exact lattice hits return the stored value without blending.
    if (c.tx == 0.0 && c.ty == 0.0) return f[c.p00];
    const double a = f[c.p00] + c.tx * (f[c.p10] - f[c.p00]);
    const double b = f[c.p01] + c.tx * (f[c.p11] - f[c.p01]);
    return a + c.ty * (b - a);
}

/// Bilinear interpolation of a periodic lattice field at domain point (x, y).
inline double bilinear_periodic(const std::vector<double>& f, int nx, int ny, double x, double y) {
    return interpolate(f, locate_cell(nx, ny, x, y));
}

/// Evaluates a map at an off-lattice point through its periodic displacement.
inline void sample_map(const DeformationGrid& m, const std::vector<double>& dispx,
                       const std::vector<double>& dispy, double x, double y, double& ox, double& oy) {
    ox = x + bilinear_periodic(dispx, m.nx(), m.ny(), x, y);
    oy = y + bilinear_periodic(dispy, m.nx(), m.ny(), x, y);
}

inline void map_displacement(const DeformationGrid& m, std::vector<double>& dispx, std::vector<double>& dispy) {
    const int nx = m.nx(), ny = m.ny();
    dispx.resize(m.size());
    dispy.resize(m.size());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const std::size_t k = static_cast<std::size_t>(j) * nx + i;
            dispx[k] = m.xs()[k] - static_cast<double>(i) / nx;
            dispy[k] = m.ys()[k] - static_cast<double>(j) / ny;
        }
}

/// Smallest value of det(D map) over the lattice; <= 0 signals fold-over.
inline double min_jacobian_determinant(const DeformationGrid& m) {
    const MapJacobian J = map_jacobian(m);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.size(); ++k) lo = std::min(lo, J.xx[k] * J.yy[k] - J.xy[k] * J.yx[k]);
    return lo;
}

}  // namespace sflash
