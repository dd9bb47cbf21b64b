#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sflash {

/// Thrown when an integration produces non-finite state.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Discrete derivative used by the spectral operators.
enum class Derivative {
    /// Exact derivative symbol 2 pi i k of the band-limited interpolant.
    Spectral,
    /// Central-difference symbol i sin(2 pi k h) / h.
    CentralDifference,
};

/// Lattice on the periodic unit square [0,1)^2 plus the retained frequency band.
///
/// Pixel (i, j) sits at (i / nx, j / ny) and is stored at index j * nx + i.
/// The band keeps signed frequencies |k| <= (trunc - 1) / 2 on each axis; a
/// trunc x trunc coefficient block holds them with offset trunc / 2, so for
/// even trunc the most negative slot stays zero.
struct GridSpec {
    int nx = 0;
    int ny = 0;
    int trunc = 0;
    Derivative derivative = Derivative::Spectral;

    GridSpec() = default;
    GridSpec(int nx_, int ny_, int trunc_, Derivative d = Derivative::Spectral)
        : nx(nx_), ny(ny_), trunc(trunc_), derivative(d) {
        validate();
    }

    void validate() const {
        if (nx < 4 || ny < 4)
            throw std::invalid_argument("grid needs at least 4 pixels per axis, got " +
                                        std::to_string(nx) + "x" + std::to_string(ny));
        if (trunc < 1 || trunc > nx || trunc > ny)
            throw std::invalid_argument("band limit " + std::to_string(trunc) +
                                        " must lie in [1, min(nx, ny)]");
    }

    double hx() const { return 1.0 / nx; }
    double hy() const { return 1.0 / ny; }
    std::size_t pixels() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

    /// Largest retained |k| per axis.
    int kmax() const { return (trunc - 1) / 2; }
    int offset() const { return trunc / 2; }
    std::size_t band_size() const { return static_cast<std::size_t>(trunc) * static_cast<std::size_t>(trunc); }

    bool same_lattice(const GridSpec& o) const { return nx == o.nx && ny == o.ny; }
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Parameters of the momentum operator L with symbol (gamma + alpha (2 pi)^2 |k|^2)^power.
struct KernelParams {
    double alpha = 3.0;
    double gamma = 1.0;
    int power = 3;

    void validate() const {
        if (!(alpha > 0.0) || !(gamma > 0.0) || power < 1)
            throw std::invalid_argument("kernel requires alpha > 0, gamma > 0, power >= 1");
    }

    double symbol(int k1, int k2) const {
        const double two_pi = 2.0 * std::numbers::pi;
        const double base = gamma + alpha * two_pi * two_pi * static_cast<double>(k1 * k1 + k2 * k2);
        double out = 1.0;
        for (int p = 0; p < power; ++p) out *= base;
        return out;
    }
};

/// Periodic wrap of a pixel index.
inline int wrap_index(int i, int n) {
    const int r = i % n;
    return r < 0 ? r + n : r;
}

/// Periodic wrap of a domain coordinate into [0, 1).
inline double wrap_unit(double x) {
    double r = x - std::floor(x);
    if (r >= 1.0) r = 0.0;
    return r;
}

}  // namespace sflash
