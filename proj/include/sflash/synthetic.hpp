#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sflash/fields.hpp"

namespace sflash {

/// Nested elliptical plateaus with tanh edges, a stand-in for a brain slice.
struct BlobSpec {
    double cx = 0.5;
    double cy = 0.5;
    double rx = 0.38;
    double ry = 0.32;
    /// Normalised radii of the nested edges, outermost first.
    std::vector<double> levels{1.0, 0.7, 0.4, 0.15};
    /// Intensity added inside each edge.
    std::vector<double> heights{0.35, 0.25, 0.2, 0.2};
    /// Edge half-width in pixels.
    double edge_pixels = 1.5;
};

inline Image concentric_blobs(int nx, int ny, const BlobSpec& b = {}) {
    if (b.levels.size() != b.heights.size()) throw std::invalid_argument("one height per blob level required");
    if (!(b.rx > 0.0 && b.ry > 0.0 && b.edge_pixels > 0.0)) throw std::invalid_argument("blob radii must be positive");
    Image img(nx, ny);
    const double width = b.edge_pixels / (std::max(nx, ny) * std::min(b.rx, b.ry));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double dx = (static_cast<double>(i) / nx - b.cx) / b.rx;
            const double dy = (static_cast<double>(j) / ny - b.cy) / b.ry;
            const double r = std::sqrt(dx * dx + dy * dy);
            double v = 0.0;
            for (std::size_t l = 0; l < b.levels.size(); ++l)
                v += b.heights[l] * 0.5 * (1.0 - std::tanh((r - b.levels[l]) / width));
            img(i, j) = v;
        }
    return img;
}

/// Centres of an m x m lattice of fields at (k + 1) / (m + 1).
inline std::vector<std::array<double, 2>> field_lattice(int m) {
    if (m < 1) throw std::invalid_argument("field lattice needs m >= 1");
    std::vector<std::array<double, 2>> out;
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
            out.push_back({static_cast<double>(i + 1) / (m + 1), static_cast<double>(j + 1) / (m + 1)});
    return out;
}

}  // namespace sflash
