#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/fields.hpp"

namespace sflash {

/// Hard-binned intensity histogram.
struct HistogramConfig {
    enum class Range {
        /// Both images binned over [lo, hi].
        Fixed,
        /// Each image binned over its own [min, max].
        PerImage,
    };

    int bins = 32;
    double lo = 0.0;
    double hi = 1.0;
    Range range = Range::Fixed;

    void validate() const {
        if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins, got " + std::to_string(bins));
        if (range == Range::Fixed && !(hi > lo)) throw std::invalid_argument("histogram range needs hi > lo");
    }
};

inline void require_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("image dimensions differ: " + std::to_string(a.nx()) + "x" + std::to_string(a.ny()) +
                                    " vs " + std::to_string(b.nx()) + "x" + std::to_string(b.ny()));
}

/// sqrt(sum (A - B)^2 h_x h_y).
inline double l2_distance(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double s = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        const double d = a[p] - b[p];
        s += d * d;
    }
    return std::sqrt(s / (static_cast<double>(a.nx()) * a.ny()));
}

/// Bin index of every pixel. Values outside the range land in the edge bins;
/// a constant image under PerImage range occupies bin 0.
inline std::vector<int> bin_indices(const Image& img, const HistogramConfig& h) {
    h.validate();
    double lo = h.lo, hi = h.hi;
    if (h.range == HistogramConfig::Range::PerImage) {
        lo = img.min();
        hi = img.max();
    }
    std::vector<int> out(img.size(), 0);
    if (!(hi > lo)) return out;
    const double scale = h.bins / (hi - lo);
    for (std::size_t p = 0; p < img.size(); ++p) {
        const double t = (img[p] - lo) * scale;
        int b = t <= 0.0 ? 0 : static_cast<int>(t);
        out[p] = std::min(b, h.bins - 1);
    }
    return out;
}

/// Joint and marginal bin counts of two equally sized images.
struct JointHistogram {
    int bins = 0;
    std::size_t total = 0;
    std::vector<double> joint;  // joint[a * bins + b]
    std::vector<double> ma, mb;
};

inline JointHistogram joint_histogram(const Image& a, const Image& b, const HistogramConfig& h) {
    require_same_shape(a, b);
    const std::vector<int> ia = bin_indices(a, h);
    const std::vector<int> ib = bin_indices(b, h);
    JointHistogram j;
    j.bins = h.bins;
    j.total = a.size();
    j.joint.assign(static_cast<std::size_t>(h.bins) * h.bins, 0.0);
    j.ma.assign(h.bins, 0.0);
    j.mb.assign(h.bins, 0.0);
    for (std::size_t p = 0; p < ia.size(); ++p) {
        j.joint[static_cast<std::size_t>(ia[p]) * h.bins + ib[p]] += 1.0;
        j.ma[ia[p]] += 1.0;
        j.mb[ib[p]] += 1.0;
    }
    return j;
}

/// Shannon entropy in nats of a count vector.
inline double entropy(const std::vector<double>& counts, std::size_t total) {
    double e = 0.0;
    const double n = static_cast<double>(total);
    for (double c : counts)
        if (c > 0.0) {
            const double p = c / n;
            e -= p * std::log(p);
        }
    return e;
}

inline double marginal_entropy(const Image& a, const HistogramConfig& h) {
    const std::vector<int> ia = bin_indices(a, h);
    std::vector<double> counts(h.bins, 0.0);
    for (int b : ia) counts[b] += 1.0;
    return entropy(counts, ia.size());
}

/// MI in nats: sum p(a,b) log(p(a,b) / (p(a) p(b))).
inline double mutual_information(const Image& a, const Image& b, const HistogramConfig& h = {}) {
    const JointHistogram j = joint_histogram(a, b, h);
    const double n = static_cast<double>(j.total);
    double mi = 0.0;
    for (int x = 0; x < j.bins; ++x)
        for (int y = 0; y < j.bins; ++y) {
            const double c = j.joint[static_cast<std::size_t>(x) * j.bins + y];
            if (c > 0.0) mi += c / n * std::log(c * n / (j.ma[x] * j.mb[y]));
        }
    return std::max(mi, 0.0);
}

/// (H(A) + H(B)) / H(A, B); 1 when both images are constant.
inline double normalized_mutual_information(const Image& a, const Image& b, const HistogramConfig& h = {}) {
    const JointHistogram j = joint_histogram(a, b, h);
    const double hab = entropy(j.joint, j.total);
    if (hab <= 0.0) return 1.0;
    const double r = (entropy(j.ma, j.total) + entropy(j.mb, j.total)) / hab;
    return std::clamp(r, 1.0, 2.0);
}

}  // namespace sflash
