#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/fields.hpp"
#include "sflash/fourier.hpp"

namespace sflash {

/// Raised for unreadable, truncated or malformed files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

class ByteWriter {
public:
    void magic(const char (&m)[5]) { buf_.insert(buf_.end(), m, m + 4); }
    void i32(std::int32_t v) {
        const auto u = static_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
    }
    void f64(double v) {
        const auto u = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) buf_.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
    }
    void save(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("cannot open " + path.string() + " for writing");
        f.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!f) throw FormatError("failed writing " + path.string());
    }
    const std::vector<char>& bytes() const { return buf_; }

private:
    std::vector<char> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::filesystem::path& path) : name_(path.string()) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw FormatError("cannot open " + name_);
        buf_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    }
    void expect_magic(const char (&m)[5]) {
        need(4);
        if (std::memcmp(buf_.data() + pos_, m, 4) != 0) throw FormatError(name_ + ": expected magic " + m);
        pos_ += 4;
    }
    std::int32_t i32() {
        need(4);
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
        pos_ += 4;
        return static_cast<std::int32_t>(u);
    }
    double f64() {
        need(8);
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
        pos_ += 8;
        return std::bit_cast<double>(u);
    }
    void expect_end() const {
        if (pos_ != buf_.size()) throw FormatError(name_ + ": trailing bytes");
    }
    const std::string& name() const { return name_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw FormatError(name_ + ": truncated file");
    }
    std::string name_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

inline void check_dims(const ByteReader& r, std::int32_t nx, std::int32_t ny) {
    if (nx <= 0 || ny <= 0 || nx > 1 << 16 || ny > 1 << 16)
        throw FormatError(r.name() + ": implausible dimensions " + std::to_string(nx) + "x" + std::to_string(ny));
}

}  // namespace detail

/// SFV1: magic, int32 nx, ny, trunc, then for each component the trunc x trunc
/// block in row-major signed-frequency order as (re, im) float64 pairs.
inline void write_spectral(const FourierVelocity& v, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic("SFV1");
    w.i32(v.grid().nx);
    w.i32(v.grid().ny);
    w.i32(v.grid().trunc);
    for (const cplx& c : v.data()) {
        w.f64(c.real());
        w.f64(c.imag());
    }
    w.save(path);
}

inline FourierVelocity read_spectral(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic("SFV1");
    const std::int32_t nx = r.i32(), ny = r.i32(), trunc = r.i32();
    detail::check_dims(r, nx, ny);
    GridSpec g;
    try {
        g = GridSpec(nx, ny, trunc);
    } catch (const std::invalid_argument& e) {
        throw FormatError(r.name() + ": " + e.what());
    }
    FourierVelocity v(g);
    for (cplx& c : v.data()) {
        const double re = r.f64();
        c = {re, r.f64()};
    }
    r.expect_end();
    if (v.hermitian_defect() > 1e-10) throw FormatError(r.name() + ": coefficients are not Hermitian");
    return v;
}

/// DGF1: magic, int32 nx, ny, 2, then per pixel (row-major) the (x, y) pair.
inline void write_deformation(const DeformationGrid& m, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic("DGF1");
    w.i32(m.nx());
    w.i32(m.ny());
    w.i32(2);
    for (std::size_t p = 0; p < m.size(); ++p) {
        w.f64(m.xs()[p]);
        w.f64(m.ys()[p]);
    }
    w.save(path);
}

inline DeformationGrid read_deformation(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic("DGF1");
    const std::int32_t nx = r.i32(), ny = r.i32(), comps = r.i32();
    detail::check_dims(r, nx, ny);
    if (comps != 2) throw FormatError(r.name() + ": expected 2 components");
    DeformationGrid m(nx, ny);
    for (std::size_t p = 0; p < m.size(); ++p) {
        m.xs()[p] = r.f64();
        m.ys()[p] = r.f64();
    }
    r.expect_end();
    return m;
}

/// IMF1: magic, int32 nx, ny, then row-major float64 pixels.
inline void write_raw_image(const Image& img, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic("IMF1");
    w.i32(img.nx());
    w.i32(img.ny());
    for (double v : img.pixels()) w.f64(v);
    w.save(path);
}

inline Image read_raw_image(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic("IMF1");
    const std::int32_t nx = r.i32(), ny = r.i32();
    detail::check_dims(r, nx, ny);
    Image img(nx, ny);
    for (std::size_t p = 0; p < img.size(); ++p) img[p] = r.f64();
    r.expect_end();
    if (!img.finite()) throw FormatError(r.name() + ": non-finite pixels");
    return img;
}

/// Binary 8-bit PGM. Intensities are mapped from [lo, hi] to 0..255 and clamped.
inline void write_pgm(const Image& img, const std::filesystem::path& path, double lo = 0.0, double hi = 1.0) {
    if (!(hi > lo)) throw std::invalid_argument("PGM range needs hi > lo");
    std::ostringstream head;
    head << "P5\n" << img.nx() << ' ' << img.ny() << "\n255\n";
    std::string out = head.str();
    out.reserve(out.size() + img.size());
    for (double v : img.pixels()) {
        const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("failed writing " + path.string());
}

/// Reads P5 (8 or 16 bit) into [0, 1].
inline Image read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    auto token = [&] {
        std::string t;
        char c;
        while (f.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(f, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(c);
        }
        return t;
    };
    if (token() != "P5") throw FormatError(path.string() + ": not a binary PGM");
    int nx = 0, ny = 0, maxval = 0;
    try {
        nx = std::stoi(token());
        ny = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (nx <= 0 || ny <= 0 || maxval <= 0 || maxval > 65535) throw FormatError(path.string() + ": bad PGM header");
    Image img(nx, ny);
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> data(img.size() * bytes);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<std::size_t>(f.gcount()) != data.size()) throw FormatError(path.string() + ": truncated PGM");
    for (std::size_t p = 0; p < img.size(); ++p) {
        const int v = bytes == 1 ? data[p] : (data[2 * p] << 8) | data[2 * p + 1];
        img[p] = static_cast<double>(v) / maxval;
    }
    return img;
}

/// Reads an image by extension: .pgm as PGM, anything else as IMF1.
inline Image read_image(const std::filesystem::path& path) {
    return path.extension() == ".pgm" ? read_pgm(path) : read_raw_image(path);
}

}  // namespace sflash
