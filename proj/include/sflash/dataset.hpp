#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sflash/config.hpp"
#include "sflash/estimation.hpp"
#include "sflash/flow.hpp"
#include "sflash/io.hpp"
#include "sflash/parallel.hpp"

namespace sflash {

/// Lower-case hex SHA-256 of a byte string.
inline std::string sha256_hex(const std::string& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_file_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + p.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("failed writing " + p.string());
}

inline std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file_bytes(p)); }

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes an image in the given format ("raw" or "pgm") and returns the file name used.
inline std::filesystem::path write_image(const Image& img, const std::filesystem::path& stem, const std::string& format) {
    std::filesystem::path p = stem;
    if (format == "pgm") {
        p += ".pgm";
        write_pgm(img, p);
    } else if (format == "raw") {
        p += ".raw";
        write_raw_image(img, p);
    } else {
        throw std::invalid_argument("unknown image format '" + format + "'");
    }
    return p;
}

struct SampleRecord {
    int index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string file;
    std::string sha256;
    /// Smallest det(D psi_1); <= 0 marks a folded map.
    double min_det = 0.0;
    std::string error;
};

/// Dataset manifest: the configuration copy, input files, per-sample seeds and checksums.
struct Manifest {
    static constexpr const char* file_name = "manifest.txt";
    std::uint64_t master_seed = 0;
    std::string format = "raw";
    std::string config_sha256;
    std::string i0_sha256;
    std::string v0_sha256;
    std::vector<SampleRecord> samples;

    int failed() const {
        int n = 0;
        for (const auto& s : samples) n += s.ok ? 0 : 1;
        return n;
    }
    int folded() const {
        int n = 0;
        for (const auto& s : samples) n += s.ok && !(s.min_det > 0.0) ? 1 : 0;
        return n;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << "sflash-dataset 1\n";
        os << "master_seed " << master_seed << "\n";
        os << "format " << format << "\n";
        os << "config config.cfg " << config_sha256 << "\n";
        os << "i0 i0.raw " << i0_sha256 << "\n";
        if (!v0_sha256.empty()) os << "v0 v0.sfv " << v0_sha256 << "\n";
        os << "samples " << samples.size() << " failed " << failed() << " folded " << folded() << "\n";
        for (const auto& s : samples) {
            os << "sample " << s.index << ' ' << s.seed << ' ';
            if (s.ok) os << "ok " << s.file << ' ' << s.sha256 << ' ' << format_double(s.min_det) << "\n";
            else os << "failed " << s.error << "\n";
        }
        return os.str();
    }

    static Manifest parse(const std::string& text, const std::string& name) {
        Manifest m;
        std::istringstream in(text);
        std::string line;
        auto bad = [&](const std::string& why) { return FormatError(name + ": " + why); };
        if (!std::getline(in, line) || line != "sflash-dataset 1") throw bad("not a dataset manifest");
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            if (tag == "master_seed") ls >> m.master_seed;
            else if (tag == "format") ls >> m.format;
            else if (tag == "config" || tag == "i0" || tag == "v0") {
                std::string file, sha;
                ls >> file >> sha;
                (tag == "config" ? m.config_sha256 : tag == "i0" ? m.i0_sha256 : m.v0_sha256) = sha;
            } else if (tag == "samples") continue;
            else if (tag == "sample") {
                SampleRecord s;
                std::string status;
                ls >> s.index >> s.seed >> status;
                if (status == "ok") {
                    std::string det;
                    ls >> s.file >> s.sha256 >> det;
                    s.ok = true;
                    s.min_det = std::stod(det);
                } else if (status == "failed") {
                    std::getline(ls >> std::ws, s.error);
                } else {
                    throw bad("unknown sample status '" + status + "'");
                }
                m.samples.push_back(std::move(s));
            } else if (!tag.empty()) {
                throw bad("unknown entry '" + tag + "'");
            }
            if (ls.fail()) throw bad("malformed line '" + line + "'");
        }
        return m;
    }
};

/// Simulates one sample: a fresh stochastic path and the warped template.
inline Image simulate_sample(const FourierVelocity& v0, const std::vector<NoiseField>& noise, const Image& I0,
                             int nsteps, const KernelParams& kernel, std::uint64_t seed, double* min_det = nullptr) {
    const WienerPath w = noise_path(seed, nsteps, noise.size());
    const FlowResult r = integrate_flow(v0, noise, w, kernel);
    if (min_det) *min_det = r.min_jacobian_det;
    return warp_image(I0, r.psi);
}

/// Simulates cfg.samples images into `out`. Sample i uses seed mix_seed(master, i)
/// unless explicit seeds are given. Samples whose path turns non-finite are
/// recorded as failed and produce no file; the manifest is written last.
inline Manifest simulate_dataset(const ExperimentConfig& cfg, const Image& I0, const FourierVelocity& v0,
                                 const std::filesystem::path& out, const std::string& format, int threads,
                                 const std::vector<std::uint64_t>* seeds = nullptr) {
    if (format != "raw" && format != "pgm") throw std::invalid_argument("format must be raw or pgm");
    if (!I0.matches(cfg.grid)) throw std::invalid_argument("I0 does not match the configured grid");
    const auto noise = make_noise_fields(cfg.grid, cfg.noise_params());
    const int n = seeds ? static_cast<int>(seeds->size()) : cfg.samples;

    Manifest m;
    m.master_seed = cfg.seed;
    m.format = format;
    m.samples.resize(n);
    std::vector<Image> images(n);
    parallel_for(n, threads, [&](std::size_t i) {
        SampleRecord& s = m.samples[i];
        s.index = static_cast<int>(i);
        s.seed = seeds ? (*seeds)[i] : mix_seed(cfg.seed, i);
        try {
            images[i] = simulate_sample(v0, noise, I0, cfg.nsteps, cfg.kernel, s.seed, &s.min_det);
            s.ok = true;
        } catch (const NumericalError& e) {
            s.error = e.what();
        }
    });

    std::filesystem::create_directories(out);
    write_file_bytes(out / "config.cfg", cfg.text);
    m.config_sha256 = sha256_hex(cfg.text);
    write_raw_image(I0, out / "i0.raw");
    m.i0_sha256 = sha256_file(out / "i0.raw");
    if (!v0.is_zero()) {
        write_spectral(v0, out / "v0.sfv");
        m.v0_sha256 = sha256_file(out / "v0.sfv");
    }
    for (int i = 0; i < n; ++i) {
        SampleRecord& s = m.samples[i];
        if (!s.ok) continue;
        char stem[32];
        std::snprintf(stem, sizeof stem, "sample_%04d", i);
        const auto path = write_image(images[i], out / stem, format);
        s.file = path.filename().string();
        s.sha256 = sha256_file(path);
    }
    write_file_bytes(out / Manifest::file_name, m.serialize());
    return m;
}

struct Dataset {
    Manifest manifest;
    ExperimentConfig config;
    Image I0;
    FourierVelocity v0;
    /// Successful samples in index order.
    std::vector<Image> images;
};

/// Loads a dataset directory and verifies every checksum.
inline Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset d;
    const auto mpath = dir / Manifest::file_name;
    d.manifest = Manifest::parse(read_file_bytes(mpath), mpath.string());
    auto verify = [&](const std::filesystem::path& p, const std::string& sha) {
        if (sha256_file(p) != sha) throw FormatError("checksum mismatch for " + p.string());
    };
    const std::string text = read_file_bytes(dir / "config.cfg");
    if (sha256_hex(text) != d.manifest.config_sha256) throw FormatError("checksum mismatch for config.cfg");
    d.config = parse_config(text, dir, false);
    verify(dir / "i0.raw", d.manifest.i0_sha256);
    d.I0 = read_raw_image(dir / "i0.raw");
    if (!d.I0.matches(d.config.grid)) throw FormatError("i0.raw does not match the dataset grid");
    if (d.manifest.v0_sha256.empty()) {
        d.v0 = FourierVelocity(d.config.grid);
    } else {
        verify(dir / "v0.sfv", d.manifest.v0_sha256);
        const FourierVelocity v = read_spectral(dir / "v0.sfv");
        d.v0 = FourierVelocity(d.config.grid);
        if (v.data().size() != d.v0.data().size()) throw FormatError("v0.sfv does not match the dataset grid");
        std::copy(v.data().begin(), v.data().end(), d.v0.data().begin());
    }
    for (const auto& s : d.manifest.samples) {
        if (!s.ok) continue;
        verify(dir / s.file, s.sha256);
        Image img = read_image(dir / s.file);
        if (!img.matches(d.config.grid)) throw FormatError(s.file + " does not match the dataset grid");
        d.images.push_back(std::move(img));
    }
    return d;
}

/// Re-simulates a dataset from its manifest into `out`.
inline Manifest regenerate_dataset(const std::filesystem::path& src, const std::filesystem::path& out, int threads) {
    const Dataset d = load_dataset(src);
    std::vector<std::uint64_t> seeds;
    for (const auto& s : d.manifest.samples) seeds.push_back(s.seed);
    ExperimentConfig cfg = d.config;
    cfg.seed = d.manifest.master_seed;
    return simulate_dataset(cfg, d.I0, d.v0, out, d.manifest.format, threads, &seeds);
}

}  // namespace sflash
