#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sflash/fourier.hpp"
#include "sflash/io.hpp"
#include "sflash/noise.hpp"
#include "sflash/synthetic.hpp"

namespace sflash {

/// Raised for malformed or inconsistent experiment configurations.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One noise field; an absent tau or lambda marks a parameter to estimate.
struct FieldSpec {
    double mu_x = 0.5;
    double mu_y = 0.5;
    std::optional<double> tau;
    std::optional<double> lambda;
};

struct EstimateSettings {
    int trials = 40;
    std::uint64_t seed = 0;
    bool skip_lambda = false;
    std::optional<double> lambda_init;
    int max_iter = 200;
    double low_information_ratio = 0.1;
    double tau_lo = 0.02, tau_hi = 0.2;
    double lambda_lo = 0.1, lambda_hi = 5.0;
};

struct ExperimentConfig {
    GridSpec grid{64, 64, 16};
    KernelParams kernel;
    int nsteps = 100;
    /// "zero" or a path to an SFV1 file.
    std::string v0 = "zero";
    /// "blobs" or a path to a PGM / IMF1 image.
    std::string i0 = "blobs";
    std::vector<FieldSpec> fields;
    int samples = 1;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string format = "raw";
    EstimateSettings estimate;
    /// Relative paths resolve against this directory.
    std::filesystem::path base_dir;
    /// Verbatim source text.
    std::string text;

    std::filesystem::path resolve(const std::string& p) const {
        const std::filesystem::path q(p);
        return q.is_absolute() ? q : base_dir / q;
    }

    FourierVelocity load_v0() const {
        if (v0 == "zero") return FourierVelocity(grid);
        FourierVelocity v = read_spectral(resolve(v0));
        if (!v.grid().same_lattice(grid) || v.grid().trunc != grid.trunc)
            throw ConfigError("v0 file " + v0 + " does not match the configured grid");
        FourierVelocity out(grid);
        std::copy(v.data().begin(), v.data().end(), out.data().begin());
        return out;
    }

    Image load_i0() const {
        if (i0 == "blobs") return concentric_blobs(grid.nx, grid.ny);
        Image img = read_image(resolve(i0));
        if (!img.matches(grid)) throw ConfigError("I0 image " + i0 + " does not match the configured grid");
        return img;
    }

    std::vector<std::array<double, 2>> centers() const {
        std::vector<std::array<double, 2>> c;
        for (const auto& f : fields) c.push_back({f.mu_x, f.mu_y});
        return c;
    }

    /// Noise parameters for simulation; every tau and lambda must be known.
    std::vector<NoiseParams> noise_params() const {
        std::vector<NoiseParams> out;
        for (std::size_t k = 0; k < fields.size(); ++k) {
            const FieldSpec& f = fields[k];
            if (!f.tau || !f.lambda) throw ConfigError("field " + std::to_string(k + 1) + " has unknown parameters");
            out.push_back({f.mu_x, f.mu_y, *f.tau, *f.lambda});
        }
        return out;
    }

    bool truth_known() const {
        for (const auto& f : fields)
            if (!f.tau || !f.lambda) return false;
        return !fields.empty();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <class T>
T parse_value(const std::string& v, const std::string& where) {
    std::istringstream is(v);
    T out{};
    if constexpr (std::is_same_v<T, bool>) {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError(where + ": expected a boolean, got '" + v + "'");
    } else {
        is >> out;
        if (!is || !(is >> std::ws).eof()) throw ConfigError(where + ": cannot parse '" + v + "'");
        return out;
    }
}

inline std::optional<double> parse_unknown(const std::string& v, const std::string& where) {
    if (v == "?") return std::nullopt;
    return parse_value<double>(v, where);
}

}  // namespace detail

/// Parses the sectioned key = value format. Lines starting with # are comments.
///
///   [grid]     nx, ny, trunc, derivative (spectral | central)
///   [kernel]   alpha, gamma, power
///   [model]    nsteps, v0 (zero | SFV1 path), i0 (blobs | image path)
///   [noise]    field = mu_x mu_y tau lambda   (tau, lambda may be ?)
///              lattice = m tau lambda         (m x m centres at (k+1)/(m+1))
///   [samples]  count, seed
///   [output]   dir, format (pgm | raw)
///   [estimate] trials, seed, skip_lambda, lambda_init, max_iter,
///              low_information_ratio, tau_lo, tau_hi, lambda_lo, lambda_hi
/// With check_files the v0 and i0 paths must exist.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                                     bool check_files = true) {
    ExperimentConfig c;
    c.text = text;
    c.base_dir = base_dir;
    int nx = 64, ny = 64, trunc = 16;
    Derivative deriv = Derivative::Spectral;
    std::istringstream in(text);
    std::string line, section;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const std::string where = "line " + std::to_string(lineno);
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        const std::string id = section + "." + key;
        using detail::parse_value;
        if (id == "grid.nx") nx = parse_value<int>(val, where);
        else if (id == "grid.ny") ny = parse_value<int>(val, where);
        else if (id == "grid.trunc") trunc = parse_value<int>(val, where);
        else if (id == "grid.derivative") {
            if (val == "spectral") deriv = Derivative::Spectral;
            else if (val == "central") deriv = Derivative::CentralDifference;
            else throw ConfigError(where + ": derivative must be spectral or central");
        } else if (id == "kernel.alpha") c.kernel.alpha = parse_value<double>(val, where);
        else if (id == "kernel.gamma") c.kernel.gamma = parse_value<double>(val, where);
        else if (id == "kernel.power") c.kernel.power = parse_value<int>(val, where);
        else if (id == "model.nsteps") c.nsteps = parse_value<int>(val, where);
        else if (id == "model.v0") c.v0 = val;
        else if (id == "model.i0") c.i0 = val;
        else if (id == "noise.field") {
            std::istringstream f(val);
            std::string mx, my, t, l, extra;
            if (!(f >> mx >> my >> t >> l) || (f >> extra))
                throw ConfigError(where + ": field needs mu_x mu_y tau lambda");
            c.fields.push_back({parse_value<double>(mx, where), parse_value<double>(my, where),
                                detail::parse_unknown(t, where), detail::parse_unknown(l, where)});
        } else if (id == "noise.lattice") {
            std::istringstream f(val);
            std::string m, t, l, extra;
            if (!(f >> m >> t >> l) || (f >> extra)) throw ConfigError(where + ": lattice needs m tau lambda");
            const int mm = parse_value<int>(m, where);
            if (mm < 1 || mm > 16) throw ConfigError(where + ": lattice size must be in [1, 16]");
            for (const auto& ctr : field_lattice(mm))
                c.fields.push_back({ctr[0], ctr[1], detail::parse_unknown(t, where), detail::parse_unknown(l, where)});
        } else if (id == "samples.count") c.samples = parse_value<int>(val, where);
        else if (id == "samples.seed") c.seed = parse_value<std::uint64_t>(val, where);
        else if (id == "output.dir") c.out_dir = val;
        else if (id == "output.format") c.format = val;
        else if (id == "estimate.trials") c.estimate.trials = parse_value<int>(val, where);
        else if (id == "estimate.seed") c.estimate.seed = parse_value<std::uint64_t>(val, where);
        else if (id == "estimate.skip_lambda") c.estimate.skip_lambda = parse_value<bool>(val, where);
        else if (id == "estimate.lambda_init") c.estimate.lambda_init = parse_value<double>(val, where);
        else if (id == "estimate.max_iter") c.estimate.max_iter = parse_value<int>(val, where);
        else if (id == "estimate.low_information_ratio")
            c.estimate.low_information_ratio = parse_value<double>(val, where);
        else if (id == "estimate.tau_lo") c.estimate.tau_lo = parse_value<double>(val, where);
        else if (id == "estimate.tau_hi") c.estimate.tau_hi = parse_value<double>(val, where);
        else if (id == "estimate.lambda_lo") c.estimate.lambda_lo = parse_value<double>(val, where);
        else if (id == "estimate.lambda_hi") c.estimate.lambda_hi = parse_value<double>(val, where);
        else throw ConfigError(where + ": unknown key '" + id + "'");
    }
    try {
        c.grid = GridSpec(nx, ny, trunc, deriv);
        c.kernel.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.nsteps < 1) throw ConfigError("nsteps must be positive");
    if (c.samples < 1) throw ConfigError("samples.count must be positive");
    if (c.format != "raw" && c.format != "pgm") throw ConfigError("output.format must be raw or pgm");
    if (c.estimate.trials < 1) throw ConfigError("estimate.trials must be positive");
    if (!(c.estimate.tau_lo > 0.0 && c.estimate.tau_hi >= c.estimate.tau_lo))
        throw ConfigError("tau bounds must satisfy 0 < tau_lo <= tau_hi");
    if (!(c.estimate.lambda_lo >= 0.0 && c.estimate.lambda_hi >= c.estimate.lambda_lo))
        throw ConfigError("lambda bounds must satisfy 0 <= lambda_lo <= lambda_hi");
    for (std::size_t k = 0; k < c.fields.size(); ++k) {
        const FieldSpec& f = c.fields[k];
        if ((f.tau && !(*f.tau > 0.0)) || (f.lambda && !(*f.lambda >= 0.0)))
            throw ConfigError("field " + std::to_string(k + 1) + " needs tau > 0 and lambda >= 0");
    }
    for (const std::string* p : {&c.v0, &c.i0}) {
        if (!check_files || *p == "zero" || *p == "blobs") continue;
        if (!std::filesystem::exists(c.resolve(*p))) throw ConfigError("referenced file does not exist: " + *p);
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

}  // namespace sflash
