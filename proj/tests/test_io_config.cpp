#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace sflash;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sflash_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const char* small_config = R"(# two fields on a small grid
[grid]
nx = 16
ny = 16
trunc = 8

[model]
nsteps = 20

[noise]
field = 0.3 0.4 0.1 0.5
field = 0.7 0.6 0.08 0.4

[samples]
count = 6
seed = 17
)";

}  // namespace

TEST(Formats, SpectralRoundTrip) {
    const fs::path d = scratch_dir("sfv");
    const FourierVelocity v = sflash::testing::random_band_field(GridSpec(24, 16, 9), 2);
    write_spectral(v, d / "v.sfv");
    const FourierVelocity back = read_spectral(d / "v.sfv");
    EXPECT_TRUE(back == v);
    EXPECT_EQ(back.grid().trunc, 9);
}

TEST(Formats, DeformationAndRawImageRoundTrip) {
    const fs::path d = scratch_dir("dgf");
    DeformationGrid m = identity_map(8, 6);
    m.xs()[3] = 1.25;
    m.ys()[7] = -0.125;
    write_deformation(m, d / "m.dgf");
    EXPECT_TRUE(read_deformation(d / "m.dgf") == m);
    const Image img = concentric_blobs(12, 10);
    write_raw_image(img, d / "i.raw");
    EXPECT_EQ(read_raw_image(d / "i.raw"), img);
    EXPECT_EQ(read_image(d / "i.raw"), img);
}

TEST(Formats, PgmQuantisesToEightBits) {
    const fs::path d = scratch_dir("pgm");
    Image img(4, 2);
    for (std::size_t p = 0; p < img.size(); ++p) img[p] = p / 7.0;
    img[0] = -0.3;
    write_pgm(img, d / "i.pgm");
    const Image back = read_image(d / "i.pgm");
    EXPECT_EQ(back[0], 0.0);
    for (std::size_t p = 1; p < img.size(); ++p) EXPECT_NEAR(back[p], img[p], 0.5 / 255 + 1e-12);
}

TEST(Formats, RejectsCorruptFiles) {
    const fs::path d = scratch_dir("bad");
    {
        std::ofstream f(d / "x.raw", std::ios::binary);
        f << "NOPE1234";
    }
    EXPECT_THROW(read_raw_image(d / "x.raw"), FormatError);
    EXPECT_THROW(read_spectral(d / "x.raw"), FormatError);
    write_raw_image(concentric_blobs(8, 8), d / "t.raw");
    fs::resize_file(d / "t.raw", fs::file_size(d / "t.raw") - 8);
    EXPECT_THROW(read_raw_image(d / "t.raw"), FormatError);
    {
        std::ofstream f(d / "p.pgm", std::ios::binary);
        f << "P2\n2 2\n255\n0 0 0 0\n";
    }
    EXPECT_THROW(read_pgm(d / "p.pgm"), FormatError);
    EXPECT_THROW(read_raw_image(d / "missing.raw"), FormatError);
}

TEST(Config, ParsesAllSections) {
    const ExperimentConfig c = parse_config(R"(
[grid]
nx = 32
ny = 48
trunc = 12
derivative = central
[kernel]
alpha = 2.5
gamma = 0.5
power = 2
[model]
nsteps = 50
[noise]
field = 0.25 0.75 0.06 ?   # amplitude unknown
lattice = 2 0.1 2.0
[samples]
count = 10
seed = 99
[output]
dir = results
format = pgm
[estimate]
trials = 5
skip_lambda = yes
lambda_init = 1.5
tau_hi = 0.3
)");
    EXPECT_EQ(c.grid, GridSpec(32, 48, 12, Derivative::CentralDifference));
    EXPECT_DOUBLE_EQ(c.kernel.alpha, 2.5);
    EXPECT_EQ(c.kernel.power, 2);
    EXPECT_EQ(c.nsteps, 50);
    ASSERT_EQ(c.fields.size(), 5u);
    EXPECT_FALSE(c.fields[0].lambda.has_value());
    EXPECT_DOUBLE_EQ(*c.fields[0].tau, 0.06);
    EXPECT_DOUBLE_EQ(c.fields[4].mu_x, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(c.fields[4].mu_y, 2.0 / 3.0);
    EXPECT_FALSE(c.truth_known());
    EXPECT_THROW(c.noise_params(), ConfigError);
    EXPECT_EQ(c.samples, 10);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.format, "pgm");
    EXPECT_EQ(c.estimate.trials, 5);
    EXPECT_TRUE(c.estimate.skip_lambda);
    EXPECT_DOUBLE_EQ(*c.estimate.lambda_init, 1.5);
    EXPECT_DOUBLE_EQ(c.estimate.tau_hi, 0.3);
}

TEST(Config, ReportsErrors) {
    EXPECT_THROW(parse_config("[grid]\nnx = abc\n"), ConfigError);
    EXPECT_THROW(parse_config("[grid]\nbogus = 1\n"), ConfigError);
    EXPECT_THROW(parse_config("[grid\n"), ConfigError);
    EXPECT_THROW(parse_config("just words\n"), ConfigError);
    EXPECT_THROW(parse_config("[grid]\ntrunc = 99\n"), ConfigError);
    EXPECT_THROW(parse_config("[noise]\nfield = 0.5 0.5 -1 2\n"), ConfigError);
    EXPECT_THROW(parse_config("[noise]\nfield = 0.5 0.5 0.1\n"), ConfigError);
    EXPECT_THROW(parse_config("[noise]\nlattice = 0 0.1 1\n"), ConfigError);
    EXPECT_THROW(parse_config("[output]\nformat = tiff\n"), ConfigError);
    EXPECT_THROW(parse_config("[model]\ni0 = no_such_image.pgm\n"), ConfigError);
    EXPECT_THROW(parse_config("[kernel]\nalpha = 0\n"), ConfigError);
    EXPECT_THROW(parse_config("[estimate]\ntau_lo = 0.3\ntau_hi = 0.1\n"), ConfigError);
}

TEST(Manifest, RoundTrip) {
    Manifest m;
    m.master_seed = 12345678901234ull;
    m.format = "pgm";
    m.config_sha256 = std::string(64, 'a');
    m.i0_sha256 = std::string(64, 'b');
    m.samples.push_back({0, 7, true, "sample_0000.pgm", std::string(64, 'c'), 0.25, ""});
    m.samples.push_back({1, 8, false, "", "", 0.0, "non-finite velocity"});
    m.samples.push_back({2, 9, true, "sample_0002.pgm", std::string(64, 'd'), -0.5, ""});
    const Manifest back = Manifest::parse(m.serialize(), "test");
    EXPECT_EQ(back.serialize(), m.serialize());
    EXPECT_EQ(back.failed(), 1);
    EXPECT_EQ(back.folded(), 1);
    EXPECT_THROW(Manifest::parse("garbage\n", "test"), FormatError);
}

TEST(Hashing, KnownDigest) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Dataset, SimulateLoadAndRegenerate) {
    const fs::path d = scratch_dir("dataset");
    const ExperimentConfig cfg = parse_config(small_config, d);
    const Image I0 = cfg.load_i0();
    const Manifest m = simulate_dataset(cfg, I0, cfg.load_v0(), d / "a", "raw", 1);
    ASSERT_EQ(m.samples.size(), 6u);
    EXPECT_EQ(m.failed(), 0);
    EXPECT_EQ(m.samples[3].seed, mix_seed(17, 3));

    const Dataset ds = load_dataset(d / "a");
    ASSERT_EQ(ds.images.size(), 6u);
    EXPECT_EQ(ds.I0, I0);
    const auto noise = make_noise_fields(cfg.grid, cfg.noise_params());
    EXPECT_EQ(ds.images[2], simulate_sample(cfg.load_v0(), noise, I0, 20, cfg.kernel, mix_seed(17, 2)));

    simulate_dataset(cfg, I0, cfg.load_v0(), d / "b", "raw", 3);
    regenerate_dataset(d / "a", d / "c", 2);
    for (const char* name : {"manifest.txt", "config.cfg", "i0.raw", "sample_0005.raw"}) {
        EXPECT_EQ(read_file_bytes(d / "a" / name), read_file_bytes(d / "b" / name)) << name;
        EXPECT_EQ(read_file_bytes(d / "a" / name), read_file_bytes(d / "c" / name)) << name;
    }
}

TEST(Dataset, DetectsTampering) {
    const fs::path d = scratch_dir("tamper");
    const ExperimentConfig cfg = parse_config(small_config, d);
    simulate_dataset(cfg, cfg.load_i0(), cfg.load_v0(), d / "a", "pgm", 1);
    {
        std::fstream f(d / "a" / "sample_0001.pgm", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-1, std::ios::end);
        f.put('\x01');
    }
    EXPECT_THROW(load_dataset(d / "a"), FormatError);
}

TEST(Synthetic, BlobsAndLattice) {
    const Image b = concentric_blobs(64, 64);
    EXPECT_NEAR(b(32, 32), 1.0, 1e-2);
    EXPECT_NEAR(b(0, 0), 0.0, 1e-6);
    EXPECT_GE(b.min(), 0.0);
    EXPECT_LE(b.max(), 1.0 + 1e-12);
    const auto c = field_lattice(3);
    ASSERT_EQ(c.size(), 9u);
    EXPECT_DOUBLE_EQ(c[0][0], 0.25);
    EXPECT_DOUBLE_EQ(c[4][1], 0.5);
    EXPECT_DOUBLE_EQ(c[8][0], 0.75);
}
