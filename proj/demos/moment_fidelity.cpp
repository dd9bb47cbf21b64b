// Simulates a batch of warped images for one noise field and compares the
// sample variance with the first-order variance image of the moment model.
//
//   moment_fidelity [nx] [tau] [lambda] [samples]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "sflash/sflash.hpp"

using namespace sflash;

int main(int argc, char** argv) {
    const int nx = argc > 1 ? std::atoi(argv[1]) : 64;
    const double tau = argc > 2 ? std::atof(argv[2]) : 0.06;
    const double lambda = argc > 3 ? std::atof(argv[3]) : 2.0;
    const int n = argc > 4 ? std::atoi(argv[4]) : 100;

    const GridSpec g(nx, nx, 16);
    const KernelParams k;
    const Image I0 = concentric_blobs(nx, nx);
    const auto noise = make_noise_fields(g, {{0.5, 0.5, tau, lambda}});
    const FourierVelocity v0(g);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<Image> samples(n);
    parallel_for(n, resolve_threads(0), [&](std::size_t i) {
        samples[i] = simulate_sample(v0, noise, I0, 100, k, mix_seed(1, i));
    });
    const double t_sim = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    t0 = std::chrono::steady_clock::now();
    const MomentImages m = moment_images(I0, evolve_moments(v0, noise, 100, k).state);
    const double t_mom = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Image mean, var;
    sample_moments(samples, mean, var);
    auto corr = [](const Image& a, const Image& b) {
        double ma = 0, mb = 0;
        for (std::size_t p = 0; p < a.size(); ++p) {
            ma += a[p];
            mb += b[p];
        }
        ma /= a.size();
        mb /= b.size();
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t p = 0; p < a.size(); ++p) {
            ab += (a[p] - ma) * (b[p] - mb);
            aa += (a[p] - ma) * (a[p] - ma);
            bb += (b[p] - mb) * (b[p] - mb);
        }
        return ab / std::sqrt(aa * bb);
    };
    const HistogramConfig h{32, 0.0, 1.0, HistogramConfig::Range::PerImage};
    std::printf("samples %d  simulate %.2fs  moments %.2fs\n", n, t_sim, t_mom);
    std::printf("mean image:     corr %.4f  NMI %.4f  L2 %.3g\n", corr(m.mean_image, mean),
                normalized_mutual_information(m.mean_image, mean, h), l2_distance(m.mean_image, mean));
    std::printf("variance image: corr %.4f  NMI %.4f  max model %.4g  max data %.4g\n", corr(m.var_image, var),
                normalized_mutual_information(m.var_image, var, h), m.var_image.max(), var.max());
    return 0;
}
