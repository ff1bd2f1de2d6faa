#ifndef NLDIFF_STOPPING_HPP
#define NLDIFF_STOPPING_HPP

#include <sstream>

#include "nldiff/solver.hpp"
#include "nldiff/volume.hpp"

namespace nldiff {

struct SettlingResult {
    int steps = 0;      // first n with ||U^(n) - mu|| / ||mu|| <= threshold
    double time = 0.0;  // n * k
    double ratio = 0.0; // ratio actually reached
};

/// Settling time of the *linear* diffusion problem: the step count after
/// which the image sits within `threshold` relative Euclidean distance of
/// its mean. The nonlinear filter reuses this n as its stopping time (the
/// proposed diffusivity is exactly linear below the contrast threshold).
/// Depends only on the image data, its shape and k, so the result is
/// reproducible bit for bit.
inline SettlingResult settling_time(const ImageVolume& v, double k, double threshold = 0.02,
                                    int n_max = 1'000'000, int threads = 0) {
    if (!(k > 0.0)) throw std::invalid_argument("settling_time: k must be > 0");
    if (!(threshold > 0.0)) throw std::invalid_argument("settling_time: threshold must be > 0");
    if (n_max < 0) throw std::invalid_argument("settling_time: n_max must be >= 0");
    if (mean_grey(v) == 0.0)
        throw numerical_error("settling_time: mean grey level is zero, criterion undefined");

    double ratio = rel_dist_to_mean(v);
    if (ratio <= threshold) return {0, 0.0, ratio};

    FilterConfig cfg;
    cfg.k = k;
    cfg.diffusivity = DiffusivitySpec::linear();
    cfg.threads = threads;

    ImageVolume cur = v;
    for (int n = 1; n <= n_max; ++n) {
        cur = aos_step(cur, cfg);
        ratio = rel_dist_to_mean(cur);
        if (ratio <= threshold) return {n, static_cast<double>(n) * k, ratio};
    }
    std::ostringstream msg;
    msg << "settling_time: not settled within " << n_max << " steps (ratio " << ratio
        << ", threshold " << threshold << ")";
    throw numerical_error(msg.str());
}

} // namespace nldiff

#endif
