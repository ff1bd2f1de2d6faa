// Shared helpers for the test suites: synthetic inputs and the dense linear
// algebra oracles the fast paths are checked against. Everything here is
// deliberately brute force and independent of the library's solve path.
#ifndef NLDIFF_TESTS_SUPPORT_HPP
#define NLDIFF_TESTS_SUPPORT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "nldiff/nldiff.hpp"

namespace testsupport {

using nldiff::ImageVolume;

// ---------------------------------------------------------------------------
// dense oracle: Gaussian elimination with partial pivoting
// ---------------------------------------------------------------------------

using DenseMatrix = std::vector<std::vector<double>>;

inline DenseMatrix dense_identity(std::size_t n) {
    DenseMatrix m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
    return m;
}

inline DenseMatrix dense_from_tridiagonal(const nldiff::TridiagonalSystem& t) {
    const std::size_t n = t.size();
    DenseMatrix m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        m[i][i] = t.diag[i];
        if (i + 1 < n) {
            m[i][i + 1] = t.upper[i];
            m[i + 1][i] = t.lower[i];
        }
    }
    return m;
}

// Partial pivoting, extended-precision arithmetic: the oracle must sit well
// below the tolerances it checks even on badly conditioned step systems.
inline std::vector<double> dense_solve(const DenseMatrix& a_in, const std::vector<double>& b_in) {
    const std::size_t n = a_in.size();
    std::vector<std::vector<long double>> a(n, std::vector<long double>(n));
    std::vector<long double> b(b_in.begin(), b_in.end());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i][j] = a_in[i][j];

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(static_cast<double>(a[r][col])) >
                std::fabs(static_cast<double>(a[pivot][col])))
                pivot = r;
        if (a[pivot][col] == 0.0L) throw std::runtime_error("dense_solve: singular matrix");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const long double f = a[r][col] / a[col][col];
            if (f == 0.0L) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    std::vector<long double> xl(n);
    for (std::size_t i = n; i-- > 0;) {
        long double acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * xl[c];
        xl[i] = acc / a[i][i];
        x[i] = static_cast<double>(xl[i]);
    }
    return x;
}

inline std::vector<double> dense_apply(const DenseMatrix& a, const std::vector<double>& x) {
    std::vector<double> y(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
    return y;
}

// Full m x m embedding of the axis-r semidiscrete block, built line by line
// from the same half-point conductances the fast path uses.
inline DenseMatrix dense_axis_operator(const ImageVolume& v, std::size_t axis,
                                       const nldiff::DiffusivitySpec& spec) {
    const std::size_t m = v.size();
    DenseMatrix a(m, std::vector<double>(m, 0.0));
    const double h = v.spacing()[axis];
    std::vector<double> line;
    for (const nldiff::AxisLine& ln : nldiff::axis_lines(v.dims(), axis)) {
        nldiff::gather_line(v, ln, line);
        const auto gs = nldiff::half_point_diffusivities(line, h, spec);
        const auto block = nldiff::assemble_axis_operator(gs, h);
        for (std::size_t i = 0; i < ln.length; ++i) {
            const std::size_t gi = ln.offset + i * ln.stride;
            a[gi][gi] += block.diag[i];
            if (i + 1 < ln.length) {
                const std::size_t gj = gi + ln.stride;
                a[gi][gj] += block.upper[i];
                a[gj][gi] += block.lower[i];
            }
        }
    }
    return a;
}

// Reference N-D split step: (1/s) sum_r (I - s k A_r)^{-1} U, all dense.
inline std::vector<double> dense_aos_reference(const ImageVolume& v,
                                               const nldiff::DiffusivitySpec& spec, double k) {
    const std::size_t m = v.size();
    const std::size_t s = v.rank();
    std::vector<double> acc(m, 0.0);
    const std::vector<double> u(v.data().begin(), v.data().end());
    for (std::size_t axis = 0; axis < s; ++axis) {
        DenseMatrix w = dense_axis_operator(v, axis, spec);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                w[i][j] = (i == j ? 1.0 : 0.0) - static_cast<double>(s) * k * w[i][j];
        const auto x = dense_solve(std::move(w), u);
        for (std::size_t i = 0; i < m; ++i) acc[i] += x[i];
    }
    for (double& x : acc) x /= static_cast<double>(s);
    return acc;
}

// ---------------------------------------------------------------------------
// synthetic inputs
// ---------------------------------------------------------------------------

inline ImageVolume random_volume(std::mt19937& rng, std::vector<std::size_t> dims,
                                 double lo = 0.0, double hi = 1.0) {
    std::size_t m = 1;
    for (std::size_t d : dims) m *= d;
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(m);
    for (double& x : data) x = dist(rng);
    return ImageVolume(std::move(dims), std::move(data));
}

// Two plateaus with a single jump in the middle.
inline ImageVolume step_line(std::size_t n, double low, double high) {
    std::vector<double> data(n, low);
    for (std::size_t i = n / 2; i < n; ++i) data[i] = high;
    return ImageVolume({n}, std::move(data));
}

// Four-quadrant cartoon with Gaussian noise, clamped to [0,1]. `levels`
// are the quadrant grey values (top-left, top-right, bottom-left,
// bottom-right).
inline ImageVolume cartoon_quadrants(std::size_t side, const std::array<double, 4>& levels,
                                     double noise_sigma, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    std::vector<double> data(side * side);
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
            const int q = (r < side / 2 ? 0 : 2) + (c < side / 2 ? 0 : 1);
            double v = levels[static_cast<std::size_t>(q)];
            if (noise_sigma > 0.0) v += noise(rng);
            data[r * side + c] = std::clamp(v, 0.0, 1.0);
        }
    return ImageVolume({side, side}, std::move(data));
}

// Ground truth for cartoon_quadrants: both pixel rows/columns adjacent to the
// quadrant boundaries.
inline nldiff::EdgeMap cartoon_quadrants_truth(std::size_t side) {
    std::vector<std::uint8_t> mask(side * side, 0);
    const std::size_t half = side / 2;
    for (std::size_t r = 0; r < side; ++r) {
        mask[r * side + half - 1] = 1;
        mask[r * side + half] = 1;
    }
    for (std::size_t c = 0; c < side; ++c) {
        mask[(half - 1) * side + c] = 1;
        mask[half * side + c] = 1;
    }
    return nldiff::EdgeMap({side, side}, std::move(mask));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// compensated, so 1e-12-level norm comparisons measure the data rather than
// the accumulator
inline double l1_norm(std::span<const double> x) {
    double s = 0.0, c = 0.0;
    for (double v : x) {
        const double y = std::fabs(v) - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

} // namespace testsupport

#endif
