#ifndef NLDIFF_PARAMS_HPP
#define NLDIFF_PARAMS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "nldiff/edges.hpp"
#include "nldiff/filter.hpp"
#include "nldiff/operators.hpp"
#include "nldiff/parallel.hpp"
#include "nldiff/stopping.hpp"
#include "nldiff/volume.hpp"

namespace nldiff {

/// Median absolute deviation. Even-length medians average the two middle
/// order statistics, the convention the 1.4826 Gaussian consistency factor
/// assumes.
inline double mad(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mad: empty input");
    std::vector<double> work(values.begin(), values.end());
    auto median_of = [](std::vector<double>& xs) {
        std::sort(xs.begin(), xs.end());
        const std::size_t n = xs.size();
        return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
    };
    const double med = median_of(work);
    for (double& x : work) x = std::fabs(x - med);
    return median_of(work);
}

struct GammaEstimate {
    double gamma = 0.0;
    bool degenerate = false; // estimate fell below the floor (flat image)
};

inline constexpr double gamma_floor = 1e-8;

/// Contrast threshold from robust gradient statistics:
/// gamma = (1.4826 * MAD(|grad U0|))^2. Pixels whose squared gradient stays
/// below gamma diffuse linearly; the region boundaries land above it and are
/// treated as outliers. Estimated once from the initial image and frozen.
inline GammaEstimate estimate_gamma(const ImageVolume& v) {
    const double scaled = 1.4826 * mad(gradient_magnitude(v));
    const double gamma = scaled * scaled;
    if (gamma < gamma_floor) return {gamma_floor, true};
    return {gamma, false};
}

struct TuningRecord {
    double p = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    int steps = 0;
    bool no_edges = false; // detector returned an empty map; F forced to 0
};

struct TuningReport {
    std::vector<TuningRecord> records;
    double p_star = 0.0;
    double f_star = 0.0;
    double f0 = 0.0; // F-measure of the unfiltered image
    double gamma = 0.0;
    bool gamma_degenerate = false;
    int steps = 0; // settling steps shared by every p
};

struct TuneOptions {
    double k = 200.0;
    double alpha = 0.5;
    CannyOptions canny{};
    int match_tolerance = 0;
    double settle_threshold = 0.02;
    int settle_n_max = 1'000'000;
    int threads = 0;
};

namespace detail {

inline TuningRecord score_edges(double p, int steps, const ImageVolume& img, const EdgeMap& truth,
                                const TuneOptions& opts) {
    TuningRecord rec;
    rec.p = p;
    rec.steps = steps;
    const EdgeMap detected = detect_edges(img, opts.canny);
    const PrecisionRecall pr = precision_recall(truth, detected, opts.match_tolerance);
    rec.no_edges = pr.detected_empty;
    rec.precision = pr.precision;
    rec.recall = pr.recall;
    rec.f_measure = (pr.detected_empty || (pr.precision == 0.0 && pr.recall == 0.0))
                        ? 0.0
                        : f_measure(pr.precision, pr.recall, opts.alpha);
    return rec;
}

} // namespace detail

/// Sweep the diffusivity exponent p against a ground-truth edge map:
/// gamma and the settling step count are computed once from the input, each
/// p runs the full filter, and F(p, alpha) scores its edge map. p* is the
/// argmax, ties broken toward the smaller p so the sweep is reproducible.
/// The runs are independent and execute in parallel.
inline TuningReport tune_p(const ImageVolume& v, const EdgeMap& truth,
                           std::span<const double> p_grid, const TuneOptions& opts = {}) {
    if (p_grid.empty()) throw std::invalid_argument("tune_p: empty p grid");
    for (double p : p_grid)
        if (!(p > 1.0)) throw std::invalid_argument("tune_p: every p must be > 1");
    if (v.rank() != 2) throw std::invalid_argument("tune_p: tuning needs a 2-D image");
    if (v.dims() != truth.dims())
        throw std::invalid_argument("tune_p: ground truth dimensions do not match the image");

    TuningReport report;
    const GammaEstimate ge = estimate_gamma(v);
    report.gamma = ge.gamma;
    report.gamma_degenerate = ge.degenerate;
    report.steps =
        settling_time(v, opts.k, opts.settle_threshold, opts.settle_n_max, opts.threads).steps;
    report.f0 = detail::score_edges(0.0, 0, v, truth, opts).f_measure;

    report.records.resize(p_grid.size());
    detail::parallel_for(p_grid.size(), opts.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            FilterConfig cfg;
            cfg.k = opts.k;
            cfg.steps = report.steps;
            cfg.diffusivity = DiffusivitySpec::proposed(report.gamma, p_grid[i]);
            cfg.threads = 1; // the sweep itself is the parallel axis
            const FilterResult run = filter_run(v, cfg);
            report.records[i] = detail::score_edges(p_grid[i], report.steps, run.image, truth, opts);
        }
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < report.records.size(); ++i)
        if (report.records[i].f_measure > report.records[best].f_measure) best = i;
    report.p_star = report.records[best].p;
    report.f_star = report.records[best].f_measure;
    return report;
}

/// `p,precision,recall,f_measure,n` rows followed by a summary line.
inline void write_csv(const TuningReport& report, std::ostream& out) {
    out << "p,precision,recall,f_measure,n\n";
    char buf[256];
    for (const TuningRecord& r : report.records) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n", r.p, r.precision, r.recall,
                      r.f_measure, r.steps);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "# p_star=%.17g f=%.17g f0=%.17g gamma=%.17g n=%d\n",
                  report.p_star, report.f_star, report.f0, report.gamma, report.steps);
    out << buf;
}

} // namespace nldiff

#endif
