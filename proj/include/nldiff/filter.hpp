#ifndef NLDIFF_FILTER_HPP
#define NLDIFF_FILTER_HPP

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "nldiff/solver.hpp"
#include "nldiff/stopping.hpp"

namespace nldiff {

struct StepDiagnostics {
    int step = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double rel_dist = 0.0; // NaN when the mean is zero
};

struct FilterResult {
    ImageVolume image;
    std::vector<StepDiagnostics> trace; // row 0 is the input state
    int steps_used = 0;
};

namespace detail {

inline StepDiagnostics probe(const ImageVolume& v, int step) {
    StepDiagnostics d;
    d.step = step;
    d.mean = mean_grey(v);
    d.min = v.min_value();
    d.max = v.max_value();
    d.rel_dist = d.mean == 0.0 ? std::numeric_limits<double>::quiet_NaN() : rel_dist_to_mean(v);
    return d;
}

} // namespace detail

/// Run the nonlinear filter: n split steps with the operator re-assembled
/// from the current iterate each step. With `steps` unset, n comes from the
/// linear settling time at the same k, which is the recommended workflow.
inline FilterResult filter_run(const ImageVolume& v, const FilterConfig& cfg) {
    cfg.validate();
    detail::require_filterable(v);

    int steps;
    if (cfg.steps) {
        steps = *cfg.steps;
    } else {
        steps = settling_time(v, cfg.k, cfg.settle_threshold, cfg.settle_n_max, cfg.threads).steps;
    }

    FilterResult res;
    res.image = v;
    res.steps_used = steps;
    res.trace.reserve(static_cast<std::size_t>(steps) + 1);
    res.trace.push_back(detail::probe(res.image, 0));
    for (int n = 1; n <= steps; ++n) {
        if (cfg.picard_depth > 1)
            res.image = picard_iterate(res.image, cfg).state;
        else
            res.image = aos_step(res.image, cfg);
        res.trace.push_back(detail::probe(res.image, n));
    }
    return res;
}

/// `step,mean,min,max,rel_dist_to_mean`, one row per step (step 0 = input).
inline void write_diagnostics_csv(std::ostream& out, std::span<const StepDiagnostics> trace) {
    out << "step,mean,min,max,rel_dist_to_mean\n";
    char buf[256];
    for (const StepDiagnostics& d : trace) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", d.step, d.mean, d.min, d.max,
                      d.rel_dist);
        out << buf;
    }
}

} // namespace nldiff

#endif
