#ifndef NLDIFF_SOLVER_HPP
#define NLDIFF_SOLVER_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "nldiff/errors.hpp"
#include "nldiff/operators.hpp"
#include "nldiff/parallel.hpp"
#include "nldiff/volume.hpp"

namespace nldiff {

/// Time-stepping configuration. `steps` empty means "settle automatically":
/// the run length is taken from the linear-diffusion settling time at the
/// same k. picard_depth is the fixed-point iteration cap per time step;
/// 0 and 1 both collapse to the plain semi-implicit step, which is the
/// production scheme (deeper iteration is experimental, it is not known to
/// define a scale space).
struct FilterConfig {
    double k = 1.0;
    std::optional<int> steps{};
    DiffusivitySpec diffusivity = DiffusivitySpec::linear();
    int picard_depth = 0;
    double picard_tol = 1e-8;
    double settle_threshold = 0.02;
    int settle_n_max = 1'000'000;
    int threads = 0; // 0: NLDIFF_THREADS env, then hardware parallelism

    void validate() const {
        if (!(k > 0.0)) throw std::invalid_argument("FilterConfig: time step k must be > 0");
        if (picard_depth < 0) throw std::invalid_argument("FilterConfig: picard_depth must be >= 0");
        if (steps && *steps < 0) throw std::invalid_argument("FilterConfig: steps must be >= 0");
        if (!diffusivity.solver_grade())
            throw std::invalid_argument("FilterConfig: bounded_step is a reference curve, not a solver diffusivity");
    }
};

namespace detail {

/// Shared Thomas elimination core in extended precision. The step systems
/// are solved at huge kappa while the scheme's conservation guarantees are
/// asserted at the 1e-12 level, which plain double recurrences cannot hold.
inline void thomas_core(const TridiagonalSystem& sys, std::span<const double> rhs,
                        std::vector<long double>& d) {
    const std::size_t n = sys.size();
    constexpr double slack = 1e-9;
    for (std::size_t i = 0; i < n; ++i) {
        double off = 0.0;
        if (i > 0) off += std::fabs(sys.lower[i - 1]);
        if (i + 1 < n) off += std::fabs(sys.upper[i]);
        if (std::fabs(sys.diag[i]) * (1.0 + slack) < off) {
            std::ostringstream msg;
            msg << "thomas_solve: row " << i << " not diagonally dominant (|diag| = "
                << std::fabs(sys.diag[i]) << ", off sum = " << off << "); assembly bug";
            throw numerical_error(msg.str());
        }
    }

    std::vector<long double> c(n > 1 ? n - 1 : 0);
    d.resize(n);
    long double pivot = sys.diag[0];
    if (pivot == 0.0L) throw numerical_error("thomas_solve: zero pivot in row 0");
    if (n > 1) c[0] = sys.upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = sys.diag[i] - sys.lower[i - 1] * c[i - 1];
        if (pivot == 0.0L || !std::isfinite(static_cast<double>(pivot)))
            throw numerical_error("thomas_solve: vanishing pivot in row " + std::to_string(i));
        if (i + 1 < n) c[i] = sys.upper[i] / pivot;
        d[i] = (rhs[i] - sys.lower[i - 1] * d[i - 1]) / pivot;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
}

/// Solve one step system (I - kappa A) x = rhs and evaluate the solution
/// through its flux form x_i = rhs_i + (w_i - w_{i-1}), where
/// w_i = kappa g_i (x_{i+1} - x_i) / h^2 = -upper_i (x_{i+1} - x_i).
/// The divergence telescopes, so the grey mass is conserved to machine
/// precision no matter how large kappa*g grows; raw back substitution loses
/// that once the off-diagonals dominate the unit diagonal.
inline void step_system_solve(const TridiagonalSystem& sys, std::span<const double> rhs,
                              std::vector<double>& out) {
    const std::size_t n = sys.size();
    if (rhs.size() != n) throw std::invalid_argument("step_system_solve: rhs size mismatch");
    thread_local std::vector<long double> d;
    thomas_core(sys, rhs, d);
    out.resize(n);
    long double w_prev = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        long double w = 0.0L;
        if (i + 1 < n) w = -static_cast<long double>(sys.upper[i]) * (d[i + 1] - d[i]);
        out[i] = static_cast<double>(rhs[i] + (w - w_prev));
        w_prev = w;
    }
}

} // namespace detail

/// Thomas elimination for one tridiagonal system. The caller must pass a
/// diagonally dominant matrix (the step systems are, with margin 1); a
/// violated check means an assembly bug upstream, so it is reported rather
/// than solved around.
inline std::vector<double> thomas_solve(const TridiagonalSystem& sys, std::span<const double> rhs) {
    const std::size_t n = sys.size();
    if (rhs.size() != n) throw std::invalid_argument("thomas_solve: rhs size mismatch");
    if (n == 0) return {};
    std::vector<long double> d;
    detail::thomas_core(sys, rhs, d);
    return std::vector<double>(d.begin(), d.end());
}

/// One semi-implicit step on a single line: solve (I - kA(U)) V = U.
inline std::vector<double> semi_implicit_step_1d(std::span<const double> line, double h, double k,
                                                 const DiffusivitySpec& spec) {
    if (!(k > 0.0)) throw std::invalid_argument("semi_implicit_step_1d: k must be > 0");
    if (!spec.solver_grade())
        throw std::invalid_argument("semi_implicit_step_1d: diffusivity not usable in the solver");
    const auto gs = half_point_diffusivities(line, h, spec);
    const auto sys = to_step_system(assemble_axis_operator(gs, h), k);
    std::vector<double> out;
    detail::step_system_solve(sys, line, out);
    return out;
}

namespace detail {

inline void require_filterable(const ImageVolume& v) {
    for (std::size_t d : v.dims())
        if (d < 2) throw std::invalid_argument("solver: every filtered axis needs >= 2 samples");
}

/// Q(coeffs)[rhs] = (1/s) sum_r [I - s k A_r(coeffs)]^{-1} rhs, the additive
/// split step with the operator frozen at `coeffs`. All lines of one axis are
/// independent and run in parallel; each writes a disjoint slice of the
/// accumulator, so the result is identical for any worker count.
inline ImageVolume aos_apply(const ImageVolume& coeffs, const ImageVolume& rhs,
                             const FilterConfig& cfg) {
    const std::size_t s = coeffs.rank();
    const double kappa = static_cast<double>(s) * cfg.k;
    std::vector<double> acc(coeffs.size(), 0.0);

    for (std::size_t axis = 0; axis < s; ++axis) {
        const double h = coeffs.spacing()[axis];
        const auto lines = axis_lines(coeffs.dims(), axis);
        parallel_for(lines.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
            std::vector<double> cbuf, rbuf, x;
            for (std::size_t li = begin; li < end; ++li) {
                const AxisLine& line = lines[li];
                gather_line(coeffs, line, cbuf);
                gather_line(rhs, line, rbuf);
                const auto gs = half_point_diffusivities(cbuf, h, cfg.diffusivity);
                const auto sys = to_step_system(assemble_axis_operator(gs, h), kappa);
                detail::step_system_solve(sys, rbuf, x);
                std::size_t idx = line.offset;
                for (std::size_t i = 0; i < line.length; ++i, idx += line.stride) acc[idx] += x[i];
            }
        });
    }

    const double inv_s = 1.0 / static_cast<double>(s);
    for (double& x : acc) x *= inv_s;
    return ImageVolume(coeffs.dims(), std::move(acc), coeffs.spacing());
}

} // namespace detail

/// One additive-operator-splitting step, operator frozen at the input
/// (lagged diffusivity). For a 1-D volume this is exactly the semi-implicit
/// step. Unconditionally stable in k; preserves the mean and the min/max
/// range.
inline ImageVolume aos_step(const ImageVolume& v, const FilterConfig& cfg) {
    cfg.validate();
    detail::require_filterable(v);
    return detail::aos_apply(v, v, cfg);
}

struct PicardResult {
    ImageVolume state;
    int iterations = 0;    // solves performed
    double residual = 0.0; // ||U^{nu+1} - U^nu||_2 of the last iteration
    bool converged = false;
};

/// Fixed-point refinement of the implicit step: U^{nu+1} = Q(U^nu)[U^n]
/// starting from U^0 = U^n, stopping at picard_depth iterations or when the
/// update falls under picard_tol. Depth 1 is the semi-implicit step.
/// Non-convergence is reported in the result, not thrown.
inline PicardResult picard_iterate(const ImageVolume& v, const FilterConfig& cfg) {
    cfg.validate();
    if (cfg.picard_depth < 1)
        throw std::invalid_argument("picard_iterate: picard_depth must be >= 1");
    detail::require_filterable(v);

    PicardResult res{v, 0, std::numeric_limits<double>::infinity(), false};
    for (int nu = 0; nu < cfg.picard_depth; ++nu) {
        ImageVolume next = detail::aos_apply(res.state, v, cfg);
        double sq = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double d = next[i] - res.state[i];
            sq += d * d;
        }
        res.residual = std::sqrt(sq);
        res.state = std::move(next);
        res.iterations = nu + 1;
        if (res.residual <= cfg.picard_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

/// Explicit Euler step U + kA(U)U. Test oracle only: it is subject to the
/// usual time-step restriction, which is enforced here against the actual
/// assembled conductances (k <= h^2 / (2 s max g) in the uniform case).
inline ImageVolume explicit_step(const ImageVolume& v, const FilterConfig& cfg) {
    cfg.validate();
    detail::require_filterable(v);

    const std::size_t s = v.rank();
    std::vector<double> flux(v.size(), 0.0);
    double rate_sum = 0.0; // sum_r 2 max(g_r) / h_r^2
    std::vector<double> buf;
    for (std::size_t axis = 0; axis < s; ++axis) {
        const double h = v.spacing()[axis];
        double max_g = 0.0;
        for (const AxisLine& line : axis_lines(v.dims(), axis)) {
            gather_line(v, line, buf);
            const auto gs = half_point_diffusivities(buf, h, cfg.diffusivity);
            for (double gi : gs) max_g = std::max(max_g, gi);
            const auto raw = assemble_axis_operator(gs, h);
            const auto y = apply_tridiagonal(raw, buf);
            std::size_t idx = line.offset;
            for (std::size_t i = 0; i < line.length; ++i, idx += line.stride) flux[idx] += y[i];
        }
        rate_sum += 2.0 * max_g / (h * h);
    }

    const double limit = rate_sum > 0.0 ? 1.0 / rate_sum : std::numeric_limits<double>::infinity();
    if (cfg.k > limit) {
        std::ostringstream msg;
        msg << "explicit_step: k = " << cfg.k << " exceeds the stability limit " << limit;
        throw numerical_error(msg.str());
    }

    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + cfg.k * flux[i];
    return ImageVolume(v.dims(), std::move(out), v.spacing());
}

struct NewtonReport {
    TridiagonalSystem iteration_matrix; // I - k (A + C)
    bool spd = false;
    double min_pivot = 0.0;
};

/// Diagnostic for the full Newton iteration matrix I - k(A + C) on one line.
/// The correction C carries the negative diffusivity derivative, so for
/// steep data and large k the matrix loses positive definiteness; that loss
/// (a non-positive factorization pivot) is exactly what this reports, and
/// why the production scheme drops C.
inline NewtonReport newton_diagnostic(std::span<const double> line, double h, double k,
                                      const DiffusivitySpec& spec) {
    if (!(k > 0.0)) throw std::invalid_argument("newton_diagnostic: k must be > 0");
    const auto gs = half_point_diffusivities(line, h, spec);
    const auto a = assemble_axis_operator(gs, h);
    const auto c = assemble_jacobian_correction(line, h, spec);

    NewtonReport rep;
    const std::size_t n = a.size();
    rep.iteration_matrix.kappa = k;
    rep.iteration_matrix.diag.resize(n);
    rep.iteration_matrix.lower.resize(n - 1);
    rep.iteration_matrix.upper.resize(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        rep.iteration_matrix.diag[i] = 1.0 - k * (a.diag[i] + c.diag[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        rep.iteration_matrix.lower[i] = -k * (a.lower[i] + c.lower[i]);
        rep.iteration_matrix.upper[i] = -k * (a.upper[i] + c.upper[i]);
    }

    // LDL^T pivots; symmetric M is positive definite iff all pivots are > 0.
    rep.spd = true;
    rep.min_pivot = std::numeric_limits<double>::infinity();
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double piv = rep.iteration_matrix.diag[i];
        if (i > 0) {
            const double l = rep.iteration_matrix.lower[i - 1];
            piv -= l * l / prev;
        }
        rep.min_pivot = std::min(rep.min_pivot, piv);
        if (!(piv > 0.0) || !std::isfinite(piv)) {
            rep.spd = false;
            break; // factorization broke down; min_pivot records the offender
        }
        prev = piv;
    }
    return rep;
}

} // namespace nldiff

#endif
