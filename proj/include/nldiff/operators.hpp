#ifndef NLDIFF_OPERATORS_HPP
#define NLDIFF_OPERATORS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "nldiff/diffusivity.hpp"
#include "nldiff/volume.hpp"

namespace nldiff {

/// Symmetric tridiagonal matrix for one grid line. kappa tags what the
/// coefficients mean: kappa == 0 holds a raw diffusion block A (zero row
/// sums, nonnegative off-diagonals), kappa > 0 holds the step system
/// I - kappa*A (unit row sums, strictly dominant diagonal).
struct TridiagonalSystem {
    std::vector<double> lower; // n-1
    std::vector<double> diag;  // n
    std::vector<double> upper; // n-1
    double kappa = 0.0;

    std::size_t size() const { return diag.size(); }
};

/// Half-point diffusivities of one line: g_i = g((U_{i+1} - U_i)^2 / h^2),
/// i = 0..n-2. These are the conductances between neighbouring samples.
inline std::vector<double> half_point_diffusivities(std::span<const double> line, double h,
                                                    const DiffusivitySpec& spec) {
    if (line.size() < 2) throw std::invalid_argument("half_point_diffusivities: line too short");
    if (!(h > 0.0)) throw std::invalid_argument("half_point_diffusivities: spacing must be > 0");
    std::vector<double> gs(line.size() - 1);
    const double inv_h2 = 1.0 / (h * h);
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double d = line[i + 1] - line[i];
        gs[i] = g(spec, inv_h2 * d * d);
    }
    return gs;
}

/// Assemble the raw 1-D diffusion block A from half-point conductances:
/// a_{i,i+1} = a_{i+1,i} = g_i / h^2 and row sums zero, which realises the
/// homogeneous Neumann condition at both ends.
inline TridiagonalSystem assemble_axis_operator(std::span<const double> gfield, double h) {
    if (gfield.empty()) throw std::invalid_argument("assemble_axis_operator: empty g field");
    const std::size_t n = gfield.size() + 1;
    const double inv_h2 = 1.0 / (h * h);

    TridiagonalSystem sys;
    sys.lower.resize(n - 1);
    sys.upper.resize(n - 1);
    sys.diag.resize(n);
    for (std::size_t i = 0; i < n - 1; ++i) {
        const double off = gfield[i] * inv_h2;
        sys.lower[i] = off;
        sys.upper[i] = off;
    }
    sys.diag[0] = -gfield[0] * inv_h2;
    for (std::size_t i = 1; i < n - 1; ++i) sys.diag[i] = -(gfield[i - 1] + gfield[i]) * inv_h2;
    sys.diag[n - 1] = -gfield[n - 2] * inv_h2;
    sys.kappa = 0.0;
    return sys;
}

/// I - kappa*A from a raw block.
inline TridiagonalSystem to_step_system(const TridiagonalSystem& raw, double kappa) {
    if (raw.kappa != 0.0) throw std::invalid_argument("to_step_system: input is not a raw block");
    if (!(kappa > 0.0)) throw std::invalid_argument("to_step_system: kappa must be > 0");
    TridiagonalSystem sys;
    sys.kappa = kappa;
    sys.diag.resize(raw.size());
    sys.lower.resize(raw.lower.size());
    sys.upper.resize(raw.upper.size());
    for (std::size_t i = 0; i < raw.size(); ++i) sys.diag[i] = 1.0 - kappa * raw.diag[i];
    for (std::size_t i = 0; i < raw.lower.size(); ++i) {
        sys.lower[i] = -kappa * raw.lower[i];
        sys.upper[i] = -kappa * raw.upper[i];
    }
    return sys;
}

/// y = M x for a tridiagonal M.
inline std::vector<double> apply_tridiagonal(const TridiagonalSystem& m, std::span<const double> x) {
    const std::size_t n = m.size();
    if (x.size() != n) throw std::invalid_argument("apply_tridiagonal: size mismatch");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = m.diag[i] * x[i];
        if (i > 0) acc += m.lower[i - 1] * x[i - 1];
        if (i + 1 < n) acc += m.upper[i] * x[i + 1];
        y[i] = acc;
    }
    return y;
}

/// The correction block C of the Jacobian of U -> A(U)U, built from the
/// derivative of the diffusivity at the same half-point arguments:
///
///   c_{i,i+1} = c_{i+1,i} = (2/h^4) g'_i (U_{i+1} - U_i)^2,   row sums zero.
///
/// C collects the backward-diffusion part of the Jacobian; the time stepper
/// deliberately drops it (tangential stiffness), so C exists only for
/// diagnostics and for validating the decomposition J = A + C.
inline TridiagonalSystem assemble_jacobian_correction(std::span<const double> line, double h,
                                                      const DiffusivitySpec& spec) {
    if (line.size() < 2) throw std::invalid_argument("assemble_jacobian_correction: line too short");
    if (!(h > 0.0)) throw std::invalid_argument("assemble_jacobian_correction: spacing must be > 0");
    const std::size_t n = line.size();
    const double inv_h2 = 1.0 / (h * h);
    const double two_inv_h4 = 2.0 * inv_h2 * inv_h2;

    // w_i = 2/h^4 * g'_i * (U_{i+1}-U_i)^2 for each half point.
    std::vector<double> w(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double d = line[i + 1] - line[i];
        w[i] = two_inv_h4 * dg(spec, inv_h2 * d * d) * d * d;
    }

    TridiagonalSystem sys;
    sys.lower.assign(w.begin(), w.end());
    sys.upper.assign(w.begin(), w.end());
    sys.diag.resize(n);
    sys.diag[0] = -w[0];
    for (std::size_t i = 1; i + 1 < n; ++i) sys.diag[i] = -(w[i - 1] + w[i]);
    sys.diag[n - 1] = -w[n - 2];
    sys.kappa = 0.0;
    return sys;
}

/// Per-pixel Euclidean norm of the spacing-aware gradient: central
/// differences inside, one-sided at the boundary faces. Returned in the
/// volume's flat order.
inline std::vector<double> gradient_magnitude(const ImageVolume& v) {
    const auto& dims = v.dims();
    for (std::size_t d : dims)
        if (d < 2) throw std::invalid_argument("gradient_magnitude: every axis needs >= 2 samples");

    std::vector<double> sq(v.size(), 0.0);
    std::vector<double> buf;
    for (std::size_t axis = 0; axis < dims.size(); ++axis) {
        const double h = v.spacing()[axis];
        for (const AxisLine& line : axis_lines(dims, axis)) {
            gather_line(v, line, buf);
            const std::size_t n = line.length;
            std::size_t idx = line.offset;
            for (std::size_t i = 0; i < n; ++i, idx += line.stride) {
                double d;
                if (i == 0)
                    d = (buf[1] - buf[0]) / h;
                else if (i == n - 1)
                    d = (buf[n - 1] - buf[n - 2]) / h;
                else
                    d = (buf[i + 1] - buf[i - 1]) / (2.0 * h);
                sq[idx] += d * d;
            }
        }
    }
    for (double& x : sq) x = std::sqrt(x);
    return sq;
}

} // namespace nldiff

#endif
