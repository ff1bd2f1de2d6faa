#ifndef NLDIFF_DIFFUSIVITY_HPP
#define NLDIFF_DIFFUSIVITY_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace nldiff {

/// Scalar diffusivity g(r), evaluated on the squared gradient magnitude
/// r = s^2. The catalog:
///
///   proposed          g(r) = 1 for r < gamma, (gamma/r)^(p/2) for r >= gamma.
///                     Linear diffusion below the threshold, progressively
///                     slower diffusion above it; p > 1 puts the flux in the
///                     backward (edge-keeping) regime.
///   perona_malik      g(r) = exp(-r / (2 tau^2)).
///   regularized_power g(r) = (r + eps^2)^(-p/2). Comparison only: near r = 0
///                     it blows up to eps^-p, which makes large time steps
///                     unreliable.
///   bounded_step      1 for r < mu0^2, 0 beyond. Reference curve only, never
///                     used in the solver (g = 0 kills the positivity the
///                     scheme relies on). It is the p -> inf limit of
///                     `proposed` with mu0 = sqrt(gamma).
///   linear            g = 1.
struct DiffusivitySpec {
    enum class Kind { proposed, perona_malik, regularized_power, bounded_step, linear };

    Kind kind = Kind::linear;
    double gamma = 0.0;   // proposed: threshold on r
    double p = 0.0;       // proposed / regularized_power: decay exponent
    double tau = 0.0;     // perona_malik: contrast scale
    double epsilon = 0.0; // regularized_power: regularization
    double mu0 = 0.0;     // bounded_step: slope cutoff

    static DiffusivitySpec proposed(double gamma, double p) {
        if (!(gamma > 0.0)) throw std::invalid_argument("proposed diffusivity: gamma must be > 0");
        if (!(p > 1.0)) throw std::invalid_argument("proposed diffusivity: p must be > 1");
        DiffusivitySpec s;
        s.kind = Kind::proposed;
        s.gamma = gamma;
        s.p = p;
        return s;
    }

    static DiffusivitySpec perona_malik(double tau) {
        if (!(tau > 0.0)) throw std::invalid_argument("perona_malik diffusivity: tau must be > 0");
        DiffusivitySpec s;
        s.kind = Kind::perona_malik;
        s.tau = tau;
        return s;
    }

    static DiffusivitySpec regularized_power(double epsilon, double p) {
        if (!(epsilon > 0.0))
            throw std::invalid_argument("regularized_power diffusivity: epsilon must be > 0");
        if (!(p > 1.0)) throw std::invalid_argument("regularized_power diffusivity: p must be > 1");
        DiffusivitySpec s;
        s.kind = Kind::regularized_power;
        s.epsilon = epsilon;
        s.p = p;
        return s;
    }

    static DiffusivitySpec bounded_step(double mu0) {
        if (!(mu0 > 0.0)) throw std::invalid_argument("bounded_step diffusivity: mu0 must be > 0");
        DiffusivitySpec s;
        s.kind = Kind::bounded_step;
        s.mu0 = mu0;
        return s;
    }

    static DiffusivitySpec linear() { return DiffusivitySpec{}; }

    /// Usable inside the time-stepping scheme (strictly positive g).
    bool solver_grade() const { return kind != Kind::bounded_step; }
};

namespace detail {
inline void check_r(double r) {
    if (!(r >= 0.0)) throw std::domain_error("diffusivity: squared gradient must be >= 0");
}
} // namespace detail

inline double g(const DiffusivitySpec& spec, double r) {
    detail::check_r(r);
    switch (spec.kind) {
        case DiffusivitySpec::Kind::proposed:
            return r < spec.gamma ? 1.0 : std::pow(spec.gamma / r, spec.p / 2.0);
        case DiffusivitySpec::Kind::perona_malik:
            return std::exp(-r / (2.0 * spec.tau * spec.tau));
        case DiffusivitySpec::Kind::regularized_power:
            return std::pow(r + spec.epsilon * spec.epsilon, -spec.p / 2.0);
        case DiffusivitySpec::Kind::bounded_step:
            return r < spec.mu0 * spec.mu0 ? 1.0 : 0.0;
        case DiffusivitySpec::Kind::linear:
            return 1.0;
    }
    return 1.0;
}

/// Derivative of g almost everywhere. For `proposed` the kink at r = gamma
/// takes the right-limit value -p/(2 gamma), the extension the scheme's
/// Jacobian analysis works with; the derivative is bounded below by it.
inline double dg(const DiffusivitySpec& spec, double r) {
    detail::check_r(r);
    switch (spec.kind) {
        case DiffusivitySpec::Kind::proposed:
            if (r < spec.gamma) return 0.0;
            return -(spec.p / 2.0) * std::pow(spec.gamma, spec.p / 2.0) /
                   std::pow(r, spec.p / 2.0 + 1.0);
        case DiffusivitySpec::Kind::perona_malik: {
            const double two_tau2 = 2.0 * spec.tau * spec.tau;
            return -std::exp(-r / two_tau2) / two_tau2;
        }
        case DiffusivitySpec::Kind::regularized_power:
            return -(spec.p / 2.0) * std::pow(r + spec.epsilon * spec.epsilon, -spec.p / 2.0 - 1.0);
        case DiffusivitySpec::Kind::bounded_step:
            throw std::invalid_argument("bounded_step diffusivity has no derivative");
        case DiffusivitySpec::Kind::linear:
            return 0.0;
    }
    return 0.0;
}

/// g(r) + 2 g'(r) r, the second derivative of the flux potential at slope
/// s = sqrt(r). Negative values mark the contrast-enhancing (non-convex)
/// regime; for `proposed` above the threshold this is (1 - p) (gamma/r)^(p/2).
inline double enhancement_indicator(const DiffusivitySpec& spec, double r) {
    return g(spec, r) + 2.0 * dg(spec, r) * r;
}

/// Global Lipschitz constant of the proposed diffusivity, L = p / (2 gamma).
inline double lipschitz_bound(const DiffusivitySpec& spec) {
    if (spec.kind != DiffusivitySpec::Kind::proposed)
        throw std::invalid_argument("lipschitz_bound: defined for the proposed diffusivity");
    return spec.p / (2.0 * spec.gamma);
}

} // namespace nldiff

#endif
