#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nldiff/filter.hpp"
#include "nldiff/solver.hpp"
#include "support.hpp"

using nldiff::DiffusivitySpec;
using nldiff::FilterConfig;
using nldiff::ImageVolume;
using nldiff::TridiagonalSystem;
using Catch::Approx;

namespace {

FilterConfig linear_config(double k) {
    FilterConfig cfg;
    cfg.k = k;
    cfg.diffusivity = DiffusivitySpec::linear();
    return cfg;
}

FilterConfig proposed_config(double k, double gamma, double p) {
    FilterConfig cfg;
    cfg.k = k;
    cfg.diffusivity = DiffusivitySpec::proposed(gamma, p);
    return cfg;
}

TridiagonalSystem random_diffusion_system(std::mt19937& rng, std::size_t n, double k) {
    std::uniform_real_distribution<double> gdist(1e-3, 1.0);
    std::vector<double> g(n - 1);
    for (double& x : g) x = gdist(rng);
    return nldiff::to_step_system(nldiff::assemble_axis_operator(g, 1.0), k);
}

} // namespace

TEST_CASE("thomas_solve") {
    SECTION("identity") {
        TridiagonalSystem id;
        id.diag = {1.0, 1.0, 1.0};
        id.lower = {0.0, 0.0};
        id.upper = {0.0, 0.0};
        const std::vector<double> rhs{3.0, -1.0, 0.5};
        REQUIRE(nldiff::thomas_solve(id, rhs) == rhs);
    }

    SECTION("2x2 step system by hand") {
        // [[1.5, -0.5], [-0.5, 1.5]] x = [0, 1]  =>  x = [0.25, 0.75]
        TridiagonalSystem sys;
        sys.diag = {1.5, 1.5};
        sys.lower = {-0.5};
        sys.upper = {-0.5};
        sys.kappa = 0.5;
        const auto x = nldiff::thomas_solve(sys, std::vector<double>{0.0, 1.0});
        REQUIRE(x[0] == Approx(0.25).margin(1e-15));
        REQUIRE(x[1] == Approx(0.75).margin(1e-15));
    }

    SECTION("matches dense elimination on random diffusion systems") {
        std::mt19937 rng(71);
        std::uniform_real_distribution<double> rdist(-1.0, 1.0);
        for (int rep = 0; rep < 50; ++rep) {
            const std::size_t n = 2 + static_cast<std::size_t>(rng() % 199);
            const auto sys = random_diffusion_system(rng, n, 10.0);
            std::vector<double> rhs(n);
            for (double& x : rhs) x = rdist(rng);
            const auto fast = nldiff::thomas_solve(sys, rhs);
            const auto exact = testsupport::dense_solve(testsupport::dense_from_tridiagonal(sys), rhs);
            double scale = 0.0;
            for (double x : exact) scale = std::max(scale, std::fabs(x));
            REQUIRE(testsupport::max_abs_diff(fast, exact) <= 1e-10 * std::max(1.0, scale));
        }
    }

    SECTION("residual stays tiny") {
        std::mt19937 rng(72);
        const auto sys = random_diffusion_system(rng, 64, 1000.0);
        std::vector<double> rhs(64);
        std::uniform_real_distribution<double> rdist(0.0, 1.0);
        for (double& x : rhs) x = rdist(rng);
        const auto x = nldiff::thomas_solve(sys, rhs);
        const auto back = nldiff::apply_tridiagonal(sys, x);
        double rnorm = 0.0, bnorm = 0.0;
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            rnorm += (back[i] - rhs[i]) * (back[i] - rhs[i]);
            bnorm += rhs[i] * rhs[i];
        }
        REQUIRE(std::sqrt(rnorm) <= 1e-10 * std::sqrt(bnorm));
    }

    SECTION("reports lost dominance instead of solving") {
        TridiagonalSystem bad;
        bad.diag = {1.0, 0.1};
        bad.lower = {-1.0};
        bad.upper = {-1.0};
        REQUIRE_THROWS_AS(nldiff::thomas_solve(bad, std::vector<double>{1.0, 1.0}),
                          nldiff::numerical_error);
    }

    SECTION("size mismatch") {
        TridiagonalSystem id;
        id.diag = {1.0};
        REQUIRE_THROWS_AS(nldiff::thomas_solve(id, std::vector<double>{1.0, 2.0}),
                          std::invalid_argument);
    }
}

TEST_CASE("semi-implicit 1-D step") {
    SECTION("constants are fixed points") {
        const std::vector<double> line{0.4, 0.4, 0.4, 0.4};
        const auto out = nldiff::semi_implicit_step_1d(line, 1.0, 100.0,
                                                       DiffusivitySpec::proposed(0.02, 2.0));
        for (double x : out) REQUIRE(x == Approx(0.4).margin(1e-14));
    }
    SECTION("two-point linear step by hand") {
        const auto out =
            nldiff::semi_implicit_step_1d(std::vector<double>{0.0, 1.0}, 1.0, 0.5,
                                          DiffusivitySpec::linear());
        REQUIRE(out[0] == Approx(0.25).margin(1e-15));
        REQUIRE(out[1] == Approx(0.75).margin(1e-15));
    }
    SECTION("update size shrinks linearly with k") {
        const std::vector<double> line{0.1, 0.8, 0.3, 0.6, 0.2};
        const auto spec = DiffusivitySpec::proposed(0.05, 2.0);
        double prev = -1.0;
        for (double k : {1e-2, 1e-3, 1e-4, 1e-5}) {
            const auto out = nldiff::semi_implicit_step_1d(line, 1.0, k, spec);
            double diff = 0.0;
            for (std::size_t i = 0; i < line.size(); ++i)
                diff = std::max(diff, std::fabs(out[i] - line[i]));
            if (prev >= 0.0) {
                REQUIRE(diff <= 0.15 * prev); // ~10x smaller for 10x smaller k
                REQUIRE(diff >= 0.05 * prev);
            }
            prev = diff;
        }
    }
    SECTION("mean preserved, bounds respected") {
        std::mt19937 rng(9);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        std::vector<double> line(33);
        for (double& x : line) x = dist(rng);
        double mean0 = 0.0, lo = 1e9, hi = -1e9;
        for (double x : line) {
            mean0 += x;
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        mean0 /= double(line.size());
        const auto out = nldiff::semi_implicit_step_1d(line, 1.0, 500.0,
                                                       DiffusivitySpec::proposed(0.02, 4.0));
        double mean1 = 0.0;
        for (double x : out) {
            mean1 += x;
            REQUIRE(x >= lo - 1e-10);
            REQUIRE(x <= hi + 1e-10);
        }
        mean1 /= double(out.size());
        REQUIRE(mean1 == Approx(mean0).margin(1e-12));
    }
}

TEST_CASE("picard iteration") {
    std::mt19937 rng(13);
    const ImageVolume v = testsupport::random_volume(rng, {24});

    SECTION("depth 1 is exactly the semi-implicit step") {
        FilterConfig cfg = proposed_config(50.0, 0.02, 2.0);
        cfg.picard_depth = 1;
        cfg.picard_tol = 0.0;
        const auto pic = nldiff::picard_iterate(v, cfg);
        const auto semi = nldiff::aos_step(v, cfg);
        for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(pic.state[i] == semi[i]);
        REQUIRE(pic.iterations == 1);
    }

    SECTION("constant input is an immediate fixed point") {
        const ImageVolume c({6}, std::vector<double>(6, 0.3));
        FilterConfig cfg = linear_config(10.0);
        cfg.picard_depth = 5;
        cfg.picard_tol = 1e-12;
        const auto pic = nldiff::picard_iterate(c, cfg);
        REQUIRE(pic.converged);
        REQUIRE(pic.iterations == 1);
        for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(pic.state[i] == Approx(0.3).margin(1e-13));
    }

    SECTION("iterates never grow in l1 even for huge k") {
        const double norm0 = testsupport::l1_norm(v.data());
        for (int depth = 1; depth <= 6; ++depth) {
            FilterConfig cfg = proposed_config(1e3, 0.02, 3.0);
            cfg.picard_depth = depth;
            cfg.picard_tol = 0.0; // run all iterations
            const auto pic = nldiff::picard_iterate(v, cfg);
            REQUIRE(testsupport::l1_norm(pic.state.data()) <= norm0 + 1e-12);
        }
    }

    SECTION("depth must be at least 1") {
        FilterConfig cfg = linear_config(1.0);
        cfg.picard_depth = 0;
        REQUIRE_THROWS_AS(nldiff::picard_iterate(v, cfg), std::invalid_argument);
    }
}

TEST_CASE("aos step") {
    std::mt19937 rng(19);

    SECTION("collapses to the 1-D semi-implicit step") {
        const ImageVolume v = testsupport::random_volume(rng, {17});
        const auto spec = DiffusivitySpec::proposed(0.02, 2.0);
        const auto out = nldiff::aos_step(v, proposed_config(7.0, 0.02, 2.0));
        const auto line = nldiff::semi_implicit_step_1d(
            std::vector<double>(v.data().begin(), v.data().end()), 1.0, 7.0, spec);
        for (std::size_t i = 0; i < v.size(); ++i)
            REQUIRE(out[i] == Approx(line[i]).margin(1e-12));
    }

    SECTION("constant volumes are fixed points") {
        const ImageVolume c({3, 3, 3}, std::vector<double>(27, 0.6));
        const auto out = nldiff::aos_step(c, proposed_config(8000.0, 0.01, 10.0));
        for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(out[i] == Approx(0.6).margin(1e-12));
    }

    SECTION("matches the dense split formula, linear 4x4") {
        const ImageVolume v = testsupport::random_volume(rng, {4, 4});
        const auto out = nldiff::aos_step(v, linear_config(0.1));
        const auto ref = testsupport::dense_aos_reference(v, DiffusivitySpec::linear(), 0.1);
        REQUIRE(testsupport::max_abs_diff(out.data(), ref) <= 1e-10);
    }

    SECTION("matches the dense split formula, nonlinear volumes") {
        for (const auto& dims :
             {std::vector<std::size_t>{6, 6, 4}, std::vector<std::size_t>{5, 3}}) {
            const ImageVolume v = testsupport::random_volume(rng, dims);
            for (double k : {0.5, 200.0}) {
                const auto out = nldiff::aos_step(v, proposed_config(k, 0.03, 2.5));
                const auto ref =
                    testsupport::dense_aos_reference(v, DiffusivitySpec::proposed(0.03, 2.5), k);
                REQUIRE(testsupport::max_abs_diff(out.data(), ref) <= 1e-10);
            }
        }
    }

    SECTION("anisotropic spacing changes the answer consistently") {
        const ImageVolume iso({2, 2}, {0.0, 1.0, 1.0, 0.0}, {1.0, 1.0});
        const ImageVolume aniso({2, 2}, {0.0, 1.0, 1.0, 0.0}, {1.0, 3.0});
        const auto a = nldiff::aos_step(iso, linear_config(1.0));
        const auto b = nldiff::aos_step(aniso, linear_config(1.0));
        const auto ref = testsupport::dense_aos_reference(aniso, DiffusivitySpec::linear(), 1.0);
        REQUIRE(testsupport::max_abs_diff(b.data(), ref) <= 1e-12);
        REQUIRE(std::fabs(a[0] - b[0]) > 1e-3); // spacing genuinely matters
    }

    SECTION("stability, conservation, max-min, contraction") {
        const ImageVolume v = testsupport::random_volume(rng, {9, 7, 3});
        const double mean0 = nldiff::mean_grey(v);
        const double lo = v.min_value(), hi = v.max_value();
        const double norm0 = testsupport::l1_norm(v.data());
        const double dist0 = nldiff::rel_dist_to_mean(v);
        for (double k : {1.0, 100.0, 10000.0, 1000000.0}) {
            for (const auto& spec :
                 {DiffusivitySpec::linear(), DiffusivitySpec::proposed(0.02, 4.0),
                  DiffusivitySpec::perona_malik(0.2),
                  DiffusivitySpec::regularized_power(0.05, 2.0)}) {
                // the regularized power's conductance blows up near flat
                // regions, so it is only reliable at moderate time steps
                if (spec.kind == DiffusivitySpec::Kind::regularized_power && k > 1e2) continue;
                FilterConfig cfg;
                cfg.k = k;
                cfg.diffusivity = spec;
                const auto out = nldiff::aos_step(v, cfg);
                REQUIRE(testsupport::l1_norm(out.data()) <= norm0 + 1e-12);
                REQUIRE(nldiff::mean_grey(out) == Approx(mean0).margin(1e-10));
                REQUIRE(out.min_value() >= lo - 1e-10);
                REQUIRE(out.max_value() <= hi + 1e-10);
                REQUIRE(nldiff::rel_dist_to_mean(out) <= dist0 + 1e-12);
            }
        }
    }

    SECTION("worker count does not change the bytes") {
        const ImageVolume v = testsupport::random_volume(rng, {12, 11});
        FilterConfig one = proposed_config(150.0, 0.02, 3.0);
        one.threads = 1;
        FilterConfig four = one;
        four.threads = 4;
        const auto a = nldiff::aos_step(v, one);
        const auto b = nldiff::aos_step(v, four);
        for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(a[i] == b[i]);
    }

    SECTION("rejects the bounded step and bad shapes") {
        const ImageVolume v = testsupport::random_volume(rng, {4, 4});
        FilterConfig cfg;
        cfg.diffusivity = DiffusivitySpec::bounded_step(0.5);
        REQUIRE_THROWS_AS(nldiff::aos_step(v, cfg), std::invalid_argument);
        const ImageVolume thin({1, 4}, {0, 0, 0, 0});
        REQUIRE_THROWS_AS(nldiff::aos_step(thin, linear_config(1.0)), std::invalid_argument);
    }
}

TEST_CASE("explicit step") {
    SECTION("constant volumes are fixed points") {
        const ImageVolume c({4}, std::vector<double>(4, 0.2));
        const auto out = nldiff::explicit_step(c, linear_config(0.1));
        for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(out[i] == 0.2);
    }
    SECTION("two-point linear step by hand") {
        const ImageVolume v({2}, {0.0, 1.0});
        const auto out = nldiff::explicit_step(v, linear_config(0.25));
        REQUIRE(out[0] == Approx(0.25).margin(1e-15));
        REQUIRE(out[1] == Approx(0.75).margin(1e-15));
    }
    SECTION("enforces the stability limit") {
        const ImageVolume v({8}, {0, 1, 0, 1, 0, 1, 0, 1});
        REQUIRE_THROWS_AS(nldiff::explicit_step(v, linear_config(0.51)), nldiff::numerical_error);
        REQUIRE_NOTHROW(nldiff::explicit_step(v, linear_config(0.25)));
    }
    SECTION("agrees with the semi-implicit step to O(k^2)") {
        std::vector<double> data(32);
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = 0.5 + 0.3 * std::sin(0.4 * double(i));
        const ImageVolume v({32}, std::move(data));
        double prev_err = -1.0;
        for (double k : {1e-3, 5e-4, 2.5e-4}) {
            const auto cfg = proposed_config(k, 0.05, 2.0);
            const auto ex = nldiff::explicit_step(v, cfg);
            const auto im = nldiff::aos_step(v, cfg);
            const double err = testsupport::max_abs_diff(ex.data(), im.data());
            if (prev_err > 0.0) REQUIRE(err <= 0.3 * prev_err); // ~4x drop per halving
            prev_err = err;
        }
        REQUIRE(prev_err <= 1e-6);
    }
}

TEST_CASE("filter_run") {
    std::mt19937 rng(41);

    SECTION("zero steps returns the input") {
        const ImageVolume v = testsupport::random_volume(rng, {6, 5});
        FilterConfig cfg = proposed_config(200.0, 0.02, 4.0);
        cfg.steps = 0;
        const auto res = nldiff::filter_run(v, cfg);
        for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(res.image[i] == v[i]);
        REQUIRE(res.steps_used == 0);
        REQUIRE(res.trace.size() == 1);
    }

    SECTION("linear diffusion settles toward the mean") {
        const ImageVolume v = testsupport::random_volume(rng, {12, 12}, 0.2, 0.9);
        FilterConfig cfg = linear_config(50.0);
        cfg.steps = 200;
        const auto res = nldiff::filter_run(v, cfg);
        REQUIRE(nldiff::rel_dist_to_mean(res.image) < 0.02);
        REQUIRE(res.trace.size() == 201);
        // trace rows carry the settling history
        REQUIRE(res.trace.front().rel_dist > res.trace.back().rel_dist);
    }

    SECTION("step image: proposed keeps the jump linear diffusion destroys") {
        // two plateaus 0.2 | 0.8 on 64 samples, k = 200; values locked from
        // the oracle run
        const ImageVolume step = testsupport::step_line(64, 0.2, 0.8);
        auto jump = [](const ImageVolume& u) { return std::fabs(u[32] - u[31]); };
        auto plateau_range = [](const ImageVolume& u, std::size_t lo, std::size_t hi) {
            double mn = 1e300, mx = -1e300;
            for (std::size_t i = lo; i < hi; ++i) {
                mn = std::min(mn, u[i]);
                mx = std::max(mx, u[i]);
            }
            return mx - mn;
        };

        FilterConfig prop = proposed_config(200.0, 0.02, 4.0);
        prop.steps = 40;
        FilterConfig lin = linear_config(200.0);
        lin.steps = 40;
        const ImageVolume fp = nldiff::filter_run(step, prop).image;
        const ImageVolume fl = nldiff::filter_run(step, lin).image;
        REQUIRE(jump(fp) > jump(fl));
        REQUIRE(jump(fp) == Approx(1.7996662271535513e-08).epsilon(1e-6));
        REQUIRE(jump(fl) == Approx(2.761927520023022e-09).epsilon(1e-6));

        // with the threshold an order of magnitude below the squared slope,
        // the jump survives while the plateaus flatten out
        FilterConfig sharp = proposed_config(200.0, 1e-3, 4.0);
        sharp.steps = 9; // settling steps of this signal at k = 200
        const ImageVolume fs = nldiff::filter_run(step, sharp).image;
        REQUIRE(jump(fs) == Approx(0.59938398872005239).epsilon(1e-9));
        REQUIRE(plateau_range(fs, 0, 32) < 0.01 * jump(fs));
        REQUIRE(plateau_range(fs, 32, 64) < 0.01 * jump(fs));
    }

    SECTION("diagnostics rows are consistent") {
        const ImageVolume v = testsupport::random_volume(rng, {8, 8});
        FilterConfig cfg = proposed_config(100.0, 0.05, 2.0);
        cfg.steps = 3;
        const auto res = nldiff::filter_run(v, cfg);
        REQUIRE(res.trace.size() == 4);
        for (int i = 0; i < 4; ++i) REQUIRE(res.trace[size_t(i)].step == i);
        REQUIRE(res.trace[0].mean == Approx(nldiff::mean_grey(v)).margin(1e-15));
        std::ostringstream csv;
        nldiff::write_diagnostics_csv(csv, res.trace);
        const std::string text = csv.str();
        REQUIRE(text.starts_with("step,mean,min,max,rel_dist_to_mean\n"));
        REQUIRE(std::count(text.begin(), text.end(), '\n') == 5);
    }
}

TEST_CASE("newton diagnostic") {
    SECTION("flat data keeps the picard matrix and is SPD") {
        const std::vector<double> line{0.5, 0.505, 0.51, 0.505}; // slopes below gamma
        const auto spec = DiffusivitySpec::proposed(0.02, 2.0);
        const auto rep = nldiff::newton_diagnostic(line, 1.0, 10.0, spec);
        REQUIRE(rep.spd);
        REQUIRE(rep.min_pivot > 0.0);
        const auto gs = nldiff::half_point_diffusivities(line, 1.0, spec);
        const auto picard = nldiff::to_step_system(nldiff::assemble_axis_operator(gs, 1.0), 10.0);
        for (std::size_t i = 0; i < picard.size(); ++i)
            REQUIRE(rep.iteration_matrix.diag[i] == Approx(picard.diag[i]).margin(1e-14));
        for (std::size_t i = 0; i + 1 < picard.size(); ++i)
            REQUIRE(rep.iteration_matrix.lower[i] == Approx(picard.lower[i]).margin(1e-14));
    }

    SECTION("linear diffusivity is always SPD") {
        const std::vector<double> line{0.0, 1.0, 0.0, 1.0};
        const auto rep = nldiff::newton_diagnostic(line, 1.0, 1e6, DiffusivitySpec::linear());
        REQUIRE(rep.spd);
    }

    SECTION("steep data with large p and k breaks positive definiteness") {
        const std::vector<double> line{0.0, 1.0};
        const auto rep =
            nldiff::newton_diagnostic(line, 1.0, 1e4, DiffusivitySpec::proposed(0.02, 4.0));
        REQUIRE_FALSE(rep.spd);
        REQUIRE(rep.min_pivot <= 0.0);
    }
}
