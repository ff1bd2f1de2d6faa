// Command-line front end for the piecewise-constant diffusion filter.
//
// Subcommands: filter, settle, estimate-gamma, tune, edges, compare.
// Exit codes: 0 success, 2 usage, 3 I/O failure, 4 bad file format,
// 5 numerical failure, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nldiff/nldiff.hpp"

namespace {

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool has_pgm_extension(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    return ext == ".pgm" || ext == ".PGM" || ext == ".pnm" || ext == ".PNM";
}

struct LoadedVolume {
    nldiff::ImageVolume volume;
    bool from_pgm = false;
};

// PGM and u8/u16 raw data arrive already mapped onto [0,1]; float volumes
// (CT and friends) carry arbitrary ranges and get a min-max rescale unless
// the caller opts out.
LoadedVolume load_input(const std::string& path, bool no_normalize) {
    LoadedVolume in;
    if (has_pgm_extension(path)) {
        in.volume = nldiff::load_pgm_file(path);
        in.from_pgm = true;
        return in;
    }
    in.volume = nldiff::load_raw3d_file(path);
    const double lo = in.volume.min_value();
    const double hi = in.volume.max_value();
    if (!no_normalize && (lo < 0.0 || hi > 1.0)) in.volume = nldiff::normalized(in.volume);
    return in;
}

nldiff::RawDType parse_dtype(const std::string& name) {
    if (name == "u8") return nldiff::RawDType::u8;
    if (name == "u16") return nldiff::RawDType::u16;
    if (name == "f32") return nldiff::RawDType::f32;
    throw usage_error("unknown dtype '" + name + "' (use u8, u16 or f32)");
}

void save_output(const nldiff::ImageVolume& v, const std::string& path, unsigned maxval,
                 const std::string& dtype) {
    if (v.rank() == 2 && has_pgm_extension(path))
        nldiff::save_pgm_file(v, path, maxval);
    else
        nldiff::save_raw3d_file(v, path, parse_dtype(dtype));
}

// Shared diffusivity flags.
struct DiffusivityFlags {
    std::string name = "proposed";
    std::string gamma = "auto";
    double p = 4.0;
    double tau = 0.1;
    double epsilon = 0.01;

    void attach(CLI::App* cmd) {
        cmd->add_option("--diffusivity", name,
                        "proposed | perona-malik | regularized | linear")
            ->default_str(name);
        cmd->add_option("--gamma", gamma,
                        "contrast threshold for 'proposed': auto (robust estimate) or a value")
            ->default_str(gamma);
        cmd->add_option("--p", p, "diffusivity exponent (> 1)")->default_str("4");
        cmd->add_option("--tau", tau, "perona-malik contrast scale")->default_str("0.1");
        cmd->add_option("--epsilon", epsilon, "regularized-power floor")->default_str("0.01");
    }

    double resolve_gamma(const nldiff::ImageVolume& v) const {
        if (gamma == "auto") {
            const auto est = nldiff::estimate_gamma(v);
            if (est.degenerate)
                std::cerr << "warning: degenerate gradient statistics, gamma floored at "
                          << nldiff::gamma_floor << "\n";
            return est.gamma;
        }
        try {
            std::size_t pos = 0;
            const double value = std::stod(gamma, &pos);
            if (pos != gamma.size() || !(value > 0.0)) throw std::invalid_argument(gamma);
            return value;
        } catch (const std::exception&) {
            throw usage_error("--gamma expects 'auto' or a positive number, got '" + gamma + "'");
        }
    }

    nldiff::DiffusivitySpec build(const std::string& which,
                                  const nldiff::ImageVolume& v) const {
        if (which == "proposed")
            return nldiff::DiffusivitySpec::proposed(resolve_gamma(v), p);
        if (which == "perona-malik")
            return nldiff::DiffusivitySpec::perona_malik(tau);
        if (which == "regularized")
            return nldiff::DiffusivitySpec::regularized_power(epsilon, p);
        if (which == "linear") return nldiff::DiffusivitySpec::linear();
        throw usage_error("unknown diffusivity '" + which + "'");
    }
};

std::optional<int> parse_steps(const std::string& steps) {
    if (steps == "auto") return std::nullopt;
    try {
        std::size_t pos = 0;
        const int n = std::stoi(steps, &pos);
        if (pos != steps.size() || n < 0) throw std::invalid_argument(steps);
        return n;
    } catch (const std::exception&) {
        throw usage_error("--steps expects 'auto' or a non-negative integer, got '" + steps + "'");
    }
}

std::vector<double> parse_p_grid(const std::string& grid) {
    // start:step:end, inclusive
    const auto c1 = grid.find(':');
    const auto c2 = grid.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw usage_error("--p-grid expects start:step:end, got '" + grid + "'");
    double start, step, end;
    try {
        start = std::stod(grid.substr(0, c1));
        step = std::stod(grid.substr(c1 + 1, c2 - c1 - 1));
        end = std::stod(grid.substr(c2 + 1));
    } catch (const std::exception&) {
        throw usage_error("--p-grid expects start:step:end, got '" + grid + "'");
    }
    if (!(step > 0.0) || end < start) throw usage_error("--p-grid range is empty");
    std::vector<double> ps;
    for (int i = 0;; ++i) {
        const double p = start + step * i;
        if (p > end + step * 1e-9) break;
        ps.push_back(p);
    }
    return ps;
}

nldiff::EdgeMap load_truth(const std::string& path) {
    return nldiff::edge_map_from_volume(nldiff::load_pgm_file(path));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nldiff — nonlinear diffusion filtering toward piecewise-constant images"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "read option defaults from a key = value file "
                   "(subcommand options as e.g. filter.k = 200)");

    int threads = 0;
    app.add_option("--threads", threads,
                   "worker threads (default: NLDIFF_THREADS env, then hardware)");

    // ---- filter ----------------------------------------------------------
    auto* cmd_filter = app.add_subcommand("filter", "run the diffusion filter on an image/volume");
    cmd_filter->fallthrough();
    std::string fil_in, fil_out, fil_steps = "auto", fil_diag, fil_dtype = "f32";
    double fil_k = 200.0, fil_picard_tol = 1e-8, fil_threshold = 0.02;
    int fil_picard = 0, fil_settle_max = 1'000'000;
    unsigned fil_maxval = 255;
    bool fil_no_normalize = false;
    DiffusivityFlags fil_diff;
    cmd_filter->add_option("input", fil_in, "input image (.pgm) or raw volume header")->required();
    cmd_filter->add_option("output", fil_out, "output path (.pgm for 2-D, raw header otherwise)")
        ->required();
    cmd_filter->add_option("--k", fil_k, "time step size")->default_str("200");
    cmd_filter->add_option("--steps", fil_steps, "step count, or 'auto' for the settling time")
        ->default_str("auto");
    fil_diff.attach(cmd_filter);
    cmd_filter->add_option("--picard", fil_picard,
                           "fixed-point iterations per step (experimental; 0 = semi-implicit)")
        ->default_str("0");
    cmd_filter->add_option("--picard-tol", fil_picard_tol, "fixed-point residual tolerance");
    cmd_filter->add_option("--settle-threshold", fil_threshold,
                           "relative distance to the mean that counts as settled")
        ->default_str("0.02");
    cmd_filter->add_option("--settle-max", fil_settle_max, "settling search cap");
    cmd_filter->add_option("--diagnostics", fil_diag,
                           "per-step diagnostics CSV (default: <output>.diag.csv)");
    cmd_filter->add_option("--maxval", fil_maxval, "grey levels for PGM output")->default_str("255");
    cmd_filter->add_option("--dtype", fil_dtype, "sample type for raw output (u8|u16|f32)")
        ->default_str("f32");
    cmd_filter->add_flag("--no-normalize", fil_no_normalize,
                         "keep raw float volumes on their native intensity range");

    // ---- settle ----------------------------------------------------------
    auto* cmd_settle = app.add_subcommand("settle", "settling time of the linear problem");
    cmd_settle->fallthrough();
    std::string set_in;
    double set_k = 200.0, set_threshold = 0.02;
    int set_max = 1'000'000;
    bool set_no_normalize = false;
    cmd_settle->add_option("input", set_in)->required();
    cmd_settle->add_option("--k", set_k, "time step size")->default_str("200");
    cmd_settle->add_option("--settle-threshold", set_threshold)->default_str("0.02");
    cmd_settle->add_option("--settle-max", set_max);
    cmd_settle->add_flag("--no-normalize", set_no_normalize);

    // ---- estimate-gamma ---------------------------------------------------
    auto* cmd_gamma =
        app.add_subcommand("estimate-gamma", "robust contrast threshold from gradient statistics");
    cmd_gamma->fallthrough();
    cmd_gamma->alias("estimate_gamma");
    std::string gam_in;
    bool gam_no_normalize = false;
    cmd_gamma->add_option("input", gam_in)->required();
    cmd_gamma->add_flag("--no-normalize", gam_no_normalize);

    // ---- tune -------------------------------------------------------------
    auto* cmd_tune = app.add_subcommand("tune", "select p against a ground-truth edge map");
    cmd_tune->fallthrough();
    std::string tun_in, tun_truth, tun_grid = "1.5:0.5:20", tun_out;
    double tun_k = 200.0, tun_alpha = 0.5, tun_sigma = 1.0;
    int tun_tolerance = 0;
    cmd_tune->add_option("input", tun_in)->required();
    cmd_tune->add_option("truth", tun_truth, "ground-truth edges, binary PGM")->required();
    cmd_tune->add_option("--p-grid", tun_grid, "p sweep as start:step:end")
        ->default_str("1.5:0.5:20");
    cmd_tune->add_option("--k", tun_k, "time step size")->default_str("200");
    cmd_tune->add_option("--alpha", tun_alpha, "F-measure weight")->default_str("0.5");
    cmd_tune->add_option("--sigma", tun_sigma, "edge detector scale")->default_str("1");
    cmd_tune->add_option("--match-tolerance", tun_tolerance,
                         "pixel slack when matching edges (0 = exact coincidence)");
    cmd_tune->add_option("--out", tun_out, "report CSV path (default: <input>.tuning.csv)");

    // ---- edges ------------------------------------------------------------
    auto* cmd_edges = app.add_subcommand("edges", "detect edges and write a binary map");
    cmd_edges->fallthrough();
    std::string edg_in, edg_out;
    double edg_sigma = 1.0;
    cmd_edges->add_option("input", edg_in)->required();
    cmd_edges->add_option("output", edg_out, "edge map (PGM for 2-D input)")->required();
    cmd_edges->add_option("--sigma", edg_sigma, "smoothing scale")->default_str("1");

    // ---- compare ----------------------------------------------------------
    auto* cmd_compare =
        app.add_subcommand("compare", "run two diffusivities on one image and score both");
    cmd_compare->fallthrough();
    std::string cmp_in, cmp_truth, cmp_a = "proposed", cmp_b = "linear", cmp_steps = "auto";
    double cmp_k = 200.0, cmp_alpha = 0.5, cmp_sigma = 1.0;
    int cmp_tolerance = 0;
    DiffusivityFlags cmp_diff;
    cmd_compare->add_option("input", cmp_in)->required();
    cmd_compare->add_option("truth", cmp_truth, "ground-truth edges, binary PGM")->required();
    cmd_compare->add_option("--a", cmp_a, "first diffusivity")->default_str("proposed");
    cmd_compare->add_option("--b", cmp_b, "second diffusivity")->default_str("linear");
    cmd_compare->add_option("--k", cmp_k, "time step size")->default_str("200");
    cmd_compare->add_option("--steps", cmp_steps, "step count or 'auto'")->default_str("auto");
    cmd_compare->add_option("--alpha", cmp_alpha)->default_str("0.5");
    cmd_compare->add_option("--sigma", cmp_sigma)->default_str("1");
    cmd_compare->add_option("--match-tolerance", cmp_tolerance);
    cmp_diff.attach(cmd_compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_filter->parsed()) {
            const LoadedVolume in = load_input(fil_in, fil_no_normalize);
            nldiff::FilterConfig cfg;
            cfg.k = fil_k;
            cfg.steps = parse_steps(fil_steps);
            cfg.diffusivity = fil_diff.build(fil_diff.name, in.volume);
            cfg.picard_depth = fil_picard;
            cfg.picard_tol = fil_picard_tol;
            cfg.settle_threshold = fil_threshold;
            cfg.settle_n_max = fil_settle_max;
            cfg.threads = threads;
            const nldiff::FilterResult res = nldiff::filter_run(in.volume, cfg);
            save_output(res.image, fil_out, fil_maxval, fil_dtype);

            const std::string diag_path = fil_diag.empty() ? fil_out + ".diag.csv" : fil_diag;
            std::ofstream diag(diag_path);
            if (!diag) throw nldiff::io_error("cannot open '" + diag_path + "' for writing");
            nldiff::write_diagnostics_csv(diag, res.trace);

            char line[160];
            std::snprintf(line, sizeof line, "steps=%d k=%.17g final_rel_dist=%.17g\n",
                          res.steps_used, cfg.k, res.trace.back().rel_dist);
            std::cout << line;
        } else if (cmd_settle->parsed()) {
            const LoadedVolume in = load_input(set_in, set_no_normalize);
            const nldiff::SettlingResult res =
                nldiff::settling_time(in.volume, set_k, set_threshold, set_max, threads);
            char line[160];
            std::snprintf(line, sizeof line, "n=%d T=%.17g ratio=%.17g\n", res.steps, res.time,
                          res.ratio);
            std::cout << line;
        } else if (cmd_gamma->parsed()) {
            const LoadedVolume in = load_input(gam_in, gam_no_normalize);
            const nldiff::GammaEstimate est = nldiff::estimate_gamma(in.volume);
            if (est.degenerate)
                std::cerr << "warning: degenerate gradient statistics, gamma floored\n";
            char line[64];
            std::snprintf(line, sizeof line, "gamma=%.17g\n", est.gamma);
            std::cout << line;
        } else if (cmd_tune->parsed()) {
            const LoadedVolume in = load_input(tun_in, false);
            const nldiff::EdgeMap truth = load_truth(tun_truth);
            nldiff::TuneOptions opts;
            opts.k = tun_k;
            opts.alpha = tun_alpha;
            opts.canny.sigma = tun_sigma;
            opts.match_tolerance = tun_tolerance;
            opts.threads = threads;
            const std::vector<double> grid = parse_p_grid(tun_grid);
            const nldiff::TuningReport report = nldiff::tune_p(in.volume, truth, grid, opts);

            const std::string out_path = tun_out.empty() ? tun_in + ".tuning.csv" : tun_out;
            std::ofstream out(out_path);
            if (!out) throw nldiff::io_error("cannot open '" + out_path + "' for writing");
            nldiff::write_csv(report, out);

            char line[200];
            std::snprintf(line, sizeof line, "p_star=%.17g f=%.17g f0=%.17g gamma=%.17g n=%d\n",
                          report.p_star, report.f_star, report.f0, report.gamma, report.steps);
            std::cout << line;
        } else if (cmd_edges->parsed()) {
            const LoadedVolume in = load_input(edg_in, false);
            nldiff::CannyOptions opts;
            opts.sigma = edg_sigma;
            if (in.volume.rank() == 2) {
                const nldiff::EdgeMap map = detect_edges(in.volume, opts);
                nldiff::save_pgm_file(edge_map_to_volume(map), edg_out, 255);
                std::cout << "edges=" << map.count() << "\n";
            } else {
                // slice-wise along the slowest axis
                const auto& dims = in.volume.dims();
                const std::size_t slice = dims[1] * dims[2];
                std::vector<double> mask(in.volume.size());
                std::size_t total = 0;
                for (std::size_t z = 0; z < dims[0]; ++z) {
                    std::vector<double> plane(in.volume.data().begin() + z * slice,
                                              in.volume.data().begin() + (z + 1) * slice);
                    nldiff::ImageVolume img({dims[1], dims[2]}, std::move(plane));
                    const nldiff::EdgeMap map = detect_edges(img, opts);
                    total += map.count();
                    for (std::size_t i = 0; i < slice; ++i)
                        mask[z * slice + i] = map.mask()[i] ? 1.0 : 0.0;
                }
                nldiff::ImageVolume out({dims[0], dims[1], dims[2]}, std::move(mask),
                                        in.volume.spacing());
                nldiff::save_raw3d_file(out, edg_out, nldiff::RawDType::u8);
                std::cout << "edges=" << total << "\n";
            }
        } else if (cmd_compare->parsed()) {
            const LoadedVolume in = load_input(cmp_in, false);
            const nldiff::EdgeMap truth = load_truth(cmp_truth);
            const std::optional<int> steps = parse_steps(cmp_steps);
            nldiff::CannyOptions canny;
            canny.sigma = cmp_sigma;

            auto score = [&](const std::string& which) {
                nldiff::FilterConfig cfg;
                cfg.k = cmp_k;
                cfg.steps = steps;
                cfg.diffusivity = cmp_diff.build(which, in.volume);
                cfg.threads = threads;
                const nldiff::FilterResult run = nldiff::filter_run(in.volume, cfg);
                const nldiff::EdgeMap detected = detect_edges(run.image, canny);
                const nldiff::PrecisionRecall pr =
                    precision_recall(truth, detected, cmp_tolerance);
                const double f = (pr.detected_empty || (pr.precision == 0.0 && pr.recall == 0.0))
                                     ? 0.0
                                     : nldiff::f_measure(pr.precision, pr.recall, cmp_alpha);
                char line[200];
                std::snprintf(line, sizeof line, "%s: P=%.6g R=%.6g F=%.6g n=%d\n", which.c_str(),
                              pr.precision, pr.recall, f, run.steps_used);
                std::cout << line;
                return f;
            };
            const double fa = score(cmp_a);
            const double fb = score(cmp_b);
            std::cout << (fa > fb ? cmp_a : fb > fa ? cmp_b : std::string("tie")) << "\n";
        }
    } catch (const usage_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nldiff::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const nldiff::format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const nldiff::numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
