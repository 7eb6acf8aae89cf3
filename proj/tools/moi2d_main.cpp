// moi2d command-line front end: closed-form image solutions for correlated
// 2D drift-diffusion absorbed at the two axis-aligned boundaries, plus the
// Euler-Maruyama validation side (simulation, comparison, rho sweeps).

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moi2d/bvn.hpp"
#include "moi2d/correlation.hpp"
#include "moi2d/images.hpp"
#include "moi2d/io.hpp"
#include "moi2d/montecarlo.hpp"
#include "moi2d/solution.hpp"
#include "moi2d/version.hpp"

namespace {

using moi2d::json;

struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

moi2d::Vec2 parse_vec2(const std::string& s, const char* flag) {
    const auto comma = s.find(',');
    if (comma == std::string::npos)
        throw usage_error(std::string(flag) + ": expected 'a,b', got '" + s + "'");
    try {
        return {moi2d::parse_double(s.substr(0, comma)),
                moi2d::parse_double(s.substr(comma + 1))};
    } catch (const std::exception&) {
        throw usage_error(std::string(flag) + ": malformed number in '" + s + "'");
    }
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
    std::vector<double> out;
    std::string cur;
    try {
        for (const char c : s + ",") {
            if (c == ',') {
                if (!cur.empty()) out.push_back(moi2d::parse_double(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    } catch (const std::exception&) {
        throw usage_error(std::string(flag) + ": malformed list '" + s + "'");
    }
    return out;
}

moi2d::GridSpec parse_grid(const std::string& s) {
    // x1min:x1max:n,x2min:x2max:n
    const auto comma = s.find(',');
    if (comma == std::string::npos)
        throw usage_error("--grid: expected 'x1min:x1max:n,x2min:x2max:n'");
    auto parse_axis = [](const std::string& a) {
        const auto c1 = a.find(':');
        const auto c2 = a.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw usage_error("--grid: expected 'min:max:count' per axis, got '" + a + "'");
        const double lo = moi2d::parse_double(a.substr(0, c1));
        const double hi = moi2d::parse_double(a.substr(c1 + 1, c2 - c1 - 1));
        const long n = std::stol(a.substr(c2 + 1));
        if (n < 2) throw usage_error("--grid: each axis needs at least 2 points");
        return std::tuple<double, double, std::size_t>{lo, hi, static_cast<std::size_t>(n)};
    };
    const auto [l1, h1, n1] = parse_axis(s.substr(0, comma));
    const auto [l2, h2, n2] = parse_axis(s.substr(comma + 1));
    return {l1, h1, n1, l2, h2, n2};
}

/// Shared closed-form problem flags: correlation by --k or --rho (the latter
/// must hit the solvable family exactly), start point and drift.
struct SpecArgs {
    std::optional<std::uint32_t> k;
    std::optional<double> rho;
    std::string s0_str;
    std::string mu_str = "0,0";

    void attach(CLI::App* cmd) {
        auto* ko = cmd->add_option("--k", k, "solvable correlation index k >= 2");
        auto* ro = cmd->add_option(
            "--rho", rho, "correlation; must equal -cos(pi/k) for some integer k >= 2");
        ko->excludes(ro);
        ro->excludes(ko);
        cmd->add_option("--s0", s0_str, "start point 'a,b', strictly inside Q_III")
            ->required();
        cmd->add_option("--mu", mu_str, "drift vector 'a,b' (default 0,0)");
    }

    moi2d::CheckedSpec resolve() const {
        if (!k && !rho) throw usage_error("one of --k or --rho is required");
        const moi2d::SolvableK sk =
            k ? moi2d::SolvableK::finite(*k) : moi2d::solvable_from_rho(*rho);
        return moi2d::validate_spec(
            {parse_vec2(mu_str, "--mu"), parse_vec2(s0_str, "--s0"), sk});
    }

    json params_json() const {
        json p;
        if (k) p["k"] = *k;
        if (rho) p["rho"] = *rho;
        p["s0"] = s0_str;
        p["mu"] = mu_str;
        return p;
    }
};

std::vector<double> time_grid(double tmax, std::size_t steps) {
    std::vector<double> t(steps);
    for (std::size_t i = 0; i < steps; ++i)
        t[i] = tmax * static_cast<double>(i + 1) / static_cast<double>(steps);
    return t;
}

int cmd_list_rho(std::uint32_t max_k) {
    if (max_k < 2) throw usage_error("--max-k must be >= 2");
    std::printf("%4s  %-22s  %-22s  %6s\n", "k", "rho", "alpha", "images");
    for (std::uint32_t k = 2; k <= max_k; ++k) {
        const auto sk = moi2d::SolvableK::finite(k);
        const auto ang = moi2d::angles_from_k(sk);
        std::printf("%4u  %-22.16g  %-22.16g  %6u\n", k, sk.rho(), ang.alpha, 2 * k);
    }
    return 0;
}

int cmd_images(const SpecArgs& args, const std::string& formalism,
               const std::string& out_path) {
    const auto spec = args.resolve();
    json doc;
    moi2d::RunManifest manifest;
    manifest.cmd = "images";
    manifest.params = args.params_json();
    manifest.params["formalism"] = formalism;
    doc["manifest"] = manifest.to_json();

    int rc = 0;
    if (formalism == "mapping") {
        doc["image_set"] = moi2d::image_set_to_json(moi2d::build_image_set_mapping(spec));
    } else if (formalism == "rotation") {
        doc["image_set"] = moi2d::image_set_to_json(moi2d::build_image_set_rotation(spec));
    } else if (formalism == "both") {
        const auto ms = moi2d::build_image_set_mapping(spec);
        const auto rs = moi2d::build_image_set_rotation(spec);
        double max_dist = 0.0;
        for (std::size_t j = 0; j < ms.size(); ++j)
            max_dist = std::max(max_dist, moi2d::norm(ms.sources[j] - rs.sources[j]));
        doc["image_set"] = moi2d::image_set_to_json(ms);
        doc["rotation_image_set"] = moi2d::image_set_to_json(rs);
        json cc;
        cc["max_source_distance"] = max_dist;
        cc["pass"] = max_dist <= 1e-10;
        doc["cross_check"] = std::move(cc);
        if (max_dist > 1e-10) {
            std::fprintf(stderr,
                         "images: mapping and rotation formalisms disagree by %g\n",
                         max_dist);
            rc = 3;
        }
    } else {
        throw usage_error("--formalism must be mapping, rotation or both");
    }

    const std::string text = doc.dump(2) + "\n";
    if (out_path.empty()) std::fputs(text.c_str(), stdout);
    else {
        moi2d::write_text_file(out_path, text);
        std::printf("wrote %s\n", out_path.c_str());
    }
    return rc;
}

int cmd_pdf(const SpecArgs& args, double t, const std::string& grid_str,
            const std::string& format, const std::string& out_path) {
    const auto spec = args.resolve();
    const auto grid = parse_grid(grid_str);
    const auto eval = moi2d::make_evaluator(spec);
    const auto pts = moi2d::evaluate_grid(eval, grid, t);

    moi2d::RunManifest manifest;
    manifest.cmd = "pdf";
    manifest.params = args.params_json();
    manifest.params["t"] = t;
    manifest.params["grid"] = grid_str;
    manifest.params["format"] = format;

    if (format == "csv") {
        moi2d::write_text_file(out_path, moi2d::grid_to_csv(pts));
        moi2d::write_manifest_sidecar(out_path, manifest);
    } else if (format == "json") {
        json doc;
        doc["manifest"] = manifest.to_json();
        doc.update(moi2d::grid_to_json(pts));
        moi2d::write_text_file(out_path, doc.dump(2) + "\n");
    } else {
        throw usage_error("--format must be csv or json");
    }
    std::printf("wrote %s (%zu points)\n", out_path.c_str(), pts.size());
    return 0;
}

int cmd_survival(const SpecArgs& args, double tmax, std::size_t steps,
                 const std::string& out_path) {
    if (!(tmax > 0.0)) throw usage_error("--tmax must be > 0");
    if (steps < 1) throw usage_error("--steps must be >= 1");
    const auto spec = args.resolve();
    const auto eval = moi2d::make_evaluator(spec);
    const auto times = time_grid(tmax, steps);
    std::vector<double> surv;
    surv.reserve(times.size());
    for (const double t : times) surv.push_back(eval.survival(t));

    moi2d::RunManifest manifest;
    manifest.cmd = "survival";
    manifest.params = args.params_json();
    manifest.params["tmax"] = tmax;
    manifest.params["steps"] = steps;
    moi2d::write_text_file(out_path, moi2d::survival_to_csv(times, surv));
    moi2d::write_manifest_sidecar(out_path, manifest);
    std::printf("wrote %s (%zu points)\n", out_path.c_str(), times.size());
    return 0;
}

int cmd_simulate(const SpecArgs& args, const moi2d::SimConfig& config,
                 std::size_t steps, const std::string& snapshots_str,
                 const std::string& hist_bins_str, const std::string& out_path) {
    // --rho here may be any value in [-1, 0]: simulation is not restricted to
    // the solvable family.
    moi2d::SimProblem problem;
    if (args.k) {
        problem = moi2d::make_sim_problem(moi2d::validate_spec(
            {parse_vec2(args.mu_str, "--mu"), parse_vec2(args.s0_str, "--s0"),
             moi2d::SolvableK::finite(*args.k)}));
    } else if (args.rho) {
        problem = moi2d::make_sim_problem(parse_vec2(args.mu_str, "--mu"),
                                          parse_vec2(args.s0_str, "--s0"), *args.rho);
    } else {
        throw usage_error("one of --k or --rho is required");
    }
    const std::vector<double> snaps =
        snapshots_str.empty() ? std::vector<double>{}
                              : parse_list(snapshots_str, "--snapshots");
    const auto batch = moi2d::simulate(problem, config, snaps);
    const auto times = time_grid(batch.realized_horizon, steps);
    const auto surv = moi2d::empirical_survival(batch, times);

    moi2d::RunManifest manifest;
    manifest.cmd = "simulate";
    manifest.params = args.params_json();
    manifest.params["dt"] = config.dt;
    manifest.params["n"] = config.n_traj;
    manifest.params["horizon"] = config.horizon;
    manifest.params["steps"] = steps;
    manifest.params["snapshots"] = snapshots_str;
    manifest.params["hist_bins"] = hist_bins_str;
    manifest.params["bridge_correction"] = config.bridge_correction;
    manifest.seed = config.seed;

    json doc;
    doc["manifest"] = manifest.to_json();
    doc.update(moi2d::simulation_to_json(batch, times, surv));
    moi2d::write_text_file(out_path, doc.dump(2) + "\n");

    if (!hist_bins_str.empty()) {
        const auto g = parse_grid(hist_bins_str);
        const moi2d::BinGrid bins{g.x1_min, g.x1_max, g.n1, g.x2_min, g.x2_max, g.n2};
        for (std::size_t si = 0; si < batch.snapshot_times.size(); ++si) {
            const auto hist =
                moi2d::empirical_pdf(batch, batch.snapshot_times[si], bins);
            const std::string hist_path =
                out_path + ".hist" + std::to_string(si) + ".csv";
            moi2d::write_text_file(hist_path, moi2d::histogram_to_csv(hist));
            moi2d::write_manifest_sidecar(hist_path, manifest);
            std::printf("wrote %s (t = %g, binned mass %g)\n", hist_path.c_str(),
                        hist.t, hist.total_mass);
        }
    }
    std::printf("wrote %s (absorbed B1 %" PRId64 ", B2 %" PRId64 ", survived %" PRId64
                ")\n",
                out_path.c_str(), batch.absorbed_b1, batch.absorbed_b2, batch.survived);
    return 0;
}

int cmd_compare(const std::string& analytic_path, const std::string& empirical_path,
                std::optional<double> bias_allowance, const std::string& out_path) {
    const auto analytic = moi2d::read_survival_csv(analytic_path);
    const auto sim = moi2d::simulation_from_json(json::parse(moi2d::read_text_file(empirical_path)));
    if (analytic.times.size() != sim.curve.times.size())
        throw std::invalid_argument("compare: time grids differ in length");
    for (std::size_t i = 0; i < analytic.times.size(); ++i)
        if (std::fabs(analytic.times[i] - sim.curve.times[i]) > 1e-9)
            throw std::invalid_argument("compare: time grids differ at index " +
                                        std::to_string(i));
    const double allowance =
        bias_allowance ? *bias_allowance : 1.5 * std::sqrt(sim.config.dt);
    const auto rep = moi2d::compare_curves(analytic.times, analytic.survival,
                                           sim.curve.survival, sim.config.n_traj,
                                           allowance);
    const bool pass = rep.frac_z_within_3 >= 0.95;

    moi2d::RunManifest manifest;
    manifest.cmd = "compare";
    manifest.params["analytic_file"] = analytic_path;
    manifest.params["empirical_file"] = empirical_path;
    manifest.params["bias_allowance"] = allowance;
    json doc;
    doc["manifest"] = manifest.to_json();
    doc.update(moi2d::comparison_to_json(rep, sim.config.n_traj, pass));
    if (!out_path.empty()) moi2d::write_text_file(out_path, doc.dump(2) + "\n");
    std::printf("compare: sup|d| = %.3g, %.1f%% of %zu points with |z| <= 3 -> %s\n",
                rep.sup_abs_discrepancy, 100.0 * rep.frac_z_within_3, rep.n_z_points,
                pass ? "PASS" : "FAIL");
    return pass ? 0 : 1;
}

int cmd_sweep_rho(const std::string& rhos_str, double t, const std::string& s0_str,
                  const std::string& mu_str, moi2d::SimConfig config,
                  const std::string& out_path) {
    const auto rhos = parse_list(rhos_str, "--rhos");
    if (rhos.empty()) throw usage_error("--rhos: need at least one value");
    const auto s0 = parse_vec2(s0_str, "--s0");
    const auto mu = parse_vec2(mu_str, "--mu");
    config.horizon = t;
    std::vector<moi2d::SweepRow> rows;
    for (const double rho : rhos) {
        const auto problem = moi2d::make_sim_problem(mu, s0, rho);
        const auto batch = moi2d::simulate(problem, config);
        const double s_emp = moi2d::empirical_survival(batch, {t}).front();
        const double se = std::sqrt(s_emp * (1.0 - s_emp) /
                                    static_cast<double>(config.n_traj));
        std::optional<double> s_ana;
        try {
            const auto k = moi2d::solvable_from_rho(rho);
            if (!k.is_infinite()) {
                const auto spec = moi2d::validate_spec({mu, s0, k});
                s_ana = moi2d::make_evaluator(spec).survival(t);
            }
        } catch (const std::domain_error&) {
            // unsolvable rho: simulation only
        }
        rows.push_back({rho, s_emp, se, s_ana});
    }
    moi2d::RunManifest manifest;
    manifest.cmd = "sweep-rho";
    manifest.params["rhos"] = rhos_str;
    manifest.params["t"] = t;
    manifest.params["s0"] = s0_str;
    manifest.params["mu"] = mu_str;
    manifest.params["dt"] = config.dt;
    manifest.params["n"] = config.n_traj;
    manifest.seed = config.seed;
    moi2d::write_text_file(out_path, moi2d::sweep_to_csv(rows));
    moi2d::write_manifest_sidecar(out_path, manifest);
    std::printf("wrote %s (%zu rho values)\n", out_path.c_str(), rows.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"closed-form image solutions and Monte Carlo validation for "
                 "correlated 2D drift-diffusion with two absorbing boundaries"};
    app.require_subcommand(1);
    app.set_version_flag("--version", moi2d::version);

    // list-rho
    auto* list = app.add_subcommand("list-rho", "print the solvable correlation family");
    std::uint32_t max_k = 8;
    list->add_option("--max-k", max_k, "largest k to print")->required();

    // images
    auto* images = app.add_subcommand("images", "construct the 2k image sources and weights");
    SpecArgs images_args;
    images_args.attach(images);
    std::string images_formalism = "mapping";
    std::string images_out;
    images->add_option("--formalism", images_formalism, "mapping | rotation | both");
    images->add_option("--out", images_out, "output JSON path (stdout when omitted)");

    // pdf
    auto* pdf = app.add_subcommand("pdf", "evaluate the density on a grid");
    SpecArgs pdf_args;
    pdf_args.attach(pdf);
    double pdf_t = 1.0;
    std::string pdf_grid, pdf_format = "csv", pdf_out;
    pdf->add_option("--t", pdf_t, "evaluation time")->required();
    pdf->add_option("--grid", pdf_grid, "x1min:x1max:n,x2min:x2max:n")->required();
    pdf->add_option("--format", pdf_format, "csv | json");
    pdf->add_option("--out", pdf_out, "output path")->required();

    // survival
    auto* surv = app.add_subcommand("survival", "survival probability curve");
    SpecArgs surv_args;
    surv_args.attach(surv);
    double surv_tmax = 2.0;
    std::size_t surv_steps = 50;
    std::string surv_out;
    surv->add_option("--tmax", surv_tmax, "curve end time")->required();
    surv->add_option("--steps", surv_steps, "number of grid points (default 50)");
    surv->add_option("--out", surv_out, "output CSV path")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Euler-Maruyama trajectories");
    SpecArgs sim_args;
    sim_args.attach(sim);
    moi2d::SimConfig sim_config;
    std::size_t sim_steps = 50;
    std::string sim_snapshots, sim_hist_bins, sim_out;
    sim->add_option("--dt", sim_config.dt, "time step (default 1e-3)");
    sim->add_option("--n", sim_config.n_traj, "trajectories (default 50000)");
    sim->add_option("--horizon", sim_config.horizon, "simulation end time")->required();
    sim->add_option("--seed", sim_config.seed, "RNG seed (default 1)");
    sim->add_flag("--bridge", sim_config.bridge_correction,
                  "enable the marginal bridge-crossing correction");
    sim->add_option("--threads", sim_config.n_threads, "worker threads (0 = auto)");
    sim->add_option("--steps", sim_steps, "survival curve grid points (default 50)");
    sim->add_option("--snapshots", sim_snapshots, "comma list of snapshot times");
    sim->add_option("--hist-bins", sim_hist_bins,
                    "x1min:x1max:bins,x2min:x2max:bins; writes a histogram CSV "
                    "per snapshot");
    sim->add_option("--out", sim_out, "output JSON path")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "analytic vs empirical survival");
    std::string cmp_analytic, cmp_empirical, cmp_out;
    std::optional<double> cmp_allowance;
    cmp->add_option("--analytic-file", cmp_analytic, "survival CSV")->required();
    cmp->add_option("--empirical-file", cmp_empirical, "simulate JSON")->required();
    cmp->add_option("--bias-allowance", cmp_allowance,
                    "additive discrepancy allowance (default 1.5 sqrt(dt))");
    cmp->add_option("--out", cmp_out, "report JSON path");

    // sweep-rho
    auto* sweep = app.add_subcommand("sweep-rho", "empirical survival across rho");
    std::string sweep_rhos, sweep_s0, sweep_mu = "0,0", sweep_out;
    double sweep_t = 1.0;
    moi2d::SimConfig sweep_config;
    sweep->add_option("--rhos", sweep_rhos, "comma list of rho in [-1,0]")->required();
    sweep->add_option("--t", sweep_t, "evaluation time")->required();
    sweep->add_option("--s0", sweep_s0, "start point 'a,b'")->required();
    sweep->add_option("--mu", sweep_mu, "drift 'a,b' (default 0,0)");
    sweep->add_option("--dt", sweep_config.dt, "time step (default 1e-3)");
    sweep->add_option("--n", sweep_config.n_traj, "trajectories (default 50000)");
    sweep->add_option("--seed", sweep_config.seed, "RNG seed (default 1)");
    sweep->add_option("--threads", sweep_config.n_threads, "worker threads (0 = auto)");
    sweep->add_option("--out", sweep_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (list->parsed()) return cmd_list_rho(max_k);
        if (images->parsed()) return cmd_images(images_args, images_formalism, images_out);
        if (pdf->parsed()) return cmd_pdf(pdf_args, pdf_t, pdf_grid, pdf_format, pdf_out);
        if (surv->parsed()) return cmd_survival(surv_args, surv_tmax, surv_steps, surv_out);
        if (sim->parsed())
            return cmd_simulate(sim_args, sim_config, sim_steps, sim_snapshots,
                                sim_hist_bins, sim_out);
        if (cmp->parsed()) return cmd_compare(cmp_analytic, cmp_empirical, cmp_allowance, cmp_out);
        if (sweep->parsed())
            return cmd_sweep_rho(sweep_rhos, sweep_t, sweep_s0, sweep_mu, sweep_config,
                                 sweep_out);
    } catch (const usage_error& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const moi2d::internal_error& e) {
        std::fprintf(stderr, "internal consistency error: %s\n", e.what());
        return 3;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return 1;
    } catch (const std::overflow_error& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
