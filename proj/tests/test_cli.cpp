#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "moi2d/io.hpp"

#ifndef MOI2D_CLI_PATH
#error "MOI2D_CLI_PATH must point at the built CLI binary"
#endif

namespace {

struct RunResult {
    int exit_code;
    std::string output; // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(MOI2D_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("moi2d_cli_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

moi2d::json strip_timestamp(moi2d::json j) {
    if (j.contains("manifest")) j["manifest"].erase("timestamp");
    return j;
}

} // namespace

TEST_CASE("list-rho prints the family table and rejects max-k < 2") {
    const auto ok = run_cli("list-rho --max-k 3");
    CHECK(ok.exit_code == 0);
    CHECK_THAT(ok.output, Catch::Matchers::ContainsSubstring("-0.5"));
    CHECK_THAT(ok.output, Catch::Matchers::ContainsSubstring("images"));

    const auto eight = run_cli("list-rho --max-k 8");
    CHECK(eight.exit_code == 0);
    CHECK_THAT(eight.output, Catch::Matchers::ContainsSubstring("-0.92387953251128"));

    CHECK(run_cli("list-rho --max-k 1").exit_code == 2);
    CHECK(run_cli("list-rho").exit_code == 2);
    CHECK(run_cli("frobnicate").exit_code == 2);
}

TEST_CASE("images emits both formalisms with a passing cross check") {
    TempDir dir;
    const auto r = run_cli("images --k 3 --s0 -1.5,-1.5 --mu 1,2 --formalism both --out " +
                           dir.file("img.json"));
    REQUIRE(r.exit_code == 0);
    const auto doc = moi2d::json::parse(moi2d::read_text_file(dir.file("img.json")));
    CHECK(doc.at("cross_check").at("pass") == true);
    const auto set = moi2d::image_set_from_json(doc.at("image_set"));
    REQUIRE(set.size() == 6);
    CHECK_THAT(set.sources[1].x1, Catch::Matchers::WithinAbs(-3.0, 1e-12));
    CHECK_THAT(set.sources[1].x2, Catch::Matchers::WithinAbs(1.5, 1e-12));
    CHECK(moi2d::verify_image_set(set).ok());
}

TEST_CASE("pdf writes a grid whose boundary rows vanish") {
    TempDir dir;
    const auto out = dir.file("field.csv");
    const auto r = run_cli("pdf --k 3 --s0 -1.5,-1.5 --mu 1,2 --t 0.5 "
                           "--grid -4:0:9,-4:0:9 --out " + out);
    REQUIRE(r.exit_code == 0);
    const auto pts = moi2d::read_grid_csv(out);
    REQUIRE(pts.size() == 81);
    double peak = 0.0;
    for (const auto& p : pts) peak = std::max(peak, p.xi);
    CHECK(peak > 0.1);
    for (const auto& p : pts)
        if (p.x1 == 0.0 || p.x2 == 0.0) CHECK(std::fabs(p.xi) < 1e-12 * peak);
    CHECK(std::filesystem::exists(out + ".manifest.json"));

    const auto rj = run_cli("pdf --k 3 --s0 -1.5,-1.5 --mu 1,2 --t 0.5 "
                            "--grid -4:0:5,-4:0:5 --format json --out " +
                            dir.file("field.json"));
    CHECK(rj.exit_code == 0);
    const auto doc = moi2d::json::parse(moi2d::read_text_file(dir.file("field.json")));
    CHECK(doc.at("rows").size() == 25);
    CHECK(doc.at("manifest").at("cmd") == "pdf");
}

TEST_CASE("survival curve starts at one and the file round-trips") {
    TempDir dir;
    const auto out = dir.file("surv.csv");
    const auto r =
        run_cli("survival --k 3 --s0 -1.5,-1.5 --mu 2,1 --tmax 2 --steps 50 --out " + out);
    REQUIRE(r.exit_code == 0);
    const auto curve = moi2d::read_survival_csv(out);
    REQUIRE(curve.times.size() == 50);
    CHECK(curve.times.front() == 0.04);
    CHECK(curve.survival.front() > 0.999);
    for (std::size_t i = 1; i < curve.survival.size(); ++i)
        CHECK(curve.survival[i] <= curve.survival[i - 1] + 1e-12);
}

TEST_CASE("domain violations exit 1 naming the violated condition") {
    TempDir dir;
    const auto bad_s0 = run_cli("survival --k 3 --s0 1,1 --tmax 1 --out " + dir.file("x.csv"));
    CHECK(bad_s0.exit_code == 1);
    CHECK_THAT(bad_s0.output, Catch::Matchers::ContainsSubstring("third quadrant"));

    for (const std::string rho : {"0.3", "-0.3", "-0.6"}) {
        const auto r = run_cli("pdf --rho " + rho +
                               " --s0 -1,-1 --t 1 --grid -2:0:4,-2:0:4 --out " +
                               dir.file("y.csv"));
        CHECK(r.exit_code == 1);
        CHECK_THAT(r.output, Catch::Matchers::ContainsSubstring("-cos(pi/k)"));
    }
    // simulation is not restricted to the solvable family
    const auto sim = run_cli("simulate --rho -0.6 --s0 -1,-1 --dt 0.01 --n 200 "
                             "--horizon 0.2 --out " + dir.file("sim.json"));
    CHECK(sim.exit_code == 0);
}

TEST_CASE("malformed flags exit 2") {
    TempDir dir;
    CHECK(run_cli("pdf --k 3 --s0 -1,-1 --t 1 --grid nonsense --out " +
                  dir.file("z.csv")).exit_code == 2);
    CHECK(run_cli("pdf --k 3 --s0 badpair --t 1 --grid -2:0:4,-2:0:4 --out " +
                  dir.file("z.csv")).exit_code == 2);
    CHECK(run_cli("survival --k 3 --s0 -1,-1 --tmax 1").exit_code == 2); // missing --out
    CHECK(run_cli("images --k 3 --rho -0.5 --s0 -1,-1").exit_code == 2); // exclusive
}

TEST_CASE("simulate then compare: matched curves pass, outputs are reproducible") {
    TempDir dir;
    const std::string surv_file = dir.file("analytic.csv");
    const std::string sim_file = dir.file("sim.json");
    const std::string sim_file2 = dir.file("sim2.json");
    REQUIRE(run_cli("survival --k 3 --s0 -1.5,-1.5 --mu 2,1 --tmax 1 --steps 20 --out " +
                    surv_file).exit_code == 0);
    REQUIRE(run_cli("simulate --k 3 --s0 -1.5,-1.5 --mu 2,1 --dt 2e-3 --n 4000 "
                    "--horizon 1 --steps 20 --seed 5 --out " + sim_file).exit_code == 0);
    const auto cmp = run_cli("compare --analytic-file " + surv_file +
                             " --empirical-file " + sim_file + " --out " +
                             dir.file("report.json"));
    CHECK(cmp.exit_code == 0);
    CHECK_THAT(cmp.output, Catch::Matchers::ContainsSubstring("PASS"));
    const auto report =
        moi2d::json::parse(moi2d::read_text_file(dir.file("report.json")));
    CHECK(report.at("pass") == true);
    CHECK(report.at("frac_z_within_3").get<double>() >= 0.95);

    // byte-identical reruns modulo the manifest timestamp
    REQUIRE(run_cli("simulate --k 3 --s0 -1.5,-1.5 --mu 2,1 --dt 2e-3 --n 4000 "
                    "--horizon 1 --steps 20 --seed 5 --out " + sim_file2).exit_code == 0);
    const auto j1 =
        strip_timestamp(moi2d::json::parse(moi2d::read_text_file(sim_file)));
    const auto j2 =
        strip_timestamp(moi2d::json::parse(moi2d::read_text_file(sim_file2)));
    CHECK(j1 == j2);
}

TEST_CASE("simulate --hist-bins writes parseable histogram CSVs") {
    TempDir dir;
    const std::string sim_file = dir.file("simh.json");
    REQUIRE(run_cli("simulate --k 3 --s0 -1.5,-1.5 --mu 1,2 --dt 2e-3 --n 3000 "
                    "--horizon 0.5 --snapshots 0.25,0.5 --hist-bins -4:0:8,-4:0:8 "
                    "--seed 9 --out " + sim_file).exit_code == 0);
    for (const std::string suffix : {".hist0.csv", ".hist1.csv"}) {
        const auto rows = moi2d::read_histogram_csv(sim_file + suffix);
        REQUIRE(rows.size() == 64);
        double total = 0.0;
        for (const auto& r : rows) total += r.mass;
        CHECK(total > 0.1);
        CHECK(total <= 1.0 + 1e-12);
    }
}

TEST_CASE("compare report round-trips through the module reader") {
    TempDir dir;
    const std::string surv_file = dir.file("a.csv");
    const std::string sim_file = dir.file("e.json");
    const std::string report_file = dir.file("r.json");
    REQUIRE(run_cli("survival --k 3 --s0 -1.5,-1.5 --mu 2,1 --tmax 1 --steps 10 --out " +
                    surv_file).exit_code == 0);
    REQUIRE(run_cli("simulate --k 3 --s0 -1.5,-1.5 --mu 2,1 --dt 5e-3 --n 1000 "
                    "--horizon 1 --steps 10 --seed 4 --out " + sim_file).exit_code == 0);
    REQUIRE(run_cli("compare --analytic-file " + surv_file + " --empirical-file " +
                    sim_file + " --out " + report_file).exit_code == 0);
    const auto rep = moi2d::comparison_from_json(
        moi2d::json::parse(moi2d::read_text_file(report_file)));
    CHECK(rep.points.size() == 10);
    CHECK(rep.frac_z_within_3 >= 0.95);
    CHECK(rep.bias_allowance > 0.0);
}

TEST_CASE("sweep-rho marks analytic survival only at solvable correlations") {
    TempDir dir;
    const auto out = dir.file("sweep.csv");
    const auto r = run_cli("sweep-rho --rhos -0.5,-0.25 --t 0.5 --s0 -1.5,-1.5 "
                           "--mu 2,1 --dt 5e-3 --n 2000 --seed 3 --out " + out);
    REQUIRE(r.exit_code == 0);
    const auto rows = moi2d::read_sweep_csv(out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].analytic_survival.has_value());
    CHECK_FALSE(rows[1].analytic_survival.has_value());
    CHECK(std::fabs(rows[0].empirical_survival - *rows[0].analytic_survival) < 0.05);
}
