#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "moi2d/montecarlo.hpp"
#include "moi2d/solution.hpp"

using namespace moi2d;

TEST_CASE("simulation is bitwise identical across thread counts") {
    const auto problem = make_sim_problem({0.5, -0.3}, {-1.0, -1.2}, -0.5);
    SimConfig cfg;
    cfg.dt = 2e-3;
    cfg.n_traj = 4000;
    cfg.horizon = 0.8;
    cfg.seed = 42;
    cfg.n_threads = 1;
    const auto one = simulate(problem, cfg, {0.4});
    cfg.n_threads = 3;
    const auto three = simulate(problem, cfg, {0.4});

    REQUIRE(one.records.size() == three.records.size());
    for (std::size_t i = 0; i < one.records.size(); ++i) {
        const auto& a = one.records[i];
        const auto& b = three.records[i];
        CHECK(a.absorption_time.has_value() == b.absorption_time.has_value());
        if (a.absorption_time) CHECK(*a.absorption_time == *b.absorption_time);
        CHECK(a.boundary == b.boundary);
        CHECK(a.final_position == b.final_position);
    }
    REQUIRE(one.snapshot_positions.size() == 1);
    REQUIRE(one.snapshot_positions[0].size() == three.snapshot_positions[0].size());
    for (std::size_t i = 0; i < one.snapshot_positions[0].size(); ++i)
        CHECK(one.snapshot_positions[0][i] == three.snapshot_positions[0][i]);
}

TEST_CASE("per-trajectory streams make prefixes independent of batch size") {
    const auto problem = make_sim_problem({0.0, 0.0}, {-1.0, -1.0}, -0.5);
    SimConfig small;
    small.dt = 1e-2;
    small.n_traj = 100;
    small.horizon = 0.5;
    small.seed = 7;
    SimConfig big = small;
    big.n_traj = 1000;
    const auto a = simulate(problem, small);
    const auto b = simulate(problem, big);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(a.records[i].final_position == b.records[i].final_position);
        CHECK(a.records[i].boundary == b.records[i].boundary);
    }
}

TEST_CASE("increment moments match mu dt and Sigma dt") {
    const double rho = -0.7, dt = 1e-2;
    const Vec2 mu{0.4, -0.8}, s0{-50.0, -50.0}; // deep inside: nothing absorbs
    SimConfig cfg;
    cfg.dt = dt;
    cfg.n_traj = 1000000;
    cfg.horizon = 1.5 * dt; // exactly one step
    cfg.seed = 99;
    const auto batch = simulate(make_sim_problem(mu, s0, rho), cfg);
    REQUIRE(batch.survived == cfg.n_traj);

    const auto n = static_cast<double>(cfg.n_traj);
    double m1 = 0, m2 = 0;
    for (const auto& r : batch.records) {
        m1 += r.final_position.x1 - s0.x1;
        m2 += r.final_position.x2 - s0.x2;
    }
    m1 /= n;
    m2 /= n;
    double c11 = 0, c12 = 0, c22 = 0;
    for (const auto& r : batch.records) {
        const double d1 = r.final_position.x1 - s0.x1 - m1;
        const double d2 = r.final_position.x2 - s0.x2 - m2;
        c11 += d1 * d1;
        c12 += d1 * d2;
        c22 += d2 * d2;
    }
    c11 /= n - 1;
    c12 /= n - 1;
    c22 /= n - 1;

    const double se_mean = std::sqrt(dt / n);
    CHECK(std::fabs(m1 - mu.x1 * dt) < 5 * se_mean);
    CHECK(std::fabs(m2 - mu.x2 * dt) < 5 * se_mean);
    const double se_var = dt * std::sqrt(2.0 / n);
    const double se_cov = dt * std::sqrt((1.0 + rho * rho) / n);
    CHECK(std::fabs(c11 - dt) < 5 * se_var);
    CHECK(std::fabs(c22 - dt) < 5 * se_var);
    CHECK(std::fabs(c12 - rho * dt) < 5 * se_cov);
}

TEST_CASE("deep starts do not absorb over short horizons") {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_traj = 10000;
    cfg.horizon = 0.1;
    cfg.seed = 3;
    const auto batch = simulate(make_sim_problem({0, 0}, {-10, -10}, -0.5), cfg);
    CHECK(batch.absorbed_b1 + batch.absorbed_b2 <= 5);
}

TEST_CASE("rho = -1 trajectories stay on the anti-diagonal line") {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_traj = 500;
    cfg.horizon = 1.0;
    cfg.seed = 17;
    const auto batch =
        simulate(make_sim_problem({0, 0}, {-2, -2}, -1.0), cfg, {0.25, 0.5, 1.0});
    for (const auto& snap : batch.snapshot_positions)
        for (const Vec2& p : snap)
            CHECK(std::fabs(p.x1 + p.x2 + 4.0) < 1e-9);
    for (const auto& rec : batch.records)
        CHECK(std::fabs(rec.final_position.x1 + rec.final_position.x2 + 4.0) < 1e-9);
}

TEST_CASE("empirical survival: exact at t = 0, monotone, horizon-guarded") {
    SimConfig cfg;
    cfg.dt = 2e-3;
    cfg.n_traj = 5000;
    cfg.horizon = 1.0;
    cfg.seed = 5;
    const auto batch = simulate(make_sim_problem({1.0, 0.5}, {-1, -1}, -0.5), cfg);
    std::vector<double> times{0.0};
    for (int i = 1; i <= 20; ++i) times.push_back(i * 0.05);
    const auto surv = empirical_survival(batch, times);
    CHECK(surv.front() == 1.0);
    for (std::size_t i = 1; i < surv.size(); ++i) CHECK(surv[i] <= surv[i - 1]);
    CHECK_THROWS_AS(empirical_survival(batch, {1.5}), std::invalid_argument);
}

TEST_CASE("empirical_pdf bookkeeping identity and mode location") {
    const auto spec = validate_spec({{1, 2}, {-1.5, -1.5}, SolvableK::finite(3)});
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_traj = 20000;
    cfg.horizon = 0.5;
    cfg.seed = 11;
    const auto batch = simulate(make_sim_problem(spec), cfg, {0.5});
    const double t = batch.snapshot_times[0];

    const auto grid = auto_cover_grid(batch, 0, 24, 24);
    const auto hist = empirical_pdf(batch, t, grid);
    const double s_emp = empirical_survival(batch, {t}).front();
    CHECK(hist.out_of_grid_mass == 0.0);
    CHECK_THAT(hist.total_mass, Catch::Matchers::WithinAbs(s_emp, 1e-12));

    // histogram peak should land near the analytic mode
    const auto eval = make_evaluator(spec);
    std::size_t best_i = 0, best_j = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < grid.n1; ++i)
        for (std::size_t j = 0; j < grid.n2; ++j)
            if (hist.mass[i * grid.n2 + j] > best) {
                best = hist.mass[i * grid.n2 + j];
                best_i = i;
                best_j = j;
            }
    Vec2 mode{0, 0};
    double mode_val = -1.0;
    for (int i = 0; i < 120; ++i)
        for (int j = 0; j < 120; ++j) {
            const Vec2 x{-4.0 + 4.0 * (i + 0.5) / 120.0, -4.0 + 4.0 * (j + 0.5) / 120.0};
            const double v = eval.pdf(x, t).value;
            if (v > mode_val) {
                mode_val = v;
                mode = x;
            }
        }
    const double w1 = (grid.x1_max - grid.x1_min) / grid.n1;
    const double w2 = (grid.x2_max - grid.x2_min) / grid.n2;
    CHECK(std::fabs(grid.center1(best_i) - mode.x1) < 3.0 * w1);
    CHECK(std::fabs(grid.center2(best_j) - mode.x2) < 3.0 * w2);

    CHECK_THROWS_AS(empirical_pdf(batch, 0.123, grid), std::invalid_argument);
}

TEST_CASE("histogram L1 distance to the analytic field shrinks with more trajectories") {
    const auto spec = validate_spec({{1, 2}, {-1.5, -1.5}, SolvableK::finite(3)});
    const auto eval = make_evaluator(spec);
    const double t = 0.5;
    const BinGrid grid{-4.0, 0.0, 10, -4.0, 0.0, 10};
    std::vector<double> analytic(grid.n1 * grid.n2);
    for (std::size_t i = 0; i < grid.n1; ++i)
        for (std::size_t j = 0; j < grid.n2; ++j)
            analytic[i * grid.n2 + j] =
                eval.bin_mass({grid.edge1(i), grid.edge2(j)},
                              {grid.edge1(i + 1), grid.edge2(j + 1)}, t);

    auto l1_for = [&](std::int64_t n) {
        SimConfig cfg;
        cfg.dt = 1e-3;
        cfg.n_traj = n;
        cfg.horizon = 0.5;
        cfg.seed = 23;
        const auto batch = simulate(make_sim_problem(spec), cfg, {0.5});
        const auto hist = empirical_pdf(batch, batch.snapshot_times[0], grid);
        return compare_histogram(analytic, hist).l1_distance;
    };
    CHECK(l1_for(50000) < l1_for(12500));
}

TEST_CASE("compare_curves: identical inputs give zero z, mismatches are flagged") {
    const std::vector<double> t{0.2, 0.4, 0.6};
    const std::vector<double> a{0.9, 0.7, 0.5};
    const auto same = compare_curves(t, a, a, 10000);
    for (const auto& p : same.points) CHECK(p.z == 0.0);
    CHECK(same.sup_abs_discrepancy == 0.0);
    CHECK(same.frac_z_within_3 == 1.0);

    const std::vector<double> off{0.9, 0.75, 0.5}; // 0.05 off at one point
    const auto bad = compare_curves(t, a, off, 10000);
    CHECK(bad.frac_z_within_3 < 1.0);
    CHECK(bad.max_abs_z > 3.0);

    CHECK_THROWS_AS(compare_curves(t, a, {0.9, 0.7}, 100), std::invalid_argument);
}

TEST_CASE("a deliberately wrong analytic rho is detected by compare") {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_traj = 30000;
    cfg.horizon = 1.0;
    cfg.seed = 31;
    const auto batch = simulate(make_sim_problem({2, 1}, {-1.5, -1.5}, -0.5), cfg);
    std::vector<double> times;
    for (int i = 1; i <= 20; ++i) times.push_back(i * 0.05);
    const auto emp = empirical_survival(batch, times);

    const auto right = make_evaluator(
        validate_spec({{2, 1}, {-1.5, -1.5}, SolvableK::finite(3)}));
    const auto wrong = make_evaluator(
        validate_spec({{2, 1}, {-1.5, -1.5}, SolvableK::finite(8)}));
    std::vector<double> right_s, wrong_s;
    for (const double t : times) {
        right_s.push_back(right.survival(t));
        wrong_s.push_back(wrong.survival(t));
    }
    const double allowance = 1.5 * std::sqrt(cfg.dt);
    const auto ok = compare_curves(times, right_s, emp, cfg.n_traj, allowance);
    const auto flagged = compare_curves(times, wrong_s, emp, cfg.n_traj, allowance);
    CHECK(ok.frac_z_within_3 >= 0.95);
    CHECK(flagged.frac_z_within_3 < 0.95); // fails the acceptance gate
    CHECK(flagged.max_abs_z > 10.0);
}

TEST_CASE("Euler bias inflates survival and shrinks with dt") {
    const auto spec = validate_spec({{2, 1}, {-1.5, -1.5}, SolvableK::finite(3)});
    const double analytic = make_evaluator(spec).survival(1.0);
    const auto problem = make_sim_problem(spec);

    double bias[3];
    double se[3];
    const double dts[3] = {4e-3, 1e-3, 2.5e-4};
    for (int i = 0; i < 3; ++i) {
        SimConfig cfg;
        cfg.dt = dts[i];
        cfg.n_traj = 50000;
        cfg.horizon = 1.0;
        cfg.seed = 1234;
        const auto batch = simulate(problem, cfg);
        const double emp = empirical_survival(batch, {1.0}).front();
        bias[i] = emp - analytic;
        se[i] = std::sqrt(emp * (1.0 - emp) / static_cast<double>(cfg.n_traj));
    }
    for (int i = 0; i < 3; ++i) CHECK(bias[i] > -3.0 * se[i]); // never below truth
    // monotone trend at the 3-sigma level
    CHECK(bias[0] > bias[1] - 3.0 * std::hypot(se[0], se[1]));
    CHECK(bias[1] > bias[2] - 3.0 * std::hypot(se[1], se[2]));
    // coarse step has a clearly significant bias
    CHECK(bias[0] > 3.0 * se[0]);
}

TEST_CASE("bridge correction removes most of the crossing bias") {
    const auto spec = validate_spec({{2, 1}, {-1.5, -1.5}, SolvableK::finite(3)});
    const double analytic = make_evaluator(spec).survival(1.0);
    SimConfig cfg;
    cfg.dt = 4e-3;
    cfg.n_traj = 50000;
    cfg.horizon = 1.0;
    cfg.seed = 77;
    const auto plain = simulate(make_sim_problem(spec), cfg);
    cfg.bridge_correction = true;
    const auto bridged = simulate(make_sim_problem(spec), cfg);
    const double bias_plain =
        empirical_survival(plain, {1.0}).front() - analytic;
    const double bias_bridged =
        empirical_survival(bridged, {1.0}).front() - analytic;
    CHECK(std::fabs(bias_bridged) < bias_plain);
}

TEST_CASE("configuration and problem validation") {
    CHECK_THROWS_AS(make_sim_problem({0, 0}, {-1, -1}, 0.2), std::domain_error);
    CHECK_THROWS_AS(make_sim_problem({0, 0}, {-1, -1}, -1.2), std::domain_error);
    CHECK_THROWS_AS(make_sim_problem({0, 0}, {1, -1}, -0.5), std::domain_error);
    const auto problem = make_sim_problem({0, 0}, {-1, -1}, -0.5);
    SimConfig cfg;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(simulate(problem, cfg), std::invalid_argument);
    cfg.dt = 1e-3;
    cfg.n_traj = 0;
    CHECK_THROWS_AS(simulate(problem, cfg), std::invalid_argument);
    cfg.n_traj = 10;
    cfg.horizon = 0.1;
    CHECK_THROWS_AS(simulate(problem, cfg, {0.5}), std::invalid_argument);
}
