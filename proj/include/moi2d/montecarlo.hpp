#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "moi2d/correlation.hpp"
#include "moi2d/rng.hpp"
#include "moi2d/solution.hpp"
#include "moi2d/vec2.hpp"

namespace moi2d {

/// Simulation accepts any rho in [-1, 0], not just the solvable family: the
/// empirical side of the validation sweeps needs the in-between values.
struct SimProblem {
    Vec2 mu;
    Vec2 s0;
    double rho = 0.0;
};

inline SimProblem make_sim_problem(Vec2 mu, Vec2 s0, double rho) {
    if (!std::isfinite(mu.x1) || !std::isfinite(mu.x2) || !std::isfinite(s0.x1) ||
        !std::isfinite(s0.x2) || !std::isfinite(rho))
        throw std::invalid_argument("make_sim_problem: non-finite input");
    if (!(s0.x1 < 0.0 && s0.x2 < 0.0))
        throw std::domain_error("make_sim_problem: start point must be strictly inside "
                                "the third quadrant");
    if (rho < -1.0 || rho > 0.0)
        throw std::domain_error("make_sim_problem: rho must lie in [-1, 0]");
    return {mu, s0, rho};
}

inline SimProblem make_sim_problem(const CheckedSpec& spec) {
    return {spec.mu(), spec.s0(), spec.rho()};
}

struct SimConfig {
    double dt = 1e-3;
    std::int64_t n_traj = 50000;
    double horizon = 1.0;
    std::uint64_t seed = 1;
    bool bridge_correction = false; // marginal Brownian-bridge crossing check
    int n_threads = 0;              // 0 = hardware concurrency; never affects results
};

enum class BoundaryId { none, b1, b2 };

struct TrajectoryRecord {
    std::optional<double> absorption_time; // empty <=> survived to the horizon
    BoundaryId boundary = BoundaryId::none;
    Vec2 final_position;
};

struct TrajectoryBatch {
    SimProblem problem;
    SimConfig config;
    double realized_horizon = 0.0; // n_steps * dt
    std::vector<TrajectoryRecord> records;
    std::vector<double> snapshot_times;                  // realized, multiples of dt
    std::vector<std::vector<Vec2>> snapshot_positions;   // survivors, trajectory order

    std::int64_t absorbed_b1 = 0;
    std::int64_t absorbed_b2 = 0;
    std::int64_t survived = 0;
};

/// Euler-Maruyama simulation of dx = mu dt + xi(t): per step
/// x <- x + mu dt + sqrt(dt) L z with L the lower Cholesky factor of Sigma.
/// A trajectory is absorbed at the first step that ends with x1 >= 0 (B2) or
/// x2 >= 0 (B1); if both crossed, the larger overshoot wins (exact tie: B1).
/// Noise is drawn from a counter-based stream keyed by (seed, trajectory,
/// step), so the batch is bitwise identical for any thread count.
inline TrajectoryBatch simulate(const SimProblem& problem, const SimConfig& config,
                                const std::vector<double>& snapshot_times = {}) {
    if (!(config.dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
    if (!(config.horizon > config.dt))
        throw std::invalid_argument("simulate: horizon must exceed dt");
    if (config.n_traj < 1) throw std::invalid_argument("simulate: n_traj must be >= 1");

    const std::int64_t n_steps =
        static_cast<std::int64_t>(std::floor(config.horizon / config.dt + 1e-9));
    const double dt = config.dt;
    const double sdt = std::sqrt(dt);
    const double rho = problem.rho;
    const double chol = std::sqrt((1.0 - rho) * (1.0 + rho));
    const std::uint64_t bridge_key = config.seed ^ 0xB5297A4D3F84C5C1ull;

    TrajectoryBatch batch;
    batch.problem = problem;
    batch.config = config;
    batch.realized_horizon = static_cast<double>(n_steps) * dt;
    batch.records.resize(static_cast<std::size_t>(config.n_traj));

    // snapshot step indices (kept in request order)
    std::vector<std::int64_t> snap_steps;
    for (const double ts : snapshot_times) {
        if (!(ts > 0.0) || ts > batch.realized_horizon + 1e-9)
            throw std::invalid_argument("simulate: snapshot time outside (0, horizon]");
        snap_steps.push_back(std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::llround(ts / dt)), 1, n_steps));
    }
    for (const std::int64_t s : snap_steps)
        batch.snapshot_times.push_back(static_cast<double>(s) * dt);

    const std::size_t n_snap = snap_steps.size();
    const auto n_traj = static_cast<std::size_t>(config.n_traj);
    std::vector<std::vector<Vec2>> snap_pos(n_snap, std::vector<Vec2>(n_traj));
    std::vector<std::vector<char>> snap_alive(n_snap, std::vector<char>(n_traj, 0));

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Vec2 x = problem.s0;
            TrajectoryRecord rec;
            for (std::int64_t n = 1; n <= n_steps; ++n) {
                const auto [z1, z2] = normal_pair(static_cast<std::uint64_t>(n),
                                                  static_cast<std::uint64_t>(i),
                                                  config.seed);
                const Vec2 prev = x;
                x.x1 += problem.mu.x1 * dt + sdt * z1;
                x.x2 += problem.mu.x2 * dt + sdt * (rho * z1 + chol * z2);

                if (x.x1 >= 0.0 || x.x2 >= 0.0) {
                    rec.absorption_time = static_cast<double>(n) * dt;
                    if (x.x1 >= 0.0 && x.x2 >= 0.0)
                        rec.boundary = (x.x1 > x.x2) ? BoundaryId::b2 : BoundaryId::b1;
                    else
                        rec.boundary = (x.x1 >= 0.0) ? BoundaryId::b2 : BoundaryId::b1;
                    rec.final_position = x;
                    break;
                }
                if (config.bridge_correction) {
                    // marginal bridge crossing probabilities (correlation between
                    // the two coordinate bridges is ignored)
                    const double p1 = std::exp(-2.0 * prev.x2 * x.x2 / dt);
                    const double p2 = std::exp(-2.0 * prev.x1 * x.x1 / dt);
                    const double u = uniform_from_bits(
                        Philox2x64::block(static_cast<std::uint64_t>(n),
                                          static_cast<std::uint64_t>(i), bridge_key)
                            .first);
                    if (u < p1 + (1.0 - p1) * p2) {
                        rec.absorption_time = static_cast<double>(n) * dt;
                        rec.boundary = (u < p1) ? BoundaryId::b1 : BoundaryId::b2;
                        rec.final_position = x;
                        break;
                    }
                }
                for (std::size_t si = 0; si < n_snap; ++si) {
                    if (snap_steps[si] == n) {
                        snap_pos[si][i] = x;
                        snap_alive[si][i] = 1;
                    }
                }
            }
            if (!rec.absorption_time) rec.final_position = x;
            batch.records[i] = rec;
        }
    };

    int n_threads = config.n_threads > 0
                        ? config.n_threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, 64));
    if (n_threads == 1 || n_traj < 256) {
        run_range(0, n_traj);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n_traj + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n_traj, lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // compact snapshots in trajectory order (deterministic aggregation)
    batch.snapshot_positions.resize(n_snap);
    for (std::size_t si = 0; si < n_snap; ++si)
        for (std::size_t i = 0; i < n_traj; ++i)
            if (snap_alive[si][i]) batch.snapshot_positions[si].push_back(snap_pos[si][i]);

    for (const auto& rec : batch.records) {
        if (!rec.absorption_time) ++batch.survived;
        else if (rec.boundary == BoundaryId::b1) ++batch.absorbed_b1;
        else ++batch.absorbed_b2;
    }
    return batch;
}

/// Fraction of trajectories with absorption time strictly greater than t
/// (survivors count as absorbed never).
inline std::vector<double> empirical_survival(const TrajectoryBatch& batch,
                                              const std::vector<double>& times) {
    std::vector<double> out;
    out.reserve(times.size());
    for (const double t : times) {
        if (t > batch.realized_horizon + 1e-9)
            throw std::invalid_argument("empirical_survival: t = " + std::to_string(t) +
                                        " exceeds the simulated horizon");
        std::int64_t alive = 0;
        for (const auto& rec : batch.records)
            if (!rec.absorption_time || *rec.absorption_time > t) ++alive;
        out.push_back(static_cast<double>(alive) /
                      static_cast<double>(batch.records.size()));
    }
    return out;
}

/// Histogram bins: n1 x n2 equal-width bins over [x1_min,x1_max] x [x2_min,x2_max].
struct BinGrid {
    double x1_min, x1_max;
    std::size_t n1;
    double x2_min, x2_max;
    std::size_t n2;

    double bin_area() const {
        return (x1_max - x1_min) / static_cast<double>(n1) * (x2_max - x2_min) /
               static_cast<double>(n2);
    }
    double center1(std::size_t i) const {
        return x1_min + (x1_max - x1_min) * (static_cast<double>(i) + 0.5) /
                            static_cast<double>(n1);
    }
    double center2(std::size_t j) const {
        return x2_min + (x2_max - x2_min) * (static_cast<double>(j) + 0.5) /
                            static_cast<double>(n2);
    }
    double edge1(std::size_t i) const {
        return x1_min + (x1_max - x1_min) * static_cast<double>(i) /
                            static_cast<double>(n1);
    }
    double edge2(std::size_t j) const {
        return x2_min + (x2_max - x2_min) * static_cast<double>(j) /
                            static_cast<double>(n2);
    }
};

struct Histogram2D {
    BinGrid grid{};
    double t = 0.0;
    std::int64_t n_traj = 0;
    std::vector<double> mass; // row-major (i1 * n2 + i2), probability mass per bin
    double total_mass = 0.0;  // sum of binned mass
    double out_of_grid_mass = 0.0;

    double density(std::size_t i, std::size_t j) const {
        return mass[i * grid.n2 + j] / grid.bin_area();
    }
};

/// Covering grid for the survivors of a snapshot (used by the bookkeeping
/// identity: binned mass + out-of-grid mass = empirical survival).
inline BinGrid auto_cover_grid(const TrajectoryBatch& batch, std::size_t snap_index,
                               std::size_t n1, std::size_t n2) {
    double lo1 = -1.0, hi1 = 0.0, lo2 = -1.0, hi2 = 0.0;
    for (const Vec2& p : batch.snapshot_positions[snap_index]) {
        lo1 = std::min(lo1, p.x1);
        lo2 = std::min(lo2, p.x2);
    }
    lo1 -= 1e-9; lo2 -= 1e-9;
    return {lo1, hi1, n1, lo2, hi2, n2};
}

/// Histogram of surviving positions at a snapshot time, normalized so the
/// binned mass totals the empirical survival probability (when the grid
/// covers every survivor).
inline Histogram2D empirical_pdf(const TrajectoryBatch& batch, double t,
                                 const BinGrid& grid) {
    std::size_t si = batch.snapshot_times.size();
    for (std::size_t s = 0; s < batch.snapshot_times.size(); ++s)
        if (std::fabs(batch.snapshot_times[s] - t) <= 1e-9) { si = s; break; }
    if (si == batch.snapshot_times.size())
        throw std::invalid_argument("empirical_pdf: t = " + std::to_string(t) +
                                    " is not a stored snapshot time");
    if (grid.n1 == 0 || grid.n2 == 0 || !(grid.x1_max > grid.x1_min) ||
        !(grid.x2_max > grid.x2_min))
        throw std::invalid_argument("empirical_pdf: malformed bin grid");

    Histogram2D h;
    h.grid = grid;
    h.t = batch.snapshot_times[si];
    h.n_traj = static_cast<std::int64_t>(batch.records.size());
    h.mass.assign(grid.n1 * grid.n2, 0.0);
    const double unit = 1.0 / static_cast<double>(h.n_traj);
    const double w1 = (grid.x1_max - grid.x1_min) / static_cast<double>(grid.n1);
    const double w2 = (grid.x2_max - grid.x2_min) / static_cast<double>(grid.n2);
    for (const Vec2& p : batch.snapshot_positions[si]) {
        const double f1 = (p.x1 - grid.x1_min) / w1;
        const double f2 = (p.x2 - grid.x2_min) / w2;
        if (f1 < 0.0 || f2 < 0.0 || f1 >= static_cast<double>(grid.n1) ||
            f2 >= static_cast<double>(grid.n2)) {
            h.out_of_grid_mass += unit;
            continue;
        }
        const auto i = static_cast<std::size_t>(f1);
        const auto j = static_cast<std::size_t>(f2);
        h.mass[i * grid.n2 + j] += unit;
    }
    for (const double m : h.mass) h.total_mass += m;
    return h;
}

struct ComparisonPoint {
    double coord = 0.0;
    double analytic = 0.0;
    double empirical = 0.0;
    double standard_error = 0.0;
    double z = 0.0; // after the bias allowance is deducted
};

struct ComparisonReport {
    std::vector<ComparisonPoint> points;
    double sup_abs_discrepancy = 0.0;
    double max_abs_z = 0.0;
    double frac_z_within_3 = 1.0;
    double l1_distance = 0.0; // histogram comparisons only
    double bias_allowance = 0.0;
    std::size_t n_z_points = 0; // points entering the z statistics
};

namespace detail {

inline double z_score(double analytic, double empirical, double se, double allowance) {
    const double d = empirical - analytic;
    const double excess = std::max(0.0, std::fabs(d) - allowance);
    if (excess == 0.0) return 0.0;
    if (se <= 0.0) return std::numeric_limits<double>::infinity();
    return std::copysign(excess / se, d);
}

} // namespace detail

/// Point-by-point comparison of an analytic curve with an empirical one on
/// the same grid. Standard errors are binomial, sqrt(p (1-p) / n), from the
/// analytic p; `bias_allowance` is deducted from each discrepancy before the
/// z-score (the Euler scheme inflates survival by O(sqrt(dt))).
inline ComparisonReport compare_curves(const std::vector<double>& coords,
                                       const std::vector<double>& analytic,
                                       const std::vector<double>& empirical,
                                       std::int64_t n_traj,
                                       double bias_allowance = 0.0) {
    if (coords.size() != analytic.size() || coords.size() != empirical.size())
        throw std::invalid_argument("compare_curves: grid mismatch");
    ComparisonReport rep;
    rep.bias_allowance = bias_allowance;
    std::size_t within = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double p = std::clamp(analytic[i], 0.0, 1.0);
        const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n_traj));
        const double z = detail::z_score(analytic[i], empirical[i], se, bias_allowance);
        rep.points.push_back({coords[i], analytic[i], empirical[i], se, z});
        rep.sup_abs_discrepancy =
            std::max(rep.sup_abs_discrepancy, std::fabs(empirical[i] - analytic[i]));
        rep.max_abs_z = std::max(rep.max_abs_z, std::fabs(z));
        if (std::fabs(z) <= 3.0) ++within;
    }
    rep.n_z_points = coords.size();
    rep.frac_z_within_3 =
        coords.empty() ? 1.0 : static_cast<double>(within) / static_cast<double>(coords.size());
    return rep;
}

/// Histogram comparison: analytic per-bin masses against the empirical
/// histogram. The L1 distance runs over every bin; z statistics only over
/// bins with expected count >= `min_expected_count`.
inline ComparisonReport compare_histogram(const std::vector<double>& analytic_mass,
                                          const Histogram2D& hist,
                                          double bias_allowance = 0.0,
                                          double min_expected_count = 20.0) {
    if (analytic_mass.size() != hist.mass.size())
        throw std::invalid_argument("compare_histogram: grid mismatch");
    ComparisonReport rep;
    rep.bias_allowance = bias_allowance;
    const auto n = static_cast<double>(hist.n_traj);
    std::size_t within = 0, zpts = 0;
    for (std::size_t i = 0; i < analytic_mass.size(); ++i) {
        const double p = std::clamp(analytic_mass[i], 0.0, 1.0);
        const double se = std::sqrt(p * (1.0 - p) / n);
        const double z = detail::z_score(analytic_mass[i], hist.mass[i], se, bias_allowance);
        rep.l1_distance += std::fabs(hist.mass[i] - analytic_mass[i]);
        rep.sup_abs_discrepancy =
            std::max(rep.sup_abs_discrepancy, std::fabs(hist.mass[i] - analytic_mass[i]));
        if (p * n >= min_expected_count) {
            ++zpts;
            if (std::fabs(z) <= 3.0) ++within;
            rep.max_abs_z = std::max(rep.max_abs_z, std::fabs(z));
            rep.points.push_back({static_cast<double>(i), analytic_mass[i], hist.mass[i],
                                  se, z});
        }
    }
    rep.n_z_points = zpts;
    rep.frac_z_within_3 = zpts == 0 ? 1.0 : static_cast<double>(within) / static_cast<double>(zpts);
    return rep;
}

} // namespace moi2d
