#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "moi2d/correlation.hpp"
#include "moi2d/images.hpp"
#include "moi2d/montecarlo.hpp"
#include "moi2d/solution.hpp"
#include "moi2d/version.hpp"

namespace moi2d {

using json = nlohmann::ordered_json;

/// 17-significant-digit decimal rendering (round-trips to the same double).
inline std::string fmt17(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                   std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Reproducibility record attached to every output file: the subcommand, the
/// fully resolved parameter set, the library version, the seed (when one
/// applies) and a timestamp. Identical runs differ only in the timestamp.
struct RunManifest {
    std::string cmd;
    json params = json::object();
    std::optional<std::uint64_t> seed;
    std::string timestamp = iso8601_utc_now();

    json to_json() const {
        json m;
        m["cmd"] = cmd;
        m["params"] = params;
        m["version"] = version;
        if (seed) m["seed"] = *seed;
        else m["seed"] = nullptr;
        m["timestamp"] = timestamp;
        return m;
    }
};

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Sidecar manifest for CSV outputs: `<path>.manifest.json`.
inline void write_manifest_sidecar(const std::string& path, const RunManifest& m) {
    write_text_file(path + ".manifest.json", m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// ImageSet
// ---------------------------------------------------------------------------

inline json image_set_to_json(const ImageSet& set) {
    json j;
    j["k"] = set.k.value();
    j["rho"] = set.rho;
    j["s0"] = {set.s0.x1, set.s0.x2};
    j["mu"] = {set.mu.x1, set.mu.x2};
    json sources = json::array();
    for (const Vec2& s : set.sources) sources.push_back({s.x1, s.x2});
    j["sources"] = std::move(sources);
    j["weights"] = set.weights;
    return j;
}

inline ImageSet image_set_from_json(const json& j) {
    const ProcessSpec spec{{j.at("mu").at(0), j.at("mu").at(1)},
                           {j.at("s0").at(0), j.at("s0").at(1)},
                           SolvableK::finite(j.at("k").get<std::uint32_t>())};
    const CheckedSpec checked = validate_spec(spec);
    ImageSet set;
    set.k = checked.k();
    set.rho = checked.rho();
    set.mu = checked.mu();
    set.s0 = checked.s0();
    set.lambda = checked.lambda();
    for (const auto& s : j.at("sources"))
        set.sources.push_back({s.at(0), s.at(1)});
    set.weights = j.at("weights").get<std::vector<double>>();
    const Vec2 lam_mu = set.lambda * set.mu;
    for (const Vec2& s : set.sources)
        set.log_weights.push_back(dot(lam_mu, s - set.s0));
    return set;
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

/// Locale-independent strict string -> double conversion.
inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw std::runtime_error("malformed numeric field: '" + s + "'");
    return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

using moi2d::parse_double;

inline std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                                      const std::string& header) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty CSV file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header)
        throw std::runtime_error("unexpected CSV header in " + path + ": '" + line +
                                 "' (expected '" + header + "')");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

} // namespace detail

/// Density field CSV: header x1,x2,t,xi.
inline std::string grid_to_csv(const std::vector<GridPoint>& pts) {
    std::string out = "x1,x2,t,xi\n";
    for (const auto& p : pts)
        out += fmt17(p.x1) + "," + fmt17(p.x2) + "," + fmt17(p.t) + "," + fmt17(p.xi) +
               "\n";
    return out;
}

inline std::vector<GridPoint> read_grid_csv(const std::string& path) {
    std::vector<GridPoint> out;
    for (const auto& row : detail::read_csv(path, "x1,x2,t,xi")) {
        if (row.size() != 4) throw std::runtime_error("bad grid row in " + path);
        out.push_back({detail::parse_double(row[0]), detail::parse_double(row[1]),
                       detail::parse_double(row[2]), detail::parse_double(row[3])});
    }
    return out;
}

inline json grid_to_json(const std::vector<GridPoint>& pts) {
    json j;
    j["header"] = {"x1", "x2", "t", "xi"};
    json rows = json::array();
    for (const auto& p : pts) rows.push_back({p.x1, p.x2, p.t, p.xi});
    j["rows"] = std::move(rows);
    return j;
}

/// Survival curve CSV: header t,survival.
inline std::string survival_to_csv(const std::vector<double>& times,
                                   const std::vector<double>& survival) {
    std::string out = "t,survival\n";
    for (std::size_t i = 0; i < times.size(); ++i)
        out += fmt17(times[i]) + "," + fmt17(survival[i]) + "\n";
    return out;
}

struct SurvivalCurve {
    std::vector<double> times;
    std::vector<double> survival;
};

inline SurvivalCurve read_survival_csv(const std::string& path) {
    SurvivalCurve c;
    for (const auto& row : detail::read_csv(path, "t,survival")) {
        if (row.size() != 2) throw std::runtime_error("bad survival row in " + path);
        c.times.push_back(detail::parse_double(row[0]));
        c.survival.push_back(detail::parse_double(row[1]));
    }
    return c;
}

/// Histogram CSV: header x1_bin,x2_bin,mass with bin centers.
inline std::string histogram_to_csv(const Histogram2D& h) {
    std::string out = "x1_bin,x2_bin,mass\n";
    for (std::size_t i = 0; i < h.grid.n1; ++i)
        for (std::size_t j = 0; j < h.grid.n2; ++j)
            out += fmt17(h.grid.center1(i)) + "," + fmt17(h.grid.center2(j)) + "," +
                   fmt17(h.mass[i * h.grid.n2 + j]) + "\n";
    return out;
}

struct HistogramRow {
    double x1_bin, x2_bin, mass;
};

inline std::vector<HistogramRow> read_histogram_csv(const std::string& path) {
    std::vector<HistogramRow> out;
    for (const auto& row : detail::read_csv(path, "x1_bin,x2_bin,mass")) {
        if (row.size() != 3) throw std::runtime_error("bad histogram row in " + path);
        out.push_back({detail::parse_double(row[0]), detail::parse_double(row[1]),
                       detail::parse_double(row[2])});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulation batch summary
// ---------------------------------------------------------------------------

inline json simulation_to_json(const TrajectoryBatch& batch,
                               const std::vector<double>& curve_times,
                               const std::vector<double>& curve_survival) {
    json j;
    json prob;
    prob["mu"] = {batch.problem.mu.x1, batch.problem.mu.x2};
    prob["s0"] = {batch.problem.s0.x1, batch.problem.s0.x2};
    prob["rho"] = batch.problem.rho;
    j["problem"] = std::move(prob);
    json cfg;
    cfg["dt"] = batch.config.dt;
    cfg["n_traj"] = batch.config.n_traj;
    cfg["horizon"] = batch.config.horizon;
    cfg["seed"] = batch.config.seed;
    cfg["bridge_correction"] = batch.config.bridge_correction;
    j["config"] = std::move(cfg);
    json res;
    res["realized_horizon"] = batch.realized_horizon;
    res["absorbed_b1"] = batch.absorbed_b1;
    res["absorbed_b2"] = batch.absorbed_b2;
    res["survived"] = batch.survived;
    json curve;
    curve["t"] = curve_times;
    curve["survival"] = curve_survival;
    res["survival_curve"] = std::move(curve);
    json snaps = json::array();
    for (std::size_t si = 0; si < batch.snapshot_times.size(); ++si) {
        json s;
        s["t"] = batch.snapshot_times[si];
        std::vector<double> x1, x2;
        x1.reserve(batch.snapshot_positions[si].size());
        for (const Vec2& p : batch.snapshot_positions[si]) {
            x1.push_back(p.x1);
            x2.push_back(p.x2);
        }
        s["x1"] = std::move(x1);
        s["x2"] = std::move(x2);
        snaps.push_back(std::move(s));
    }
    res["snapshots"] = std::move(snaps);
    j["result"] = std::move(res);
    return j;
}

/// The parts of a simulation summary that comparisons need.
struct SimulationSummary {
    SimProblem problem;
    SimConfig config;
    double realized_horizon = 0.0;
    std::int64_t absorbed_b1 = 0, absorbed_b2 = 0, survived = 0;
    SurvivalCurve curve;
    std::vector<double> snapshot_times;
    std::vector<std::vector<Vec2>> snapshot_positions;
};

inline SimulationSummary simulation_from_json(const json& j) {
    SimulationSummary s;
    const auto& prob = j.at("problem");
    s.problem.mu = {prob.at("mu").at(0), prob.at("mu").at(1)};
    s.problem.s0 = {prob.at("s0").at(0), prob.at("s0").at(1)};
    s.problem.rho = prob.at("rho");
    const auto& cfg = j.at("config");
    s.config.dt = cfg.at("dt");
    s.config.n_traj = cfg.at("n_traj");
    s.config.horizon = cfg.at("horizon");
    s.config.seed = cfg.at("seed");
    s.config.bridge_correction = cfg.at("bridge_correction");
    const auto& res = j.at("result");
    s.realized_horizon = res.at("realized_horizon");
    s.absorbed_b1 = res.at("absorbed_b1");
    s.absorbed_b2 = res.at("absorbed_b2");
    s.survived = res.at("survived");
    s.curve.times = res.at("survival_curve").at("t").get<std::vector<double>>();
    s.curve.survival = res.at("survival_curve").at("survival").get<std::vector<double>>();
    for (const auto& snap : res.at("snapshots")) {
        s.snapshot_times.push_back(snap.at("t"));
        const auto x1 = snap.at("x1").get<std::vector<double>>();
        const auto x2 = snap.at("x2").get<std::vector<double>>();
        std::vector<Vec2> pos(x1.size());
        for (std::size_t i = 0; i < x1.size(); ++i) pos[i] = {x1[i], x2[i]};
        s.snapshot_positions.push_back(std::move(pos));
    }
    return s;
}

inline ComparisonReport comparison_from_json(const json& j) {
    ComparisonReport rep;
    rep.bias_allowance = j.at("bias_allowance");
    for (const auto& p : j.at("points"))
        rep.points.push_back({p.at("coord"), p.at("analytic"), p.at("empirical"),
                              p.at("standard_error"), p.at("z")});
    rep.sup_abs_discrepancy = j.at("sup_abs_discrepancy");
    rep.max_abs_z = j.at("max_abs_z");
    rep.frac_z_within_3 = j.at("frac_z_within_3");
    rep.n_z_points = j.at("n_z_points");
    return rep;
}

inline json comparison_to_json(const ComparisonReport& rep, std::int64_t n_traj,
                               bool pass) {
    json j;
    j["n_traj"] = n_traj;
    j["bias_allowance"] = rep.bias_allowance;
    json pts = json::array();
    for (const auto& p : rep.points) {
        json q;
        q["coord"] = p.coord;
        q["analytic"] = p.analytic;
        q["empirical"] = p.empirical;
        q["standard_error"] = p.standard_error;
        q["z"] = p.z;
        pts.push_back(std::move(q));
    }
    j["points"] = std::move(pts);
    j["sup_abs_discrepancy"] = rep.sup_abs_discrepancy;
    j["max_abs_z"] = rep.max_abs_z;
    j["frac_z_within_3"] = rep.frac_z_within_3;
    j["n_z_points"] = rep.n_z_points;
    j["pass"] = pass;
    return j;
}

/// Sweep CSV: rho,empirical_survival,standard_error,analytic_survival
/// (analytic column empty when rho is not a solvable family member).
struct SweepRow {
    double rho;
    double empirical_survival;
    double standard_error;
    std::optional<double> analytic_survival;
};

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string out = "rho,empirical_survival,standard_error,analytic_survival\n";
    for (const auto& r : rows) {
        out += fmt17(r.rho) + "," + fmt17(r.empirical_survival) + "," +
               fmt17(r.standard_error) + ",";
        if (r.analytic_survival) out += fmt17(*r.analytic_survival);
        out += "\n";
    }
    return out;
}

inline std::vector<SweepRow> read_sweep_csv(const std::string& path) {
    std::vector<SweepRow> out;
    for (const auto& row :
         detail::read_csv(path, "rho,empirical_survival,standard_error,analytic_survival")) {
        if (row.size() != 4) throw std::runtime_error("bad sweep row in " + path);
        SweepRow r{detail::parse_double(row[0]), detail::parse_double(row[1]),
                   detail::parse_double(row[2]), std::nullopt};
        if (!row[3].empty()) r.analytic_survival = detail::parse_double(row[3]);
        out.push_back(r);
    }
    return out;
}

} // namespace moi2d
