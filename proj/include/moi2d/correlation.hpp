#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "moi2d/vec2.hpp"

namespace moi2d {

/// Index into the solvable correlation family rho = -cos(pi/k).
///
/// k = 2 gives rho = 0 (independent coordinates), larger k moves rho toward
/// -1, and the symbolic infinite value stands for rho = -1 exactly (whose
/// solution is a 1D image series rather than a finite image set). k = 1
/// (rho = +1) is excluded: the process degenerates to a single-boundary 1D
/// problem and the whitening transform is singular there.
class SolvableK {
public:
    static SolvableK finite(std::uint32_t k) {
        if (k < 2)
            throw std::domain_error("SolvableK: k must be >= 2 (k=1 means rho=+1, "
                                    "the excluded degenerate case)");
        return SolvableK(k);
    }
    static constexpr SolvableK infinity() { return SolvableK(0); }

    constexpr bool is_infinite() const { return k_ == 0; }

    std::uint32_t value() const {
        if (is_infinite())
            throw std::domain_error("SolvableK: finite k requested from the infinite variant");
        return k_;
    }

    /// rho = -cos(pi/k); -1 for the infinite variant. The two family members
    /// with exactly representable values (k=2 -> 0, k=3 -> -1/2) are returned
    /// exactly.
    double rho() const {
        if (is_infinite()) return -1.0;
        if (k_ == 2) return 0.0;
        if (k_ == 3) return -0.5;
        return -std::cos(std::numbers::pi / static_cast<double>(k_));
    }

    friend constexpr bool operator==(SolvableK a, SolvableK b) { return a.k_ == b.k_; }

private:
    explicit constexpr SolvableK(std::uint32_t k) : k_(k) {}
    std::uint32_t k_; // 0 encodes the infinite variant
};

inline double rho_from_k(SolvableK k) { return k.rho(); }

inline double rho_from_k(std::uint32_t k) { return SolvableK::finite(k).rho(); }

/// Angles attached to a solvable k: alpha = (k-1) pi / k is the whitened
/// rotation step, beta = 2 pi / k the angular spacing of even-numbered
/// sources. For the infinite variant alpha = pi and beta = 0.
struct AngleParams {
    double alpha;
    double beta;
};

inline AngleParams angles_from_k(SolvableK k) {
    if (k.is_infinite()) return {std::numbers::pi, 0.0};
    const double kd = static_cast<double>(k.value());
    return {(kd - 1.0) * std::numbers::pi / kd, 2.0 * std::numbers::pi / kd};
}

/// Maps an arbitrary rho in (-1, 0] onto the nearest solvable family member
/// with k <= k_max. Returns the chosen k and the signed residual
/// rho - rho(k). Positive rho is rejected: no method-of-images solution
/// exists for any 0 < rho < 1, regardless of the start point.
inline std::pair<SolvableK, double> nearest_solvable_k(double rho, std::uint32_t k_max) {
    if (!std::isfinite(rho))
        throw std::invalid_argument("nearest_solvable_k: rho must be finite");
    if (rho > 0.0)
        throw std::domain_error(
            "nearest_solvable_k: no method-of-images solution exists for 0 < rho < 1; "
            "solvable correlations are rho = -cos(pi/k), k = 2, 3, ... (and rho = -1)");
    if (rho <= -1.0)
        throw std::domain_error(
            "nearest_solvable_k: rho must lie in (-1, 0]; rho = -1 itself is the "
            "infinite-image case, handled separately");
    if (k_max < 2)
        throw std::invalid_argument("nearest_solvable_k: k_max must be >= 2");

    std::uint32_t best_k = 2;
    double best_res = rho - rho_from_k(2u);
    for (std::uint32_t k = 3; k <= k_max; ++k) {
        const double res = rho - rho_from_k(k);
        if (std::fabs(res) < std::fabs(best_res)) {
            best_k = k;
            best_res = res;
        }
    }
    return {SolvableK::finite(best_k), best_res};
}

/// Exact-membership lookup: accepts rho only if it coincides with a solvable
/// family member within `tol`. This is the rejection surface for closed-form
/// requests at unsolvable correlations.
inline SolvableK solvable_from_rho(double rho, double tol = 1e-9,
                                   std::uint32_t k_max = 4096) {
    if (!std::isfinite(rho))
        throw std::invalid_argument("solvable_from_rho: rho must be finite");
    if (rho == -1.0) return SolvableK::infinity();
    if (rho > 0.0 || rho < -1.0)
        throw std::domain_error(
            "rho = " + std::to_string(rho) +
            " admits no closed-form image solution: solvable correlations are exactly "
            "rho = -cos(pi/k) for integer k >= 2, together with rho = -1");
    const auto [k, res] = nearest_solvable_k(rho, k_max);
    if (std::fabs(res) > tol)
        throw std::domain_error(
            "rho = " + std::to_string(rho) +
            " is not in the solvable family rho = -cos(pi/k), k >= 2 (nearest member is "
            "k = " + std::to_string(k.value()) + ", off by " + std::to_string(res) +
            "); only those correlations admit a finite method-of-images solution");
    return k;
}

/// The problem statement: drift, start point, and correlation by solvable
/// index. Correlation is always specified through k; raw rho enters only via
/// nearest_solvable_k / solvable_from_rho.
struct ProcessSpec {
    Vec2 mu;
    Vec2 s0;
    SolvableK k = SolvableK::finite(2);
};

/// A validated ProcessSpec with the derived quantities cached: Sigma, its
/// inverse Lambda, |Sigma| and the angles. For the infinite variant (rho=-1)
/// Sigma is singular; lambda() then throws and the rho=-1 series evaluator
/// must be used instead.
class CheckedSpec {
public:
    Vec2 mu() const { return mu_; }
    Vec2 s0() const { return s0_; }
    SolvableK k() const { return k_; }
    double rho() const { return rho_; }
    double alpha() const { return angles_.alpha; }
    double beta() const { return angles_.beta; }
    double det_sigma() const { return det_sigma_; }

    Mat2 sigma() const { return {1.0, rho_, rho_, 1.0}; }

    const Mat2& lambda() const {
        if (k_.is_infinite())
            throw std::domain_error("CheckedSpec: Lambda = Sigma^-1 does not exist at rho = -1 "
                                    "(singular covariance); use the rho = -1 line evaluator");
        return lambda_;
    }

    friend CheckedSpec validate_spec(const ProcessSpec& spec);

private:
    CheckedSpec() = default;

    Vec2 mu_;
    Vec2 s0_;
    SolvableK k_ = SolvableK::finite(2);
    double rho_ = 0.0;
    Mat2 lambda_;
    double det_sigma_ = 1.0;
    AngleParams angles_{0.0, 0.0};
};

/// Checks the ProcessSpec invariants and caches the derived quantities.
/// The start point must be strictly inside the third quadrant.
inline CheckedSpec validate_spec(const ProcessSpec& spec) {
    if (!std::isfinite(spec.mu.x1) || !std::isfinite(spec.mu.x2) ||
        !std::isfinite(spec.s0.x1) || !std::isfinite(spec.s0.x2))
        throw std::invalid_argument("validate_spec: mu and s0 must be finite");
    if (!(spec.s0.x1 < 0.0) || !(spec.s0.x2 < 0.0))
        throw std::domain_error(
            "validate_spec: start point must lie strictly inside the third quadrant "
            "(s0_1 < 0 and s0_2 < 0); got s0 = (" + std::to_string(spec.s0.x1) + ", " +
            std::to_string(spec.s0.x2) + ")");

    CheckedSpec out;
    out.mu_ = spec.mu;
    out.s0_ = spec.s0;
    out.k_ = spec.k;
    out.rho_ = spec.k.rho();
    out.det_sigma_ = 1.0 - out.rho_ * out.rho_;
    out.angles_ = angles_from_k(spec.k);
    if (!spec.k.is_infinite()) {
        const double d = out.det_sigma_;
        out.lambda_ = {1.0 / d, -out.rho_ / d, -out.rho_ / d, 1.0 / d};
    }
    return out;
}

} // namespace moi2d
