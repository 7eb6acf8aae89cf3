#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "moi2d/correlation.hpp"
#include "moi2d/errors.hpp"
#include "moi2d/vec2.hpp"

namespace moi2d {

/// The involutory reflection maps sending an image source to the source that
/// cancels it on boundary B1 (x2 = 0) respectively B2 (x1 = 0):
///
///   Pi1 = [[1, -2 rho], [0, -1]],   Pi2 = [[-1, 0], [-2 rho, 1]].
///
/// Both have determinant -1 and square to the identity.
struct ReflectionMaps {
    Mat2 pi1;
    Mat2 pi2;
};

inline ReflectionMaps reflection_maps(SolvableK k) {
    if (k.is_infinite())
        throw std::domain_error("reflection_maps: rho = -1 is the infinite-image case; its "
                                "maps live in the line-series evaluator, not in a finite set");
    const double rho = k.rho();
    return {Mat2{1.0, -2.0 * rho, 0.0, -1.0}, Mat2{-1.0, 0.0, -2.0 * rho, 1.0}};
}

/// Symmetric whitening transform Q with Q'Q = Lambda, mapping the image
/// ellipse to a circle. Defined as the identity for k = 2 (Lambda is already
/// the identity there and the general formula's sign factor degenerates).
struct WhiteningMap {
    Mat2 q;
    Mat2 q_inv;
};

inline WhiteningMap whitening_matrix(SolvableK k) {
    if (k.is_infinite())
        throw std::domain_error("whitening_matrix: the whitening transform is singular at "
                                "rho = -1");
    if (k.value() == 2) return {Mat2::identity(), Mat2::identity()};
    const double rho = k.rho();
    const double root = std::sqrt(1.0 - rho * rho);
    const double c = root - 1.0;
    const double q = std::copysign(1.0, rho) /
                     std::sqrt(2.0 * (1.0 - rho * rho) * (1.0 - root));
    const Mat2 qm{q * rho, q * c, q * c, q * rho};
    return {qm, qm.inverse()};
}

/// The finite image set: 2k sources in sequential construction order
/// (sources[0] = s0, odd steps apply Pi1, even steps apply Pi2) with signed
/// exponential weights a_j = (-1)^j exp(mu' Lambda (s_j - s0)). Sources that
/// land exactly on an axis (the tangent case) are kept with their weights so
/// the set always has 2k elements.
struct ImageSet {
    SolvableK k = SolvableK::finite(2);
    double rho = 0.0;
    Vec2 mu;
    Vec2 s0;
    Mat2 lambda;
    std::vector<Vec2> sources;       // size 2k, sources[0] = s0
    std::vector<double> weights;     // size 2k, weights[0] = 1
    std::vector<double> log_weights; // log |weights[j]| = mu' Lambda (s_j - s0)

    std::size_t size() const { return sources.size(); }
};

/// Weights for a given source list: weights[j] = (-1)^j exp(mu' Lambda (s_j - s0)).
/// Throws std::overflow_error naming the offending index if an exponent
/// overflows double range.
inline std::vector<double> image_weights(const std::vector<Vec2>& sources,
                                         const CheckedSpec& spec) {
    const Mat2& lam = spec.lambda();
    const Vec2 lam_mu = lam * spec.mu(); // Lambda symmetric, so mu'Lambda = (Lambda mu)'
    std::vector<double> w(sources.size());
    for (std::size_t j = 0; j < sources.size(); ++j) {
        const double expo = dot(lam_mu, sources[j] - spec.s0());
        if (!(expo < 709.0))
            throw std::overflow_error(
                "image_weights: weight exponent " + std::to_string(expo) +
                " overflows at image j = " + std::to_string(j) +
                " (drift too large for this source spread)");
        w[j] = (j % 2 == 0 ? 1.0 : -1.0) * std::exp(expo);
    }
    return w;
}

namespace detail {

inline std::vector<double> log_image_weights(const std::vector<Vec2>& sources,
                                             const CheckedSpec& spec) {
    const Vec2 lam_mu = spec.lambda() * spec.mu();
    std::vector<double> lw(sources.size());
    for (std::size_t j = 0; j < sources.size(); ++j)
        lw[j] = dot(lam_mu, sources[j] - spec.s0());
    return lw;
}

inline ImageSet finish_image_set(const CheckedSpec& spec, std::vector<Vec2> sources) {
    ImageSet set;
    set.k = spec.k();
    set.rho = spec.rho();
    set.mu = spec.mu();
    set.s0 = spec.s0();
    set.lambda = spec.lambda();
    set.weights = image_weights(sources, spec);
    set.log_weights = log_image_weights(sources, spec);
    set.sources = std::move(sources);
    return set;
}

inline std::uint32_t require_finite_k(const CheckedSpec& spec, const char* who) {
    if (spec.k().is_infinite())
        throw std::domain_error(std::string(who) +
                                ": rho = -1 has no finite image set; use the line-series "
                                "evaluator");
    return spec.k().value();
}

} // namespace detail

/// Sequential construction: s_j for j = 1..2k-1 by alternating applications
/// of Pi1 (odd j) and Pi2 (even j). Applying the generator once more must
/// return to s0; a closure failure raises an internal consistency error.
inline ImageSet build_image_set_mapping(const CheckedSpec& spec) {
    const std::uint32_t k = detail::require_finite_k(spec, "build_image_set_mapping");
    const auto [pi1, pi2] = reflection_maps(spec.k());

    std::vector<Vec2> sources;
    sources.reserve(2 * k);
    sources.push_back(spec.s0());
    for (std::uint32_t j = 1; j < 2 * k; ++j)
        sources.push_back((j % 2 == 1 ? pi1 : pi2) * sources.back());

    const double closure = norm(pi2 * sources.back() - spec.s0());
    const double scale = std::max(1.0, norm(spec.s0()));
    if (!(closure <= 1e-10 * scale))
        throw internal_error("build_image_set_mapping: generator failed to close after 2k "
                             "steps (residual " + std::to_string(closure) + ")");
    return detail::finish_image_set(spec, std::move(sources));
}

/// Rotation construction: s_j = M_j s0 / sin(pi/k) with the even/odd sine
/// matrices evaluated at j*alpha, alpha = (k-1) pi / k. Produces the same set
/// as the sequential construction.
inline ImageSet build_image_set_rotation(const CheckedSpec& spec) {
    const std::uint32_t k = detail::require_finite_k(spec, "build_image_set_rotation");
    const double alpha = spec.alpha();
    const double pk = std::numbers::pi / static_cast<double>(k);
    const double inv_sin = 1.0 / std::sin(pk);

    std::vector<Vec2> sources;
    sources.reserve(2 * k);
    sources.push_back(spec.s0()); // j = 0 matrix is the identity
    for (std::uint32_t j = 1; j < 2 * k; ++j) {
        const double ja = static_cast<double>(j) * alpha;
        const double s0v = std::sin(ja);
        const double sp = std::sin(ja + pk);
        const double sm = std::sin(ja - pk);
        const Mat2 m = (j % 2 == 0) ? Mat2{sp, s0v, -s0v, -sm}
                                    : Mat2{s0v, sm, -sp, -s0v};
        sources.push_back(inv_sin * (m * spec.s0()));
    }
    return detail::finish_image_set(spec, std::move(sources));
}

struct VerifyTolerances {
    double closure = 1e-10;     // absolute, scaled by max(1, |s0|)
    double ellipse_rel = 1e-10;
    double quadrant = 1e-12;    // open-quadrant exclusion margin
    double partner = 1e-10;     // cancellation-partner match, scaled like closure
};

/// Findings of verify_image_set. Raw residuals are reported; ok() applies the
/// tolerances used for the check.
struct ImageSetDiagnostics {
    double closure_residual = 0.0;
    double max_ellipse_residual = 0.0;            // relative to s0' Lambda s0
    std::vector<std::size_t> quadrant_violations; // sources j >= 1 strictly inside Q_III
    double max_partner_residual = 0.0;            // worst unmatched Pi1/Pi2 partner distance
    bool sign_pattern_ok = true;                  // sgn(weights[j]) == (-1)^j
    double scale = 1.0;
    VerifyTolerances tolerances{};

    bool ok() const {
        return closure_residual <= tolerances.closure * scale &&
               max_ellipse_residual <= tolerances.ellipse_rel &&
               quadrant_violations.empty() &&
               max_partner_residual <= tolerances.partner * scale && sign_pattern_ok;
    }
};

/// Geometric self-checks on a constructed (or deserialized, or corrupted)
/// image set: closure of the generator, the common ellipse, the
/// open-third-quadrant exclusion for j >= 1, and the existence of both
/// cancellation partners for every source. Purely diagnostic; never throws.
inline ImageSetDiagnostics verify_image_set(const ImageSet& set,
                                            VerifyTolerances tol = {}) {
    ImageSetDiagnostics d;
    d.tolerances = tol;
    d.scale = std::max(1.0, norm(set.s0));
    if (set.sources.empty()) return d;

    const auto [pi1, pi2] = reflection_maps(set.k);

    // (a) regenerate the chain from sources[0] and measure the return distance
    Vec2 cur = set.sources[0];
    for (std::size_t j = 1; j <= set.sources.size(); ++j)
        cur = (j % 2 == 1 ? pi1 : pi2) * cur;
    d.closure_residual = norm(cur - set.sources[0]);

    // (b) common ellipse s' Lambda s = s0' Lambda s0
    const double e0 = quad_form(set.lambda, set.sources[0]);
    for (const Vec2& s : set.sources) {
        const double e = quad_form(set.lambda, s);
        d.max_ellipse_residual =
            std::max(d.max_ellipse_residual, std::fabs(e - e0) / std::max(e0, 1e-300));
    }

    // (c) open-quadrant exclusion (touching the axes is allowed)
    for (std::size_t j = 1; j < set.sources.size(); ++j)
        if (set.sources[j].x1 < -tol.quadrant && set.sources[j].x2 < -tol.quadrant)
            d.quadrant_violations.push_back(j);

    // (d) every source must have both cancellation partners in the set
    auto nearest_dist = [&](Vec2 p) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec2& s : set.sources) best = std::min(best, norm(p - s));
        return best;
    };
    for (const Vec2& s : set.sources) {
        d.max_partner_residual = std::max(d.max_partner_residual, nearest_dist(pi1 * s));
        d.max_partner_residual = std::max(d.max_partner_residual, nearest_dist(pi2 * s));
    }

    for (std::size_t j = 0; j < set.weights.size(); ++j) {
        const double expected_sign = (j % 2 == 0) ? 1.0 : -1.0;
        if (set.weights[j] * expected_sign <= 0.0) d.sign_pattern_ok = false;
    }
    return d;
}

} // namespace moi2d
