#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "moi2d/bvn.hpp"
#include "moi2d/correlation.hpp"
#include "moi2d/errors.hpp"
#include "moi2d/images.hpp"
#include "moi2d/vec2.hpp"

namespace moi2d {

enum class Formalism { mapping, rotation };

/// A density value together with an out-of-domain marker. Queries outside the
/// closed third quadrant return the raw image-sum value (which boundary
/// cancellation tests need) flagged rather than forced to zero.
struct PdfSample {
    double value = 0.0;
    bool outside_domain = false;
};

/// Evaluates the closed-form solution: the weighted image sum for the density,
/// the weighted quadrant CDF sum for survival, and finite-difference
/// diagnostics against the governing PDE.
///
/// The density is accumulated over reflection pairs: the ratio of the two
/// members of a pair reduces exactly to exp(-2 s2 x2 / t) across B1 (and
/// exp(-2 s1 x1 / t) across B2), so each pair is evaluated with expm1 and
/// vanishes identically on its boundary instead of relying on cancellation of
/// two separately rounded exponentials. Pairing follows whichever boundary is
/// closer to the query point.
class SolutionEvaluator {
public:
    SolutionEvaluator(const CheckedSpec& spec, ImageSet iset)
        : spec_(spec), iset_(std::move(iset)) {
        const auto diag = verify_image_set(iset_);
        if (!diag.ok())
            throw std::invalid_argument(
                "SolutionEvaluator: image set fails verification (closure " +
                std::to_string(diag.closure_residual) + ", ellipse " +
                std::to_string(diag.max_ellipse_residual) + ", " +
                std::to_string(diag.quadrant_violations.size()) +
                " quadrant violations)");
        norm_ = 1.0 / (2.0 * std::numbers::pi * std::sqrt(spec_.det_sigma()));
    }

    const CheckedSpec& spec() const { return spec_; }
    const ImageSet& image_set() const { return iset_; }

    /// Density Xi(x, t). Inside the open quadrant tiny negative rounding
    /// residue (below 1e-13 of the dominant image term) is clamped to zero;
    /// anything more negative raises an internal consistency error.
    PdfSample pdf(Vec2 x, double t) const {
        require_time(t);
        const auto [raw, max_term] = xi_raw_with_scale(x, t);
        const bool outside = x.x1 > 0.0 || x.x2 > 0.0;
        if (outside) return {raw, true};
        if (x.x1 < 0.0 && x.x2 < 0.0 && raw < 0.0) {
            if (raw >= -1e-13 * max_term) return {0.0, false};
            throw internal_error("pdf: negative density " + std::to_string(raw) +
                                 " at interior point exceeds the rounding floor");
        }
        return {raw, false};
    }

    /// Raw image sum without domain handling; the value every x-derivative
    /// diagnostic differentiates.
    double pdf_raw(Vec2 x, double t) const {
        require_time(t);
        return xi_raw_with_scale(x, t).first;
    }

    /// Survival probability S(t): the weighted sum of per-image third-quadrant
    /// masses. Values outside [0,1] by more than 1e-9 raise an internal
    /// consistency error; smaller excursions are clamped.
    double survival(double t) const {
        require_time(t);
        const double rt = std::sqrt(t);
        double sum = 0.0, comp = 0.0; // Neumaier compensation
        for (std::size_t j = 0; j < iset_.size(); ++j) {
            const Vec2 m = iset_.sources[j] + t * spec_.mu();
            const double cdf =
                standard_bvn_cdf(-m.x1 / rt, -m.x2 / rt, spec_.rho());
            const double term = iset_.weights[j] * cdf;
            const double s = sum + term;
            comp += (std::fabs(sum) >= std::fabs(term)) ? (sum - s) + term
                                                        : (term - s) + sum;
            sum = s;
        }
        sum += comp;
        if (sum < -1e-9 || sum > 1.0 + 1e-9)
            throw internal_error("survival: weighted CDF sum " + std::to_string(sum) +
                                 " is outside [0,1] beyond tolerance");
        return std::clamp(sum, 0.0, 1.0);
    }

    /// First-passage-time CDF, 1 - S(t).
    double first_passage_cdf(double t) const { return 1.0 - survival(t); }

    /// Central-difference residual of the governing equation
    ///   dXi/dt + mu . grad Xi - (1/2) sum_ij Sigma_ij d2 Xi / dxi dxj
    /// at an interior space-time point; O(h^2) for the exact solution.
    double fpe_residual(Vec2 x, double t, double h) const {
        if (!(t > h && h > 0.0))
            throw std::invalid_argument("fpe_residual: need t > h > 0");
        const double rho = spec_.rho();
        const Vec2 e1{h, 0.0}, e2{0.0, h};
        const double f0 = pdf_raw(x, t);
        const double fp1 = pdf_raw(x + e1, t), fm1 = pdf_raw(x - e1, t);
        const double fp2 = pdf_raw(x + e2, t), fm2 = pdf_raw(x - e2, t);
        const double dt = (pdf_raw(x, t + h) - pdf_raw(x, t - h)) / (2.0 * h);
        const double g1 = (fp1 - fm1) / (2.0 * h);
        const double g2 = (fp2 - fm2) / (2.0 * h);
        const double d11 = (fp1 - 2.0 * f0 + fm1) / (h * h);
        const double d22 = (fp2 - 2.0 * f0 + fm2) / (h * h);
        const double d12 = (pdf_raw(x + e1 + e2, t) - pdf_raw(x + e1 - e2, t) -
                            pdf_raw(x - e1 + e2, t) + pdf_raw(x - e1 - e2, t)) /
                           (4.0 * h * h);
        return dt + spec_.mu().x1 * g1 + spec_.mu().x2 * g2 -
               0.5 * (d11 + 2.0 * rho * d12 + d22);
    }

    /// Exact probability mass of Xi(., t) over an axis-aligned rectangle,
    /// by tensor Gauss-Legendre panels of the (stable) pointwise density.
    double bin_mass(Vec2 lo, Vec2 hi, double t) const {
        require_time(t);
        static constexpr double gx[6] = {0.03376524289842399, 0.1693953067668678,
                                         0.3806904069584015,  0.6193095930415985,
                                         0.8306046932331322,  0.9662347571015760};
        static constexpr double gw[6] = {0.08566224618958517, 0.1803807865240693,
                                         0.2339569672863455,  0.2339569672863455,
                                         0.1803807865240693,  0.08566224618958517};
        const double scale = std::sqrt(t * std::max(1.0 - std::fabs(spec_.rho()), 1e-3));
        const auto panels = [&](double w) {
            return std::clamp(static_cast<int>(std::ceil(w / scale)), 1, 8);
        };
        const int p1 = panels(hi.x1 - lo.x1), p2 = panels(hi.x2 - lo.x2);
        const double w1 = (hi.x1 - lo.x1) / p1, w2 = (hi.x2 - lo.x2) / p2;
        double total = 0.0;
        for (int a = 0; a < p1; ++a)
            for (int b = 0; b < p2; ++b) {
                const double x1l = lo.x1 + a * w1, x2l = lo.x2 + b * w2;
                double cell = 0.0;
                for (int i = 0; i < 6; ++i)
                    for (int j = 0; j < 6; ++j)
                        cell += gw[i] * gw[j] *
                                pdf_raw({x1l + gx[i] * w1, x2l + gx[j] * w2}, t);
                total += cell * w1 * w2;
            }
        return total;
    }

private:
    static void require_time(double t) {
        if (!(t > 0.0)) throw std::invalid_argument("time must be > 0");
    }

    // returns {Xi(x,t), largest single pair-anchor magnitude} in density units
    std::pair<double, double> xi_raw_with_scale(Vec2 x, double t) const {
        const std::size_t n = iset_.size();
        const Vec2 mu_t = t * spec_.mu();
        const Mat2& lam = iset_.lambda;
        const bool use_pi1 = std::fabs(x.x2) <= std::fabs(x.x1);

        double sum = 0.0, max_term = 0.0;
        for (std::size_t m = 0; m < n / 2; ++m) {
            // anchor index and the exact log-ratio to its partner
            const std::size_t a = use_pi1 ? 2 * m : 2 * m + 1;
            const Vec2& s = iset_.sources[a];
            const double delta = use_pi1 ? -2.0 * s.x2 * x.x2 / t
                                         : -2.0 * s.x1 * x.x1 / t;
            const Vec2 d = x - s - mu_t;
            const double g = iset_.log_weights[a] - quad_form(lam, d) / (2.0 * t);
            const double sign = use_pi1 ? 1.0 : -1.0;
            double pair;
            if (delta <= 0.0) {
                const double ea = std::exp(g);
                pair = -sign * ea * std::expm1(delta);
                max_term = std::max(max_term, ea);
            } else {
                const double ep = std::exp(g + delta);
                pair = sign * ep * std::expm1(-delta);
                max_term = std::max(max_term, ep);
            }
            sum += pair;
        }
        return {sum * norm_ / t, std::max(max_term, 1e-300) * norm_ / t};
    }

    CheckedSpec spec_;
    ImageSet iset_;
    double norm_ = 1.0;
};

inline SolutionEvaluator make_evaluator(const CheckedSpec& spec,
                                        Formalism formalism = Formalism::mapping) {
    ImageSet set = (formalism == Formalism::mapping) ? build_image_set_mapping(spec)
                                                     : build_image_set_rotation(spec);
    return SolutionEvaluator(spec, std::move(set));
}

/// The rho = -1 case: the process lives on the line through s0 along
/// (1,-1)/sqrt(2), with line coordinate x_Z = sqrt(2)(x1 - s0_1), absorbing
/// ends at x_Z = a = -sqrt(2) s0_1 (boundary B2) and x_Z = -b = sqrt(2) s0_2
/// (boundary B1). The density is the classical two-wall image series with
/// drift mu_line = (mu_1 - mu_2)/sqrt(2) and variance 2 per unit time.
///
/// The fixed-end correspondence with the 2D process is exact when
/// mu_1 + mu_2 = 0; a drift component along (1,1) slides the support line
/// toward the corner and shrinks the gap between the ends, which this
/// evaluator does not model.
struct Rho1Evaluator {
    double a = 1.0;            // distance to the B2 end, > 0
    double b = 1.0;            // distance to the B1 end, > 0
    double mu_line = 0.0;      // drift along the line
    double sigma2_line = 2.0;  // diffusion variance along the line
    int min_terms = 5;         // terms per side before truncation may trigger
    double trunc_rel = 1e-12;  // stop once a ring falls below this of the max
};

inline Rho1Evaluator make_rho1_evaluator(const CheckedSpec& spec) {
    if (!spec.k().is_infinite())
        throw std::domain_error("make_rho1_evaluator: spec must have the infinite k "
                                "(rho = -1) variant");
    Rho1Evaluator ev;
    ev.a = -std::numbers::sqrt2 * spec.s0().x1;
    ev.b = -std::numbers::sqrt2 * spec.s0().x2;
    ev.mu_line = (spec.mu().x1 - spec.mu().x2) / std::numbers::sqrt2;
    return ev;
}

/// Truncated two-family image series for the line density p(x_Z, t).
/// Queries beyond the closed interval [-b, a] return 0 with the
/// out-of-domain flag; the ends themselves evaluate the series (which
/// vanishes there by cancellation).
inline PdfSample rho1_line_pdf(const Rho1Evaluator& ev, double xz, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("rho1_line_pdf: t must be > 0");
    if (!(ev.a > 0.0 && ev.b > 0.0))
        throw std::invalid_argument("rho1_line_pdf: boundary distances must be positive");
    if (xz < -ev.b || xz > ev.a) return {0.0, true};

    const double s2 = ev.sigma2_line;
    const double mu = ev.mu_line;
    auto term = [&](double x_img) {
        return std::exp(mu * x_img / s2 - (xz - x_img - mu * t) * (xz - x_img - mu * t) /
                                              (2.0 * s2 * t));
    };
    // n = 0 ring, then symmetric rings n = +/-1, +/-2, ...
    double sum = term(0.0) - term(2.0 * ev.a);
    double max_mag = std::max(term(0.0), term(2.0 * ev.a));
    for (int n = 1;; ++n) {
        double ring_max = 0.0;
        for (const int sn : {n, -n}) {
            const double xp = 2.0 * sn * (ev.a + ev.b);
            const double xpp = (2.0 - 2.0 * sn) * ev.a - 2.0 * sn * ev.b;
            const double tp = term(xp), tpp = term(xpp);
            sum += tp - tpp;
            ring_max = std::max(ring_max, std::max(tp, tpp));
        }
        max_mag = std::max(max_mag, ring_max);
        if (n >= ev.min_terms && ring_max < ev.trunc_rel * max_mag) break;
        if (n > 100000)
            throw internal_error("rho1_line_pdf: series failed to truncate");
    }
    return {sum / std::sqrt(2.0 * std::numbers::pi * s2 * t), false};
}

/// Rectangular grid specification min:max:count per axis.
struct GridSpec {
    double x1_min, x1_max;
    std::size_t n1;
    double x2_min, x2_max;
    std::size_t n2;

    std::vector<double> axis1() const { return axis(x1_min, x1_max, n1); }
    std::vector<double> axis2() const { return axis(x2_min, x2_max, n2); }

private:
    static std::vector<double> axis(double lo, double hi, std::size_t n) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = (n == 1) ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                            static_cast<double>(n - 1);
        return v;
    }
};

struct GridPoint {
    double x1, x2, t, xi;
};

/// Row-major (x1 outer, x2 inner) evaluation of the density on a grid.
/// Single-threaded and sequential, hence bitwise deterministic.
inline std::vector<GridPoint> evaluate_grid(const SolutionEvaluator& eval,
                                            const GridSpec& grid, double t) {
    std::vector<GridPoint> out;
    out.reserve(grid.n1 * grid.n2);
    for (const double x1 : grid.axis1())
        for (const double x2 : grid.axis2())
            out.push_back({x1, x2, t, eval.pdf({x1, x2}, t).value});
    return out;
}

} // namespace moi2d
