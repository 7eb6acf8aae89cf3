#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "moi2d/correlation.hpp"
#include "moi2d/vec2.hpp"

namespace moi2d {

inline constexpr double log_sqrt_2pi = 0.91893853320467274178;

/// Standard normal density and CDF.
inline double phi_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double phi_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

/// Scaled complementary error function exp(y^2) erfc(y) for y >= 0.
/// Direct product up to y = 26 (no overflow there), asymptotic series beyond.
inline double erfcx_pos(double y) {
    if (y <= 26.0) return std::exp(y * y) * std::erfc(y);
    const double z = 0.5 / (y * y);
    double term = 1.0, sum = 1.0;
    for (int n = 1; n <= 7; ++n) {
        term *= -(2.0 * n - 1.0) * z;
        sum += term;
    }
    return sum / (y * std::sqrt(std::numbers::pi));
}

/// log Phi(z), accurate to relative ~1e-14 arbitrarily deep in the lower tail.
inline double log_phi_cdf(double z) {
    if (z >= 0.0) return std::log1p(-0.5 * std::erfc(z * std::numbers::sqrt2 / 2.0));
    return std::log(0.5 * erfcx_pos(-z * std::numbers::sqrt2 / 2.0)) - 0.5 * z * z;
}

namespace detail {

// Gauss-Legendre nodes/weights used by the bivariate normal quadrature
// (6-, 12- and 20-point rules; negative half, mirrored at evaluation).
inline constexpr double gl_w6[3] = {0.1713244923791705, 0.3607615730481384,
                                    0.4679139345726904};
inline constexpr double gl_x6[3] = {-0.9324695142031522, -0.6612093864662647,
                                    -0.2386191860831970};
inline constexpr double gl_w12[6] = {0.04717533638651177, 0.1069393259953183,
                                     0.1600783285433464,  0.2031674267230659,
                                     0.2334925365383547,  0.2491470458134029};
inline constexpr double gl_x12[6] = {-0.9815606342467191, -0.9041172563704750,
                                     -0.7699026741943050, -0.5873179542866171,
                                     -0.3678314989981802, -0.1252334085114692};
inline constexpr double gl_w20[10] = {0.01761400713915212, 0.04060142980038694,
                                      0.06267204833410906, 0.08327674157670475,
                                      0.1019301198172404,  0.1181945319615184,
                                      0.1316886384491766,  0.1420961093183821,
                                      0.1491729864726037,  0.1527533871307259};
inline constexpr double gl_x20[10] = {-0.9931285991850949, -0.9639719272779138,
                                      -0.9122344282513259, -0.8391169718222188,
                                      -0.7463319064601508, -0.6360536807265150,
                                      -0.5108670019508271, -0.3737060887154196,
                                      -0.2277858511416451, -0.07652652113349733};

/// Upper-orthant probability P(X > dh, Y > dk) for the standard bivariate
/// normal with correlation r, |r| < 1. Gauss-Legendre quadrature over the
/// correlation angle, with the transformed tail integral for |r| >= 0.925.
inline double bvn_upper_genz(double dh, double dk, double r) {
    const double twopi = 2.0 * std::numbers::pi;
    const double* w;
    const double* x;
    int lg;
    const double ar = std::fabs(r);
    if (ar < 0.3) {
        w = gl_w6; x = gl_x6; lg = 3;
    } else if (ar < 0.75) {
        w = gl_w12; x = gl_x12; lg = 6;
    } else {
        w = gl_w20; x = gl_x20; lg = 10;
    }

    double h = dh, k = dk;
    double hk = h * k;
    double bvn = 0.0;

    if (ar < 0.925) {
        if (ar > 0.0) {
            const double hs = 0.5 * (h * h + k * k);
            const double asr = std::asin(r);
            for (int i = 0; i < lg; ++i) {
                for (int is = -1; is <= 1; is += 2) {
                    const double sn = std::sin(asr * (is * x[i] + 1.0) / 2.0);
                    bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
                }
            }
            bvn *= asr / (2.0 * twopi);
        }
        bvn += phi_cdf(-h) * phi_cdf(-k);
    } else {
        if (r < 0.0) {
            k = -k;
            hk = -hk;
        }
        if (ar < 1.0) {
            const double as = (1.0 - r) * (1.0 + r);
            double a = std::sqrt(as);
            const double bs = (h - k) * (h - k);
            const double c = (4.0 - hk) / 8.0;
            const double d = (12.0 - hk) / 16.0;
            double asr = -(bs / as + hk) / 2.0;
            if (asr > -100.0)
                bvn = a * std::exp(asr) *
                      (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
                       c * d * as * as / 5.0);
            if (-hk < 100.0) {
                const double b = std::sqrt(bs);
                const double sp = std::sqrt(twopi) * phi_cdf(-b / a);
                bvn -= std::exp(-hk / 2.0) * sp * b *
                       (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (int i = 0; i < lg; ++i) {
                for (int is = -1; is <= 1; is += 2) {
                    const double xs = a * (is * x[i] + 1.0) * a * (is * x[i] + 1.0);
                    const double rs = std::sqrt(1.0 - xs);
                    asr = -(bs / xs + hk) / 2.0;
                    if (asr > -100.0) {
                        const double sp = 1.0 + c * xs * (1.0 + d * xs);
                        const double ep =
                            std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs;
                        bvn += a * w[i] * std::exp(asr) * (ep - sp);
                    }
                }
            }
            bvn = -bvn / twopi;
        }
        if (r > 0.0) {
            bvn += phi_cdf(-std::max(h, k));
        } else {
            bvn = -bvn;
            if (k > h) bvn += phi_cdf(k) - phi_cdf(h);
        }
    }
    return std::clamp(bvn, 0.0, 1.0);
}

/// Relative-accuracy evaluation of small lower-orthant probabilities
/// P(X <= h, Y <= w) via the positive single-integral reduction
///   integral over x <= h of phi(x) Phi((w - r x) / sqrt(1 - r^2)) dx,
/// carried out in log space so the result keeps ~12 correct digits even far
/// below the double-precision absolute floor of the quadrature scheme above.
/// The log-integrand is strictly concave, so the maximizer is unique.
inline double bvn_lower_tail(double h, double w, double r) {
    if (h > w) std::swap(h, w);
    const double s = std::sqrt((1.0 - r) * (1.0 + r));

    auto logf = [&](double x) {
        return -0.5 * x * x - log_sqrt_2pi + log_phi_cdf((w - r * x) / s);
    };
    // inverse Mills ratio phi(z)/Phi(z)
    auto mills = [&](double z) {
        if (z >= 0.0) return phi_pdf(z) / phi_cdf(z);
        return std::sqrt(2.0 / std::numbers::pi) /
               erfcx_pos(-z * std::numbers::sqrt2 / 2.0);
    };
    auto dlogf = [&](double x) { return -x - (r / s) * mills((w - r * x) / s); };

    // locate the maximizer on (-inf, h]
    double xmax = h;
    if (dlogf(h) < 0.0) {
        double lo = h - 1.0;
        while (dlogf(lo) < 0.0) lo = h + 2.0 * (lo - h); // expand left
        double hi = h;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::fabs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (dlogf(mid) >= 0.0 ? lo : hi) = mid;
        }
        xmax = 0.5 * (lo + hi);
    }
    const double m = logf(xmax);
    if (m < -745.0) return 0.0; // result below double range

    // left edge: where the integrand has dropped by e^-45
    double xlo = xmax;
    double step = 1.0 / std::max(1.0, std::fabs(xmax));
    while (logf(xlo) > m - 45.0) {
        xlo -= step;
        step *= 2.0;
    }

    auto g = [&](double x) { return std::exp(logf(x) - m); };
    // adaptive Simpson on the normalized integrand
    auto simpson = [&](auto&& self, double a, double b, double fa, double fm, double fb,
                       double whole, int depth) -> double {
        const double mid = 0.5 * (a + b);
        const double lm = 0.5 * (a + mid), rm = 0.5 * (mid + b);
        const double flm = g(lm), frm = g(rm);
        const double left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb);
        const double delta = left + right - whole;
        if (depth <= 0 || std::fabs(delta) <= 1e-13 * std::fabs(left + right) ||
            std::fabs(delta) < 1e-300)
            return left + right + delta / 15.0;
        return self(self, a, mid, fa, flm, fm, left, depth - 1) +
               self(self, mid, b, fm, frm, fb, right, depth - 1);
    };
    const double fa = g(xlo), fb = g(h), fm = g(0.5 * (xlo + h));
    const double whole = (h - xlo) / 6.0 * (fa + 4.0 * fm + fb);
    const double integral = simpson(simpson, xlo, h, fa, fm, fb, whole, 48);
    if (integral <= 0.0) return 0.0;
    return std::exp(m + std::log(integral));
}

} // namespace detail

/// P(X <= h, Y <= w) for the standard bivariate normal with correlation rho.
///
/// Bulk values come from the banded Gauss-Legendre scheme with the
/// transformed tail integral for |rho| >= 0.925 (absolute accuracy ~1e-15);
/// values below 1e-4 are recomputed through a log-space single-integral
/// reduction so they also carry ~12 digits of *relative* accuracy, which the
/// weighted survival sums need when image weights are exponentially large.
/// |rho| = 1 is answered exactly through the degenerate 1D formulas.
inline double standard_bvn_cdf(double h, double w, double rho) {
    if (std::isnan(h) || std::isnan(w) || !std::isfinite(rho))
        throw std::invalid_argument("standard_bvn_cdf: non-finite input");
    if (std::fabs(rho) > 1.0)
        throw std::invalid_argument("standard_bvn_cdf: |rho| must be <= 1");
    if (std::isinf(h) || std::isinf(w)) {
        if (h == -std::numeric_limits<double>::infinity() ||
            w == -std::numeric_limits<double>::infinity())
            return 0.0;
        if (std::isinf(h) && std::isinf(w)) return 1.0; // both +inf
        return std::isinf(h) ? phi_cdf(w) : phi_cdf(h);
    }
    if (rho == 1.0) return phi_cdf(std::min(h, w));
    if (rho == -1.0) {
        if (h + w <= 0.0) return 0.0;
        return std::max(0.0, phi_cdf(h) - phi_cdf(-w));
    }
    const double g = detail::bvn_upper_genz(-h, -w, rho);
    if (g >= 1e-4) return g;
    return detail::bvn_lower_tail(h, w, rho);
}

/// One image term of the method-of-images sum: the free-space Gaussian with
/// mean `mean` and covariance Sigma t.
struct GaussianImage {
    Vec2 mean;
    double time = 1.0;
    Mat2 lambda;
    double det_sigma = 1.0;
    double rho = 0.0;
};

inline GaussianImage make_gaussian_image(Vec2 source, double t, const CheckedSpec& spec) {
    if (!(t > 0.0)) throw std::invalid_argument("make_gaussian_image: t must be > 0");
    return {source + t * spec.mu(), t, spec.lambda(), spec.det_sigma(), spec.rho()};
}

/// Density of the image at x: (1 / (2 pi t sqrt|Sigma|)) exp(-(x-m)' Lambda (x-m) / (2t)).
inline double bvn_pdf(Vec2 x, const GaussianImage& img) {
    if (!(img.time > 0.0)) throw std::invalid_argument("bvn_pdf: t must be > 0");
    const Vec2 d = x - img.mean;
    return std::exp(-quad_form(img.lambda, d) / (2.0 * img.time)) /
           (2.0 * std::numbers::pi * img.time * std::sqrt(img.det_sigma));
}

/// Probability the image assigns to the closed third quadrant.
inline double quadrant_mass(const GaussianImage& img) {
    if (!(img.time > 0.0)) throw std::invalid_argument("quadrant_mass: t must be > 0");
    const double rt = std::sqrt(img.time);
    return standard_bvn_cdf(-img.mean.x1 / rt, -img.mean.x2 / rt, img.rho);
}

} // namespace moi2d
