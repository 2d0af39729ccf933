#include "pplx/isoppl.hpp"

#include <cmath>

namespace pplx {

namespace {

constexpr int kBisectIters = 200;
constexpr Scalar kBisectTol = 1e-12;

// Eq-8 shape without preconditions, usable at negative delta_gamma for the
// centered finite difference in free_lunch_threshold.
Scalar crit_raw(Scalar level, Scalar g) {
    return (level + std::log(g)) / (std::log(g) - std::log(1.0 - g));
}

} // namespace

Scalar pplx_model(Scalar a, Scalar gamma) {
    if (a < 0 || a > 1) throw std::invalid_argument("pplx_model: accuracy must lie in [0, 1]");
    if (gamma <= 0 || gamma >= 1) {
        throw std::domain_error("pplx_model: gamma must lie strictly inside (0, 1), got " +
                                std::to_string(gamma));
    }
    return -a * std::log(1.0 - gamma) - (1.0 - a) * std::log(gamma);
}

Scalar critical_accuracy(Scalar a, Scalar gamma, Scalar delta_gamma) {
    if (gamma <= 0 || gamma >= 0.5) {
        throw std::domain_error("critical_accuracy: gamma must lie in (0, 1/2), got " + std::to_string(gamma));
    }
    if (delta_gamma < 0 || delta_gamma >= gamma) {
        throw std::domain_error("critical_accuracy: delta_gamma must lie in [0, gamma), got " +
                                std::to_string(delta_gamma));
    }
    return crit_raw(pplx_model(a, gamma), gamma - delta_gamma);
}

std::vector<IsoPoint> iso_curve(Scalar a, Scalar gamma, const std::vector<Scalar>& delta_grid) {
    if (delta_grid.empty()) throw std::invalid_argument("iso_curve: empty grid");
    const Scalar level = pplx_model(a, gamma);
    std::vector<IsoPoint> out;
    out.reserve(delta_grid.size());
    for (Scalar dg : delta_grid) {
        IsoPoint p;
        p.a = a;
        p.gamma = gamma;
        p.delta_gamma = dg;
        p.delta_over_gamma = dg / gamma;
        p.a_prime = critical_accuracy(a, gamma, dg);
        p.pplx = level;
        p.a_prime_above_one = p.a_prime > 1.0;
        // the defining property, checked at emission rather than trusted
        const Scalar back = -p.a_prime * std::log(1.0 - (gamma - dg)) -
                            (1.0 - p.a_prime) * std::log(gamma - dg);
        if (std::abs(back - level) > 1e-10) {
            throw std::logic_error("iso_curve: round-trip drift " + std::to_string(std::abs(back - level)));
        }
        out.push_back(p);
    }
    return out;
}

std::vector<Scalar> uniform_delta_grid(Scalar gamma, size_t points) {
    if (gamma <= 0 || gamma >= 0.5) {
        throw std::domain_error("uniform_delta_grid: gamma must lie in (0, 1/2)");
    }
    if (points < 2) throw std::invalid_argument("uniform_delta_grid: need at least 2 points");
    std::vector<Scalar> grid(points);
    const Scalar hi = 0.999 * gamma;
    for (size_t i = 0; i < points; ++i) {
        grid[i] = hi * static_cast<Scalar>(i) / static_cast<Scalar>(points - 1);
    }
    return grid;
}

Scalar free_lunch_threshold(Scalar gamma) {
    if (gamma <= 0 || gamma >= 0.5) {
        throw std::domain_error("free_lunch_threshold: gamma must lie in (0, 1/2)");
    }
    const Scalar h = 1e-6 * gamma;
    auto slope_at_zero = [&](Scalar a) {
        const Scalar level = pplx_model(a, gamma);
        return (crit_raw(level, gamma - h) - crit_raw(level, gamma + h)) / (2.0 * h);
    };
    // slope decreases in a and crosses zero once; bracket then bisect
    Scalar lo = 0.0, hi = 1.0;
    if (slope_at_zero(lo) < 0) return lo;
    if (slope_at_zero(hi) > 0) return hi;
    for (int it = 0; it < kBisectIters && hi - lo > kBisectTol; ++it) {
        const Scalar mid = 0.5 * (lo + hi);
        if (slope_at_zero(mid) < 0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

namespace {

// Bisection for pplx_model(a, .) = level on a bracket where the sign of
// (pplx - level) differs between the endpoints.
std::optional<Scalar> solve_branch(Scalar a, Scalar level, Scalar lo, Scalar hi) {
    auto f = [&](Scalar g) { return -a * std::log(1.0 - g) - (1.0 - a) * std::log(g) - level; };
    Scalar flo = f(lo), fhi = f(hi);
    if (flo == 0) return lo;
    if (fhi == 0) return hi;
    if ((flo > 0) == (fhi > 0)) return std::nullopt;
    // Roots on the low branch can sit hundreds of decades below the bracket
    // top (gamma* ~ exp(-L/(1-a))), so bisect geometrically while the bracket
    // spans more than a couple of octaves; the -(1-a)*log(g) term turns gamma
    // error into perplexity error at rate 1/gamma, so the stopping rule must
    // be relative, not absolute.
    for (int it = 0; it < kBisectIters && hi - lo > kBisectTol * hi; ++it) {
        // sqrt(lo)*sqrt(hi), not sqrt(lo*hi): the product underflows for
        // brackets hugging the bottom of the double range
        const Scalar mid = lo < 0.25 * hi ? std::sqrt(lo) * std::sqrt(hi) : 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // bracket exhausted at double precision
        const Scalar fm = f(mid);
        if (fm == 0) return mid;
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace

GammaFit fit_gamma(Scalar L, Scalar a) {
    if (L < 0) throw std::invalid_argument("fit_gamma: log-perplexity must be non-negative");
    if (a < 0 || a > 1) throw std::invalid_argument("fit_gamma: accuracy must lie in [0, 1]");

    GammaFit fit;
    // the unique minimum of pplx_model(a, .) sits at gamma = 1-a
    const Scalar argmin = 1.0 - a;
    const Scalar lo_edge = 1e-300, hi_edge = 1.0 - 1e-16;
    if (argmin <= 0 || argmin >= 1) {
        fit.min_pplx = 0; // a = 0 or 1: one branch only, infimum 0 at the edge
    } else {
        fit.min_pplx = pplx_model(a, argmin);
    }
    if (L < fit.min_pplx) return fit; // infeasible

    if (argmin > 0) {
        fit.gamma_low = solve_branch(a, L, lo_edge, std::min(argmin, hi_edge));
    }
    if (argmin < 1) {
        // Mirrored: pplx_model(a, 1-u) = pplx_model(1-a, u), so the high
        // branch reuses the same solver in u = 1-gamma, keeping relative
        // precision as gamma approaches 1. The u bracket stops at 1e-16
        // because the largest double below 1.0 is 1 - 2^-53.
        const Scalar u_lo = 1e-16;
        const Scalar u_hi = std::min(a, hi_edge);
        if (u_hi > u_lo) {
            if (auto u = solve_branch(1.0 - a, L, u_lo, u_hi)) fit.gamma_high = 1.0 - *u;
        }
    }
    fit.feasible = fit.gamma_low.has_value() || fit.gamma_high.has_value();
    if (fit.gamma_low && *fit.gamma_low < 0.5) {
        fit.preferred = fit.gamma_low;
    } else if (fit.gamma_high && *fit.gamma_high < 0.5) {
        fit.preferred = fit.gamma_high;
    } else if (fit.gamma_low) {
        fit.preferred = fit.gamma_low;
    } else if (fit.gamma_high) {
        fit.preferred = fit.gamma_high;
    }
    return fit;
}

MisrankReport misranked_pairs(const std::vector<std::pair<Scalar, Scalar>>& points_l_a) {
    const size_t n = points_l_a.size();
    if (n < 2) throw std::invalid_argument("misranked_pairs: need at least 2 points");
    MisrankReport rep;
    for (size_t i = 0; i + 1 < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const auto& [li, ai] = points_l_a[i];
            const auto& [lj, aj] = points_l_a[j];
            if (li < lj && ai < aj) rep.pairs.emplace_back(i, j);
        }
    }
    rep.fraction = static_cast<Scalar>(rep.pairs.size()) / (static_cast<Scalar>(n) * (n - 1) / 2.0);
    return rep;
}

} // namespace pplx
