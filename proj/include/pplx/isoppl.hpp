#pragma once

#include "pplx/common.hpp"

#include <optional>
#include <utility>

namespace pplx {

// Log-perplexity of the identical-confidence model: probability 1-gamma on
// every hit, gamma on every miss, accuracy a.
Scalar pplx_model(Scalar a, Scalar gamma);

// Accuracy a' that holds the perplexity constant after sharpening the
// confidence by delta_gamma.
Scalar critical_accuracy(Scalar a, Scalar gamma, Scalar delta_gamma);

struct IsoPoint {
    Scalar a = 0;
    Scalar gamma = 0;
    Scalar delta_gamma = 0;
    Scalar delta_over_gamma = 0; // the plots' normalized abscissa
    Scalar a_prime = 0;          // unclamped; may leave [0,1] in degenerate corners
    Scalar pplx = 0;             // the shared iso level
    bool a_prime_above_one = false;
};

std::vector<IsoPoint> iso_curve(Scalar a, Scalar gamma, const std::vector<Scalar>& delta_grid);

// 512 uniform points on [0, 0.999*gamma]
std::vector<Scalar> uniform_delta_grid(Scalar gamma, size_t points = 512);

// Smallest base accuracy whose iso-curve slopes downward at delta_gamma = 0.
// Deliberately numeric (finite differences + bisection); the closed form is
// kept out of the implementation so tests can cross-check it independently.
Scalar free_lunch_threshold(Scalar gamma);

struct GammaFit {
    bool feasible = false;
    std::optional<Scalar> gamma_low;  // solution with gamma <= 1-a (confident branch)
    std::optional<Scalar> gamma_high; // solution with gamma >= 1-a
    std::optional<Scalar> preferred;  // gamma < 1/2 preferred, low branch on ties
    Scalar min_pplx = 0;              // feasibility floor: min over gamma of pplx_model(a, .)
};

// Inverts pplx_model(a, .) = L on both monotone branches by bisection.
GammaFit fit_gamma(Scalar L, Scalar a);

struct MisrankReport {
    std::vector<std::pair<size_t, size_t>> pairs; // (i, j) with i < j, L_i < L_j, a_i < a_j
    Scalar fraction = 0;                          // share of all i < j pairs
};

MisrankReport misranked_pairs(const std::vector<std::pair<Scalar, Scalar>>& points_l_a);

} // namespace pplx
