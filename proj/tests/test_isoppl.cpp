#include "doctest.h"

#include "pplx/isoppl.hpp"

#include <cmath>
#include <limits>

using namespace pplx;

TEST_CASE("pplx_model spot values") {
    CHECK(pplx_model(1.0, 0.3) == doctest::Approx(-std::log(0.7)).epsilon(1e-15));
    CHECK(pplx_model(0.5, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(pplx_model(0.9, 0.4) == doctest::Approx(0.551372134576807).epsilon(1e-12));
    CHECK_THROWS_AS(pplx_model(0.5, 0.0), std::domain_error);
    CHECK_THROWS_AS(pplx_model(0.5, 1.0), std::domain_error);
    CHECK_THROWS_AS(pplx_model(1.5, 0.4), std::invalid_argument);
}

TEST_CASE("critical accuracy") {
    // identity at delta = 0, across a grid; g stops at 0.45 because the
    // denominator log(g) - log(1-g) vanishes at g = 1/2 and takes all
    // precision with it
    for (int ka = 0; ka <= 10; ++ka) {
        for (int kg = 1; kg <= 9; ++kg) {
            const Scalar a = 0.1 * ka;
            const Scalar g = 0.05 * kg;
            CHECK(std::abs(critical_accuracy(a, g, 0.0) - a) <= 1e-12);
        }
    }
    CHECK(critical_accuracy(0.9, 0.4, 0.2) == doctest::Approx(0.763233125324520).epsilon(1e-12));

    // a' climbs toward 1 as delta approaches gamma
    const Scalar near = critical_accuracy(0.5, 0.4, 0.4 - 1e-12);
    CHECK(near > critical_accuracy(0.5, 0.4, 0.2));
    CHECK(near > 0.97);
    CHECK(near < 1.0);

    CHECK_THROWS_AS(critical_accuracy(0.5, 0.4, 0.4), std::domain_error);
    CHECK_THROWS_AS(critical_accuracy(0.5, 0.4, -0.01), std::domain_error);
    CHECK_THROWS_AS(critical_accuracy(0.5, 0.6, 0.1), std::domain_error);
}

TEST_CASE("iso-perplexity round trip") {
    // the defining property over a dense grid
    for (Scalar a = 0.0; a <= 1.0001; a += 0.125) {
        const Scalar aa = std::min(a, 1.0);
        for (Scalar g = 0.05; g < 0.5; g += 0.06) {
            const Scalar level = pplx_model(aa, g);
            for (Scalar frac : {0.0, 0.2, 0.5, 0.8, 0.99}) {
                const Scalar dg = frac * g;
                const Scalar ap = critical_accuracy(aa, g, dg);
                const Scalar back = -ap * std::log(1.0 - (g - dg)) - (1.0 - ap) * std::log(g - dg);
                REQUIRE(std::abs(back - level) <= 1e-10);
            }
        }
    }
}

TEST_CASE("iso_curve") {
    auto single = iso_curve(0.7, 0.3, {0.0});
    REQUIRE(single.size() == 1);
    CHECK(single[0].a_prime == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(single[0].delta_over_gamma == 0.0);
    CHECK(single[0].pplx == doctest::Approx(pplx_model(0.7, 0.3)).epsilon(1e-15));

    // at chance accuracy the curves never dip (no free lunch at a = 0.5)
    auto grid = uniform_delta_grid(0.4, 512);
    REQUIRE(grid.size() == 512);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == doctest::Approx(0.999 * 0.4).epsilon(1e-15));
    auto curve = iso_curve(0.5, 0.4, grid);
    for (size_t i = 1; i < curve.size(); ++i) {
        REQUIRE(curve[i].a_prime >= curve[i - 1].a_prime - 1e-13);
    }

    CHECK_THROWS_AS(iso_curve(0.5, 0.4, {0.5}), std::domain_error);
    CHECK_THROWS_AS(iso_curve(0.5, 0.4, {}), std::invalid_argument);
}

TEST_CASE("free lunch threshold matches the closed form") {
    // numeric route vs the independent closed form 1 - gamma
    CHECK(free_lunch_threshold(0.4) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(free_lunch_threshold(0.25) == doctest::Approx(0.75).epsilon(1e-6));
    for (Scalar g = 0.05; g < 0.455; g += 0.025) {
        CHECK(std::abs(free_lunch_threshold(g) + g - 1.0) <= 1e-6);
    }

    // below the threshold the curve rises at delta = 0
    for (Scalar g : {0.1, 0.3, 0.45}) {
        const Scalar thr = free_lunch_threshold(g);
        const Scalar h = 1e-7 * g;
        for (Scalar a : {thr - 0.2, thr - 0.05}) {
            CHECK(critical_accuracy(a, g, h) > a);
        }
        for (Scalar a : {thr + 0.05, std::min(thr + 0.2, 1.0)}) {
            CHECK(critical_accuracy(a, g, h) < a);
        }
    }
    CHECK_THROWS_AS(free_lunch_threshold(0.5), std::domain_error);
}

TEST_CASE("gamma fitting") {
    // invert -log(1-gamma) at a = 1
    GammaFit f1 = fit_gamma(-std::log(0.8), 1.0);
    REQUIRE(f1.feasible);
    REQUIRE(f1.preferred.has_value());
    CHECK(*f1.preferred == doctest::Approx(0.2).epsilon(1e-9));

    // symmetry point: unique minimum at gamma = 1/2
    GammaFit f2 = fit_gamma(std::log(2.0), 0.5);
    REQUIRE(f2.feasible);
    CHECK(*f2.preferred == doctest::Approx(0.5).epsilon(1e-9));

    // below the floor is infeasible
    GammaFit f3 = fit_gamma(0.1, 0.5);
    CHECK(!f3.feasible);
    CHECK(!f3.preferred.has_value());
    CHECK(f3.min_pplx == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // round trip whenever feasible; both branches solve the equation
    Rng rng(27);
    for (int rep = 0; rep < 500; ++rep) {
        const Scalar a = rng.uniform();
        const Scalar gamma = 0.001 + 0.998 * rng.uniform();
        const Scalar level = pplx_model(a, gamma);
        GammaFit fit = fit_gamma(level, a);
        REQUIRE(fit.feasible);
        REQUIRE(fit.preferred.has_value());
        REQUIRE(std::abs(pplx_model(a, *fit.preferred) - level) <= 1e-9);
        if (fit.gamma_low) REQUIRE(std::abs(pplx_model(a, *fit.gamma_low) - level) <= 1e-9);
        if (fit.gamma_high) {
            // doubles just below 1.0 quantize gamma in steps of ~1.1e-16,
            // and pplx_model amplifies that grain by a/(1-gamma); no solver
            // can do better than land on the nearest representable value
            const Scalar grain =
                4.0 * std::numeric_limits<Scalar>::epsilon() * a / (1.0 - *fit.gamma_high);
            REQUIRE(std::abs(pplx_model(a, *fit.gamma_high) - level) <= 1e-9 + grain);
        }
        // the planted gamma is recovered on its own branch
        const Scalar recovered = gamma <= 1.0 - a ? fit.gamma_low.value() : fit.gamma_high.value();
        REQUIRE(recovered == doctest::Approx(gamma).epsilon(1e-7));
    }

    CHECK_THROWS_AS(fit_gamma(-0.1, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(fit_gamma(0.5, 1.5), std::invalid_argument);
}

TEST_CASE("misranked pairs") {
    using P = std::pair<Scalar, Scalar>;

    // anticorrelated: perplexity ranks the points correctly
    MisrankReport clean = misranked_pairs({P{0.1, 0.9}, P{0.5, 0.6}, P{0.9, 0.3}});
    CHECK(clean.pairs.empty());
    CHECK(clean.fraction == 0.0);

    // correlated: every pair misleads
    MisrankReport bad = misranked_pairs({P{0.1, 0.3}, P{0.5, 0.6}, P{0.9, 0.9}});
    CHECK(bad.pairs.size() == 3);
    CHECK(bad.fraction == 1.0);

    // the worked example: exactly the first two points form a misranked pair
    MisrankReport ex = misranked_pairs({P{1.0, 0.6}, P{2.0, 0.9}, P{1.5, 0.5}});
    REQUIRE(ex.pairs.size() == 1);
    CHECK(ex.pairs[0] == std::pair<size_t, size_t>(0, 1));
    CHECK(ex.fraction == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(misranked_pairs({P{1.0, 0.5}}), std::invalid_argument);

    // brute-force cross-check on random small sets
    Rng rng(53);
    for (int rep = 0; rep < 300; ++rep) {
        const size_t n = 2 + rng.below(8);
        std::vector<P> pts;
        for (size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(), rng.uniform());
        MisrankReport rep1 = misranked_pairs(pts);
        size_t count = 0;
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = i + 1; j < n; ++j) {
                if (pts[i].first < pts[j].first && pts[i].second < pts[j].second) ++count;
            }
        }
        REQUIRE(rep1.pairs.size() == count);
        // perfectly inverse orderings stay clean under any shared shuffle
        std::vector<P> inverse = pts;
        std::sort(inverse.begin(), inverse.end());
        for (size_t i = 0; i < n; ++i) inverse[i].second = 1.0 - static_cast<Scalar>(i) / n;
        for (size_t i = n - 1; i > 0; --i) std::swap(inverse[i], inverse[rng.below(i + 1)]);
        CHECK(misranked_pairs(inverse).pairs.empty());
    }
}
