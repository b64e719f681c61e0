#include "eprobust/uncertainty.hpp"
#include "support/linear_models.hpp"

#include <doctest.h>

using namespace eprobust;
using oracle::Linear;
using oracle::points_at_margins;

namespace {

DisagreementCurve synthetic(const std::vector<double>& eps, double (*d)(double)) {
    std::vector<Index> k, n;
    for (double e : eps) {
        n.push_back(Index(1) << 40);
        k.push_back(Index(std::llround(d(e) * double(n.back()))));
    }
    return make_curve(Norm::l2, eps, k, n);
}

}  // namespace

TEST_CASE("wilson interval") {
    const auto ci = wilson_interval(5, 10);
    CHECK(ci.lo == doctest::Approx(0.2366).epsilon(1e-3));
    CHECK(ci.hi == doctest::Approx(0.7634).epsilon(1e-3));
    CHECK(wilson_interval(0, 50).lo == 0.0);
    CHECK(wilson_interval(0, 50).hi > 0.0);
    CHECK(wilson_interval(50, 50).hi == doctest::Approx(1.0));
}

TEST_CASE("fit recovers exact power laws") {
    const std::vector<double> eps{0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    auto sq = fit_exponent(synthetic(eps, [](double e) { return e * e; }));
    CHECK(std::abs(sq.alpha - 2.0) < 1e-6);
    CHECK(sq.cells_used == 6);
    CHECK(sq.residual < 1e-6);
    auto lin = fit_exponent(synthetic(eps, [](double e) { return 0.3 * e; }));
    CHECK(std::abs(lin.alpha - 1.0) < 1e-6);
    CHECK(std::exp(lin.intercept) == doctest::Approx(0.3).epsilon(1e-6));

    // saturated and empty cells are left out of the fit
    auto clipped = fit_exponent(synthetic({0.001, 0.01, 0.02, 0.05, 0.1, 10.0},
                                          [](double e) { return e < 0.005 ? 0.0 : std::min(1.0, e * e); }));
    CHECK(clipped.cells_used == 4);
    CHECK(clipped.fit_lo == 0.01);
    CHECK(clipped.fit_hi == 0.1);
    CHECK(std::abs(clipped.alpha - 2.0) < 1e-6);
}

TEST_CASE("fit needs three interior cells") {
    auto curve = make_curve(Norm::linf, std::vector<double>{0.1, 0.2, 0.3, 0.4}, std::vector<Index>{0, 3, 5, 10},
                            std::vector<Index>{10, 10, 10, 10});
    try {
        fit_exponent(curve);
        FAIL("expected UncertaintyError");
    } catch (const UncertaintyError& e) {
        CHECK(std::string(e.what()).find("widen the epsilon grid") != std::string::npos);
    }
}

TEST_CASE("ball cap probability") {
    CHECK(ball_cap_probability(0.5, 0.4, 3) == 0.0);
    for (double a : {0.0, 0.2, 0.5, 0.9}) {
        CHECK(ball_cap_probability(a, 1.0, 1) == doctest::Approx((1 - a) / 2).epsilon(1e-6));
        const double h = 1 - a;
        CHECK(ball_cap_probability(a, 1.0, 3) == doctest::Approx(h * h * (3 - h) / 4).epsilon(1e-6));
    }
    CHECK(ball_cap_probability(0.3, 2.0, 10) == doctest::Approx(ball_cap_probability(0.15, 1.0, 10)));

    // Monte Carlo in 6 dimensions
    std::mt19937_64 rng(1);
    Index hit = 0;
    const Index n = 200000;
    for (Index i = 0; i < n; ++i) hit += sample_ball<double>(6, Norm::l2, 1.0, rng)[0] > 0.25;
    const auto ci = wilson_interval(hit, n, 4.0);
    CHECK(ci.contains(ball_cap_probability(0.25, 1.0, 6)));
}

TEST_CASE("trivial curves") {
    std::mt19937_64 rng(2);
    Linear lin{oracle::random_tensor({8}, rng).values().normalized()};
    std::vector<double> margins;
    auto xs = points_at_margins(lin.w, 20, 1.0, rng, margins);
    const std::vector<double> tiny{1e-8};
    CHECK(disagreement_curve<double>(lin, xs, Norm::l2, tiny, 50, 3).cells[0].disagreements == 0);
    auto constant = [](const Tensor<double>&) { return 1; };
    for (const auto& c : disagreement_curve<double>(constant, xs, Norm::linf, std::vector<double>{0.1, 1, 10}, 20, 3).cells)
        CHECK(c.rate == 0.0);
    CHECK_THROWS_AS(disagreement_curve<double>(lin, xs, Norm::l2, std::vector<double>{0.2, 0.1}, 5, 0), UncertaintyError);
    CHECK_THROWS_AS(disagreement_curve<double>(lin, xs, Norm::l2, std::vector<double>{0.0, 0.1}, 5, 0), UncertaintyError);
}

TEST_CASE("linear classifier matches the analytic curve") {
    std::mt19937_64 rng(3);
    const Index dim = 16;
    Linear lin{oracle::random_tensor({dim}, rng).values().normalized()};
    std::vector<double> margins;
    auto xs = points_at_margins(lin.w, 200, 1.0, rng, margins);
    const std::vector<double> eps{0.02, 0.04, 0.08, 0.16, 0.32, 0.64};

    const auto curve = disagreement_curve<double>(lin, xs, Norm::l2, eps, 100, 4);
    const auto again = disagreement_curve<double>(lin, xs, Norm::l2, eps, 100, 4);
    std::vector<Index> exact_k, n;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        CHECK(curve.cells[k].disagreements == again.cells[k].disagreements);
        double p = 0;
        for (double m : margins) p += ball_cap_probability(m, eps[k], dim);
        p /= double(margins.size());
        // three-sigma-ish Wilson band per cell
        CHECK(wilson_interval(curve.cells[k].disagreements, curve.cells[k].trials, 3.0).contains(p));
        n.push_back(Index(1) << 40);
        exact_k.push_back(Index(std::llround(p * double(n.back()))));
        if (k > 0) {
            const auto& a = curve.cells[k - 1];
            const auto& b = curve.cells[k];
            const double sigma = std::sqrt(a.rate * (1 - a.rate) / double(a.trials) + b.rate * (1 - b.rate) / double(b.trials));
            CHECK(b.rate >= a.rate - 2 * sigma);
        }
    }
    const auto analytic = fit_exponent(make_curve(Norm::l2, eps, exact_k, n));
    // continuous uniform margins would give exactly alpha = 1; a 200-point grid is close
    CHECK(analytic.alpha == doctest::Approx(1.0).epsilon(0.02));

    const auto boot = bootstrap_exponent(curve, 400, 5);
    CHECK(boot.replicates_used == 400);
    CHECK(boot.alpha.contains(analytic.alpha));
    CHECK(boot.alpha.hi - boot.alpha.lo < 0.2);
    CHECK(fit_exponent(curve).alpha == doctest::Approx(1.0).epsilon(0.05));
}
