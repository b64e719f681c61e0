#pragma once

// How fast predictions become unstable as the perturbation radius grows.
// D(eps) is the probability that a uniform draw from the eps-ball around x
// changes the predicted class; on a log-log plot D ~ eps^alpha.

#include "eprobust/norm.hpp"
#include "eprobust/parallel.hpp"
#include "eprobust/seed.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace eprobust {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Wilson score interval for k successes in n trials.
Interval wilson_interval(Index k, Index n, double z = 1.96);

struct DisagreementCell {
    double epsilon = 0.0;
    Index disagreements = 0;
    Index trials = 0;
    double rate = 0.0;
    Interval ci;
};

struct DisagreementCurve {
    Norm norm = Norm::linf;
    std::vector<DisagreementCell> cells;
};

DisagreementCurve make_curve(Norm norm, std::span<const double> eps, std::span<const Index> disagreements,
                             std::span<const Index> trials);

class UncertaintyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Samples are not clipped to the pixel box: the ball is the object of study.
template <typename Scalar, typename Predict>
DisagreementCurve disagreement_curve(Predict&& predict, std::span<const Tensor<Scalar>> xs, Norm norm,
                                     std::span<const double> eps_grid, Index samples, std::uint64_t seed) {
    for (std::size_t k = 0; k < eps_grid.size(); ++k)
        if (!(eps_grid[k] > 0) || (k > 0 && !(eps_grid[k] > eps_grid[k - 1])))
            throw UncertaintyError("disagreement_curve: epsilon grid must be positive and strictly increasing");
    if (samples < 1) throw UncertaintyError("disagreement_curve: samples must be >= 1");

    const std::size_t E = eps_grid.size(), N = xs.size();
    std::vector<Index> flips(N * E, 0);
    parallel_for(N, [&](std::size_t i) {
        const Tensor<Scalar>& x = xs[i];
        const int base = predict(x);
        std::mt19937_64 rng(example_seed(seed, i));
        for (std::size_t k = 0; k < E; ++k)
            for (Index s = 0; s < samples; ++s) {
                Tensor<Scalar> xp(x.shape(), x.values() + sample_ball<Scalar>(x.size(), norm, eps_grid[k], rng));
                flips[i * E + k] += predict(xp) != base;
            }
    });
    std::vector<Index> dis(E, 0), trials(E, Index(N) * samples);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < E; ++k) dis[k] += flips[i * E + k];
    return make_curve(norm, eps_grid, dis, trials);
}

struct ExponentFit {
    std::vector<double> epsilon;
    std::vector<double> rate;
    std::vector<Interval> ci;
    /// Slope of log D against log eps.
    double alpha = 0.0;
    double intercept = 0.0;
    /// Epsilon range of the cells used (rate strictly inside (0,1)).
    double fit_lo = 0.0;
    double fit_hi = 0.0;
    Index cells_used = 0;
    /// Root-mean-square residual in log D.
    double residual = 0.0;
};

/// Least squares over interior cells; needs at least three of them.
ExponentFit fit_exponent(const DisagreementCurve& curve);

struct BootstrapResult {
    Interval alpha;
    /// Replicates with fewer than three interior cells are dropped.
    Index replicates_used = 0;
};

/// Percentile interval of alpha over curves whose counts are redrawn as
/// Binomial(trials, observed rate).
BootstrapResult bootstrap_exponent(const DisagreementCurve& curve, Index replicates, std::uint64_t seed,
                                   double level = 0.95);

/// Probability that a uniform draw from the radius-eps l2 ball in `dim`
/// dimensions crosses a hyperplane at distance `margin` from the center.
double ball_cap_probability(double margin, double eps, Index dim);

}  // namespace eprobust
