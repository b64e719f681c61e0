#pragma once

// Square attack (linf, untargeted, margin loss) and a random-corner baseline.
// Both see the model only through a logits query; this header must not pull
// in anything that can differentiate a model.

#include "eprobust/attack_config.hpp"
#include "eprobust/loss.hpp"
#include "eprobust/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace eprobust {

template <typename Scalar>
using QueryModel = std::function<VectorX<Scalar>(const Tensor<Scalar>&)>;

/// Fraction of pixels changed by one proposal at iteration `it` of `budget`,
/// following the reference schedule written for 10000 iterations.
inline double square_fraction(double p_init, long it, long budget) {
    const long i = long(double(it) / double(std::max(budget, 1L)) * 10000.0);
    static constexpr long bounds[] = {10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000};
    double p = p_init;
    for (long b : bounds) {
        if (i <= b) break;
        p /= 2;
    }
    return i > 10000 ? p_init : p;
}

/// Side of the square patch for fraction p of an h x w image.
inline Index square_side(double p, Index h, Index w) {
    const Index s = Index(std::lround(std::sqrt(p * double(h * w))));
    return std::clamp<Index>(s, 1, std::max<Index>(h - 1, 1));
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> clip_box(Tensor<Scalar> x) {
    x.values() = x.values().cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    return x;
}

template <typename Scalar>
void check_batch(std::span<const Tensor<Scalar>> xs, std::span<const int> ys, const char* who) {
    if (xs.size() != ys.size()) throw ShapeError(who, "batch", Index(xs.size()), Index(ys.size()));
}

}  // namespace detail

template <typename Scalar>
AttackResult<Scalar> square_attack(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                                   const QueryModel<Scalar>& query, const AttackConfig& cfg, double p_init = 0.8) {
    cfg.validate();
    if (cfg.family != AttackFamily::square) throw std::invalid_argument("square_attack: family must be square");
    detail::check_batch(xs, ys, "square_attack");
    AttackResult<Scalar> out;
    out.resize(xs.size());
    parallel_for(xs.size(), [&](std::size_t e) {
        const Tensor<Scalar>& x0 = xs[e];
        const int y = ys[e];
        if (x0.rank() != 3) throw ShapeError("square_attack", "image rank", 3, x0.rank());
        const Index C = x0.dim(0), H = x0.dim(1), W = x0.dim(2);
        const Scalar eps = Scalar(cfg.epsilon);
        std::mt19937_64 rng(example_seed(cfg.seed, e));
        std::bernoulli_distribution coin(0.5);
        long queries = 0;
        auto ask = [&](const Tensor<Scalar>& x) {
            ++queries;
            return query(x);
        };

        Tensor<Scalar> best = x0;
        VectorX<Scalar> z = ask(x0);
        Scalar best_margin = margin(z, y);
        int best_pred = argmax(z);
        bool done = best_pred != y || cfg.epsilon == 0.0 || queries >= cfg.query_budget;

        Tensor<Scalar> delta(x0.shape());
        if (!done) {
            // vertical stripes: one sign per (channel, column)
            for (Index c = 0; c < C; ++c)
                for (Index j = 0; j < W; ++j) {
                    const Scalar v = coin(rng) ? eps : -eps;
                    for (Index i = 0; i < H; ++i) delta(c, i, j) = v;
                }
            Tensor<Scalar> x = detail::clip_box(Tensor<Scalar>(x0.shape(), x0.values() + delta.values()));
            z = ask(x);
            best = std::move(x);
            best_margin = margin(z, y);
            best_pred = argmax(z);
            done = best_pred != y;
        }
        long it = 0;
        while (!done && queries < cfg.query_budget) {
            const Index s = square_side(square_fraction(p_init, it, cfg.query_budget), H, W);
            ++it;
            std::uniform_int_distribution<Index> rpos(0, H - s), cpos(0, W - s);
            const Index r0 = rpos(rng), c0 = cpos(rng);
            Tensor<Scalar> proposal = delta;
            for (int attempt = 0; attempt < 64; ++attempt) {
                for (Index c = 0; c < C; ++c) {
                    const Scalar v = coin(rng) ? eps : -eps;
                    for (Index i = r0; i < r0 + s; ++i)
                        for (Index j = c0; j < c0 + s; ++j) proposal(c, i, j) = v;
                }
                // resample until the clipped window actually changes
                double change = 0;
                for (Index c = 0; c < C; ++c)
                    for (Index i = r0; i < r0 + s; ++i)
                        for (Index j = c0; j < c0 + s; ++j)
                            change += std::abs(std::clamp(x0(c, i, j) + proposal(c, i, j), Scalar(0), Scalar(1)) -
                                               best(c, i, j));
                if (change >= 1e-7) break;
            }
            Tensor<Scalar> x = detail::clip_box(Tensor<Scalar>(x0.shape(), x0.values() + proposal.values()));
            z = ask(x);
            const Scalar m = margin(z, y);
            if (m < best_margin) {
                best_margin = m;
                best = std::move(x);
                delta = std::move(proposal);
                best_pred = argmax(z);
                done = best_pred != y;
            }
        }
        out.adversarial[e] = best;
        out.loss[e] = double(best_margin);
        out.queries[e] = queries;
        out.perturbation[e] = distance(best, x0, Norm::linf);
        out.predicted[e] = best_pred;
        out.success[e] = best_pred != y;
    });
    return out;
}

/// Baseline with the same budget: each query tries an independent random
/// corner x0 + {-eps, +eps}^d (clipped to the box).
template <typename Scalar>
AttackResult<Scalar> random_noise_attack(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                                         const QueryModel<Scalar>& query, const AttackConfig& cfg) {
    cfg.validate();
    detail::check_batch(xs, ys, "random_noise_attack");
    AttackResult<Scalar> out;
    out.resize(xs.size());
    parallel_for(xs.size(), [&](std::size_t e) {
        const Tensor<Scalar>& x0 = xs[e];
        const int y = ys[e];
        std::mt19937_64 rng(example_seed(cfg.seed, e));
        std::bernoulli_distribution coin(0.5);
        long queries = 1;
        VectorX<Scalar> z = query(x0);
        Tensor<Scalar> best = x0;
        Scalar best_margin = margin(z, y);
        int pred = argmax(z);
        while (pred == y && cfg.epsilon > 0 && queries < cfg.query_budget) {
            Tensor<Scalar> x = x0;
            for (Index i = 0; i < x.size(); ++i) x[i] += coin(rng) ? Scalar(cfg.epsilon) : Scalar(-cfg.epsilon);
            x = detail::clip_box(std::move(x));
            z = query(x);
            ++queries;
            const Scalar m = margin(z, y);
            if (m < best_margin || argmax(z) != y) {
                best_margin = m;
                best = std::move(x);
                pred = argmax(z);
            }
        }
        out.adversarial[e] = std::move(best);
        out.success[e] = pred != y;
        out.predicted[e] = pred;
        out.loss[e] = double(best_margin);
        out.queries[e] = queries;
        out.perturbation[e] = distance(out.adversarial[e], x0, Norm::linf);
    });
    return out;
}

}  // namespace eprobust
