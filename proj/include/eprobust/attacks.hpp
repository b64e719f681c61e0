#pragma once

// White-box attacks on pixel-space inputs in [0,1]: PGD (l2, linf) and
// C&W-l2, plus a suite runner that also drives the black-box Square attack.

#include "eprobust/classifier.hpp"
#include "eprobust/square.hpp"

namespace eprobust {

/// Nearest point of the epsilon-ball around x0, then clipped to [0,1].
template <typename Scalar>
Tensor<Scalar> project(const Tensor<Scalar>& x0, const Tensor<Scalar>& x, Norm norm, double epsilon) {
    if (x0.shape() != x.shape()) throw ShapeError("project", "shape", to_string(x0.shape()) + " vs " + to_string(x.shape()));
    VectorX<Scalar> d = x.values() - x0.values();
    if (norm == Norm::linf) {
        d = d.cwiseMax(Scalar(-epsilon)).cwiseMin(Scalar(epsilon));
    } else if (std::isfinite(epsilon)) {
        const double n = lp_norm<Scalar>(d, Norm::l2);
        if (n > epsilon) d *= Scalar(epsilon / n);
    }
    Tensor<Scalar> out(x.shape(), x0.values() + d);
    out.values() = out.values().cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    return out;
}

/// argmax over the unit ball of <v, g>: sign(g) for linf, g/|g| for l2.
template <typename Scalar>
Tensor<Scalar> steepest_ascent(const Tensor<Scalar>& g, Norm norm) {
    Tensor<Scalar> v(g.shape());
    if (norm == Norm::linf) {
        v.values() = g.values().array().sign().matrix();
    } else {
        const double n = lp_norm<Scalar>(g.values(), Norm::l2);
        if (n > 0) v.values() = g.values() / Scalar(n);
    }
    return v;
}

template <typename Scalar>
LogitHead<Scalar> margin_head(int label) {
    return [label](const VectorX<Scalar>& z, VectorX<Scalar>& dz) {
        int other = 0;
        const Scalar m = margin(z, label, &other);
        dz = VectorX<Scalar>::Zero(z.size());
        if (other >= 0) {
            dz[label] = 1;
            dz[other] = -1;
        }
        return m;
    };
}

template <typename Scalar>
AttackResult<Scalar> pgd_attack(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                                const DifferentiableClassifier<Scalar>& model, const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.family != AttackFamily::pgd) throw std::invalid_argument("pgd_attack: family must be pgd");
    detail::check_batch(xs, ys, "pgd_attack");
    const double alpha = cfg.effective_step();
    AttackResult<Scalar> out;
    out.resize(xs.size());
    parallel_for(xs.size(), [&](std::size_t e) {
        const Tensor<Scalar>& x0 = xs[e];
        const int y = ys[e];
        std::mt19937_64 rng(example_seed(cfg.seed, e));
        Tensor<Scalar> x = x0;
        if (cfg.random_start && cfg.epsilon > 0)
            x = project(x0, Tensor<Scalar>(x0.shape(), x0.values() + sample_ball<Scalar>(x0.size(), cfg.norm, cfg.epsilon, rng)),
                        cfg.norm, cfg.epsilon);
        long queries = 0;
        if (cfg.epsilon > 0) {
            for (int k = 0; k < cfg.steps; ++k) {
                const auto vg = model.loss_and_grad(x, y);
                ++queries;
                const Tensor<Scalar> step = steepest_ascent(vg.grad, cfg.norm);
                x = project(x0, Tensor<Scalar>(x.shape(), x.values() + Scalar(alpha) * step.values()), cfg.norm,
                            cfg.epsilon);
            }
        }
        const VectorX<Scalar> z = model.logits(x);
        ++queries;
        out.predicted[e] = argmax(z);
        out.success[e] = out.predicted[e] != y;
        out.loss[e] = double(cross_entropy(z, y));
        out.queries[e] = queries;
        out.perturbation[e] = distance(x, x0, cfg.norm);
        out.adversarial[e] = std::move(x);
    });
    return out;
}

/// Minimizes |x - x0|^2 + c * max(z_y - max_{j!=y} z_j, -kappa) over
/// x = (tanh(w) + 1) / 2 with Adam, keeping the smallest successful iterate.
/// Inputs that are never misclassified come back unchanged.
template <typename Scalar>
AttackResult<Scalar> cw_attack(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                               const DifferentiableClassifier<Scalar>& model, const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.family != AttackFamily::cw) throw std::invalid_argument("cw_attack: family must be cw");
    detail::check_batch(xs, ys, "cw_attack");
    AttackResult<Scalar> out;
    out.resize(xs.size());
    parallel_for(xs.size(), [&](std::size_t e) {
        const Tensor<Scalar>& x0 = xs[e];
        const int y = ys[e];
        const Index d = x0.size();
        const double lim = 1.0 - 1e-6;
        VectorX<double> w(d), m = VectorX<double>::Zero(d), v = VectorX<double>::Zero(d);
        for (Index i = 0; i < d; ++i) w[i] = std::atanh(std::clamp(2.0 * double(x0[i]) - 1.0, -lim, lim));
        const double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
        double best_norm = std::numeric_limits<double>::infinity();
        Tensor<Scalar> best = x0;
        int best_pred = -1;
        long queries = 0;
        Tensor<Scalar> x(x0.shape());
        for (int k = 0; k <= cfg.steps; ++k) {
            for (Index i = 0; i < d; ++i) x[i] = Scalar((std::tanh(w[i]) + 1.0) / 2.0);
            const auto vg = model.value_and_grad(x, margin_head<Scalar>(y));
            ++queries;
            const double dist = distance(x, x0, Norm::l2);
            const int pred = argmax(vg.logits);
            if (pred != y && dist < best_norm && dist <= cfg.epsilon + 1e-7) {
                best_norm = dist;
                best = x;
                best_pred = pred;
            }
            if (k == cfg.steps) break;
            const bool active = double(vg.value) > -cfg.cw_kappa;
            for (Index i = 0; i < d; ++i) {
                const double th = std::tanh(w[i]);
                double gx = 2.0 * (double(x[i]) - double(x0[i]));
                if (active) gx += cfg.cw_constant * double(vg.grad[i]);
                const double gw = gx * (1.0 - th * th) / 2.0;
                m[i] = b1 * m[i] + (1 - b1) * gw;
                v[i] = b2 * v[i] + (1 - b2) * gw * gw;
                const double mh = m[i] / (1 - std::pow(b1, k + 1)), vh = v[i] / (1 - std::pow(b2, k + 1));
                w[i] -= cfg.cw_lr * mh / (std::sqrt(vh) + tiny);
            }
        }
        const VectorX<Scalar> z = best_pred < 0 ? model.logits(x0) : model.logits(best);
        ++queries;
        out.predicted[e] = argmax(z);
        out.success[e] = out.predicted[e] != y;
        out.loss[e] = double(margin(z, y));
        out.queries[e] = queries;
        out.perturbation[e] = distance(best, x0, Norm::l2);
        out.adversarial[e] = std::move(best);
    });
    return out;
}

template <typename Scalar>
AttackResult<Scalar> run_attack(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                                const DifferentiableClassifier<Scalar>& model, const AttackConfig& cfg) {
    switch (cfg.family) {
        case AttackFamily::pgd: return pgd_attack(xs, ys, model, cfg);
        case AttackFamily::cw: return cw_attack(xs, ys, model, cfg);
        case AttackFamily::square: return square_attack(xs, ys, as_query(model), cfg);
    }
    throw std::invalid_argument("run_attack: unknown family");
}

template <typename Scalar>
struct SuiteResult {
    std::vector<AttackResult<Scalar>> results;
    /// Survived every attack in the suite.
    std::vector<char> robust;
    double worst_case_accuracy = 0.0;
};

template <typename Scalar>
SuiteResult<Scalar> attack_suite(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                                 const DifferentiableClassifier<Scalar>& model,
                                 const std::vector<AttackConfig>& attacks) {
    if (attacks.empty()) throw std::invalid_argument("attack_suite: no attacks configured");
    SuiteResult<Scalar> out;
    out.robust.assign(xs.size(), 1);
    for (const auto& cfg : attacks) {
        out.results.push_back(run_attack(xs, ys, model, cfg));
        for (std::size_t e = 0; e < xs.size(); ++e)
            if (out.results.back().success[e]) out.robust[e] = 0;
    }
    std::size_t k = 0;
    for (char r : out.robust) k += r != 0;
    out.worst_case_accuracy = xs.empty() ? 0.0 : double(k) / double(xs.size());
    return out;
}

}  // namespace eprobust
