#pragma once

// Layered Hopfield-like energy
//
//   phi(x, s) = sum_conv <s^n, P(w_n * s^{n-1}) + b_n> + sum_fc (s^n^T w_n s^{n-1} + <b_n, s^n>)
//
// with s^{-1} = x, P = 2x2 max pooling, and the synchronous dynamics
// s <- clamp_[0,1](d phi / d s), started from the all-zero state.

#include "eprobust/loss.hpp"
#include "eprobust/params.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace eprobust {

template <typename Scalar>
struct NetworkState {
    Tensor<Scalar> input;
    std::vector<Tensor<Scalar>> layers;
    /// Pooling routes (one per conv layer) used by the most recent update.
    std::vector<PoolIndices> routes;

    const Tensor<Scalar>& top() const { return layers.empty() ? input : layers.back(); }
    const Tensor<Scalar>& below(Index layer) const { return layer == 0 ? input : layers[std::size_t(layer - 1)]; }
};

template <typename Scalar>
NetworkState<Scalar> zero_state(const Tensor<Scalar>& x, const ModelSpec& spec) {
    if (x.shape() != spec.input_shape)
        throw ShapeError("zero_state", "input shape", to_string(x.shape()) + " vs " + to_string(spec.input_shape));
    NetworkState<Scalar> s{x, {}, {}};
    for (auto& shape : spec.state_shapes()) s.layers.emplace_back(shape);
    return s;
}

/// One evaluation of d phi / d s for every layer, together with the pooling
/// routes it was computed with. `pre` is what gets clamped by a dynamics step.
template <typename Scalar>
struct Drive {
    std::vector<Tensor<Scalar>> pre;
    std::vector<PoolIndices> routes;
};

template <typename Scalar>
std::pair<Tensor<Scalar>, std::optional<PoolIndices>> bottom_up(Index layer, const Tensor<Scalar>& lower,
                                                                 const Params<Scalar>& params,
                                                                 const ModelSpec& spec) {
    const auto& w = params.weights[std::size_t(layer)];
    const auto& b = params.biases[std::size_t(layer)];
    if (spec.is_conv(layer)) {
        auto [pooled, route] = maxpool2(conv2d(lower, w, spec.conv_layers[std::size_t(layer)]));
        add_channel_bias(pooled, b);
        return {std::move(pooled), std::move(route)};
    }
    return {affine(lower.reshaped({lower.size()}), w, b), std::nullopt};
}

/// Contribution of layer+1 to d phi / d s^layer.
template <typename Scalar>
Tensor<Scalar> top_down(Index layer, const Tensor<Scalar>& upper, const PoolIndices* upper_route,
                        const Shape& layer_shape, const Params<Scalar>& params, const ModelSpec& spec) {
    const auto& w = params.weights[std::size_t(layer + 1)];
    if (spec.is_conv(layer + 1))
        return conv2d_transpose(unpool2(upper, *upper_route), w, spec.conv_layers[std::size_t(layer + 1)]);
    return affine_transpose(upper, w, layer_shape);
}

/// Binds (x, params, spec) and caches the input layer's bottom-up term,
/// which does not change during relaxation.
template <typename Scalar>
class EnergyDynamics {
public:
    EnergyDynamics(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec)
        : x_(x), params_(params), spec_(spec) {
        if (x.shape() != spec.input_shape)
            throw ShapeError("EnergyDynamics", "input shape", to_string(x.shape()) + " vs " + to_string(spec.input_shape));
        if (spec.num_layers() > 0) {
            auto [drive, route] = bottom_up(0, x, params, spec);
            input_drive_ = std::move(drive);
            input_route_ = std::move(route);
        }
    }

    const Tensor<Scalar>& input() const { return x_; }
    const Params<Scalar>& params() const { return params_; }
    const ModelSpec& spec() const { return spec_; }

    Drive<Scalar> drive(const std::vector<Tensor<Scalar>>& layers) const {
        const Index N = spec_.num_layers();
        Drive<Scalar> d;
        d.pre.reserve(std::size_t(N));
        for (Index n = 0; n < N; ++n) {
            if (n == 0) {
                d.pre.push_back(input_drive_);
                if (input_route_) d.routes.push_back(*input_route_);
                continue;
            }
            auto [bu, route] = bottom_up(n, layers[std::size_t(n - 1)], params_, spec_);
            d.pre.push_back(std::move(bu));
            if (route) d.routes.push_back(std::move(*route));
        }
        for (Index n = 0; n + 1 < N; ++n) {
            const PoolIndices* route = spec_.is_conv(n + 1) ? &d.routes[std::size_t(n + 1)] : nullptr;
            d.pre[std::size_t(n)].values() +=
                top_down(n, layers[std::size_t(n + 1)], route, layers[std::size_t(n)].shape(), params_, spec_).values();
        }
        return d;
    }

    /// d L / d s^top for softmax cross-entropy on the readout.
    Tensor<Scalar> loss_grad_top(const Tensor<Scalar>& top, int label) const {
        const VectorX<Scalar> z = logits_of(top);
        return affine_transpose(Tensor<Scalar>({z.size()}, cross_entropy_grad(z, label)), params_.readout_weight,
                                top.shape());
    }

    VectorX<Scalar> logits_of(const Tensor<Scalar>& top) const {
        return affine(top.reshaped({top.size()}), params_.readout_weight, params_.readout_bias).values();
    }

private:
    const Tensor<Scalar>& x_;
    const Params<Scalar>& params_;
    const ModelSpec& spec_;
    Tensor<Scalar> input_drive_;
    std::optional<PoolIndices> input_route_;
};

template <typename Scalar>
double phi(const Tensor<Scalar>& x, const NetworkState<Scalar>& state, const Params<Scalar>& params,
           const ModelSpec& spec) {
    double total = 0.0;
    for (Index n = 0; n < spec.num_layers(); ++n) {
        const Tensor<Scalar>& lower = n == 0 ? x : state.layers[std::size_t(n - 1)];
        total += dot(state.layers[std::size_t(n)], bottom_up(n, lower, params, spec).first);
    }
    return total;
}

/// d phi / d s^n for every energy layer; routes are refreshed from `state`.
template <typename Scalar>
std::vector<Tensor<Scalar>> phi_grad_state(const Tensor<Scalar>& x, const NetworkState<Scalar>& state,
                                           const Params<Scalar>& params, const ModelSpec& spec) {
    return EnergyDynamics<Scalar>(x, params, spec).drive(state.layers).pre;
}

namespace detail {

template <typename Scalar>
Scalar max_step(const std::vector<Tensor<Scalar>>& a, const std::vector<Tensor<Scalar>>& b) {
    Scalar m(0);
    for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, max_abs_diff(a[n], b[n]));
    return m;
}

}  // namespace detail

struct Nudge {
    int label = 0;
    double beta = 0.0;
};

template <typename Scalar>
struct Relaxation {
    NetworkState<Scalar> state;
    int steps = 0;
    double residual = 0.0;  // max-norm change made by the last step
    bool converged = false;
    std::vector<NetworkState<Scalar>> trajectory;  // states after each step, when recorded
};

/// Runs up to `steps` clamped updates from `init`. With `early_stop`, exits as
/// soon as an update moves no entry by fp_tol or more.
template <typename Scalar>
Relaxation<Scalar> relax(const EnergyDynamics<Scalar>& dyn, NetworkState<Scalar> init, int steps, bool early_stop,
                         std::optional<Nudge> nudge = std::nullopt, bool record = false) {
    const ModelSpec& spec = dyn.spec();
    Relaxation<Scalar> r{std::move(init), 0, 0.0, false, {}};
    if (spec.num_layers() == 0) {
        r.converged = true;
        return r;
    }
    for (int t = 0; t < steps; ++t) {
        Drive<Scalar> d = dyn.drive(r.state.layers);
        if (nudge && nudge->beta != 0.0) {
            const Tensor<Scalar> g = dyn.loss_grad_top(r.state.layers.back(), nudge->label);
            d.pre.back().values() -= Scalar(nudge->beta) * g.values();
        }
        std::vector<Tensor<Scalar>> next;
        next.reserve(d.pre.size());
        for (const auto& p : d.pre) next.push_back(hard_clamp(p));
        r.residual = double(detail::max_step(next, r.state.layers));
        r.state.layers = std::move(next);
        r.state.routes = std::move(d.routes);
        r.steps = t + 1;
        if (record) r.trajectory.push_back(r.state);
        if (r.residual < spec.fp_tol) {
            r.converged = true;
            if (early_stop) break;
        } else {
            r.converged = false;
        }
    }
    return r;
}

template <typename Scalar>
Relaxation<Scalar> free_phase(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec, int steps,
                              bool record = false) {
    if (steps < 1) throw std::invalid_argument("free_phase: steps must be >= 1");
    EnergyDynamics<Scalar> dyn(x, params, spec);
    return relax(dyn, zero_state(x, spec), steps, true, std::nullopt, record);
}

template <typename Scalar>
Relaxation<Scalar> free_phase(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec) {
    return free_phase(x, params, spec, spec.t_free);
}

/// Starts at the free fixed point and runs spec.t_nudge updates of
/// s <- clamp(d phi/ds - beta * dL/ds), where the loss reaches the top layer
/// through the readout.
template <typename Scalar>
NetworkState<Scalar> nudged_phase(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec,
                                  const NetworkState<Scalar>& s_star, int label, double beta_signed) {
    EnergyDynamics<Scalar> dyn(x, params, spec);
    return relax(dyn, s_star, spec.t_nudge, false, Nudge{label, beta_signed}).state;
}

template <typename Scalar>
VectorX<Scalar> readout(const NetworkState<Scalar>& state, const Params<Scalar>& params) {
    const auto& top = state.top();
    return affine(top.reshaped({top.size()}), params.readout_weight, params.readout_bias).values();
}

template <typename Scalar>
struct Prediction {
    int label = 0;
    VectorX<Scalar> logits;
};

/// Prediction after exactly `t` free-phase steps (no early exit).
template <typename Scalar>
Prediction<Scalar> predict_at(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec, int t) {
    if (t < 1) throw std::invalid_argument("predict_at: t must be >= 1");
    EnergyDynamics<Scalar> dyn(x, params, spec);
    auto r = relax(dyn, zero_state(x, spec), t, false);
    VectorX<Scalar> z = readout(r.state, params);
    return {argmax(z), std::move(z)};
}

}  // namespace eprobust
