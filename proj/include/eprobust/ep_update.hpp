#pragma once

// Equilibrium-propagation parameter estimates. Each estimate approximates the
// negative gradient of the readout loss at the free fixed point, so training
// moves parameters along it: theta <- theta + lr * estimate.

#include "eprobust/energy.hpp"

namespace eprobust {

/// Same layout as Params; the readout slots stay zero for EP estimates.
template <typename Scalar>
using GradEstimate = Params<Scalar>;

/// d phi / d (w_n, b_n) from the two states adjacent to layer n only.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> layer_phi_grad(Index layer, const Tensor<Scalar>& lower,
                                                         const Tensor<Scalar>& upper, const Params<Scalar>& params,
                                                         const ModelSpec& spec) {
    if (spec.is_conv(layer)) {
        const ConvSpec& cs = spec.conv_layers[std::size_t(layer)];
        const auto route = maxpool2(conv2d(lower, params.weights[std::size_t(layer)], cs)).second;
        return {conv2d_weight_grad(lower, unpool2(upper, route), cs), channel_sums(upper)};
    }
    return {outer(upper, lower.reshaped({lower.size()})), upper};
}

template <typename Scalar>
GradEstimate<Scalar> phi_grad_params(const Tensor<Scalar>& x, const NetworkState<Scalar>& state,
                                     const Params<Scalar>& params, const ModelSpec& spec) {
    GradEstimate<Scalar> g = zero_params<Scalar>(spec);
    for (Index n = 0; n < spec.num_layers(); ++n) {
        const Tensor<Scalar>& lower = n == 0 ? x : state.layers[std::size_t(n - 1)];
        auto [dw, db] = layer_phi_grad(n, lower, state.layers[std::size_t(n)], params, spec);
        g.weights[std::size_t(n)] = std::move(dw);
        g.biases[std::size_t(n)] = std::move(db);
    }
    return g;
}

namespace detail {

template <typename Scalar>
GradEstimate<Scalar> scaled_difference(const GradEstimate<Scalar>& a, const GradEstimate<Scalar>& b, double denom) {
    GradEstimate<Scalar> out = a;
    auto dst = out.named();
    const auto rhs = b.named();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i].second->values() = (dst[i].second->values() - rhs[i].second->values()) / Scalar(denom);
    return out;
}

}  // namespace detail

/// Free fixed point reached on the way to an estimate.
template <typename Scalar>
struct EpTrace {
    NetworkState<Scalar> free_state;
    int free_steps = 0;
    bool converged = false;
    VectorX<Scalar> logits;
};

/// (1/beta) (dphi/dtheta(s^beta) - dphi/dtheta(s_*)).
template <typename Scalar>
GradEstimate<Scalar> ep_update_one_sided(const Tensor<Scalar>& x, int label, const Params<Scalar>& params,
                                         const ModelSpec& spec, double beta, EpTrace<Scalar>* trace = nullptr) {
    auto free = free_phase(x, params, spec);
    const auto nudged = nudged_phase(x, params, spec, free.state, label, beta);
    auto g = detail::scaled_difference(phi_grad_params(x, nudged, params, spec),
                                       phi_grad_params(x, free.state, params, spec), beta);
    if (trace) *trace = {free.state, free.steps, free.converged, readout(free.state, params)};
    return g;
}

/// (1/2beta) (dphi/dtheta(s^+beta) - dphi/dtheta(s^-beta)), both nudged
/// phases starting from the same free fixed point.
template <typename Scalar>
GradEstimate<Scalar> ep_update_symmetric(const Tensor<Scalar>& x, int label, const Params<Scalar>& params,
                                         const ModelSpec& spec, double beta, EpTrace<Scalar>* trace = nullptr) {
    auto free = free_phase(x, params, spec);
    const auto plus = nudged_phase(x, params, spec, free.state, label, beta);
    const auto minus = nudged_phase(x, params, spec, free.state, label, -beta);
    auto g = detail::scaled_difference(phi_grad_params(x, plus, params, spec),
                                       phi_grad_params(x, minus, params, spec), 2.0 * beta);
    if (trace) *trace = {free.state, free.steps, free.converged, readout(free.state, params)};
    return g;
}

/// Delta rule for the readout at a state: -dL/d(readout) = (onehot - softmax) s^T.
template <typename Scalar>
void readout_delta(const NetworkState<Scalar>& state, int label, const Params<Scalar>& params,
                   GradEstimate<Scalar>& out) {
    const auto& top = state.top();
    const VectorX<Scalar> z = readout(state, params);
    const Tensor<Scalar> err({z.size()}, -cross_entropy_grad(z, label));
    out.readout_weight = outer(err, top.reshaped({top.size()}));
    out.readout_bias = err;
}

}  // namespace eprobust
