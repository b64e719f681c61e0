#pragma once

// Single bottom-up sweep over the same architecture: conv -> pool -> +bias ->
// clamp per layer, then the readout. This is the backprop baseline; its
// reverse sweep lives in backprop.hpp.

#include "eprobust/energy.hpp"

namespace eprobust {

template <typename Scalar>
struct FeedForwardTrace {
    std::vector<Tensor<Scalar>> pre;
    std::vector<Tensor<Scalar>> acts;
    std::vector<PoolIndices> routes;
    VectorX<Scalar> logits;
};

template <typename Scalar>
FeedForwardTrace<Scalar> feedforward(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec) {
    if (x.shape() != spec.input_shape)
        throw ShapeError("feedforward", "input shape", to_string(x.shape()) + " vs " + to_string(spec.input_shape));
    FeedForwardTrace<Scalar> tr;
    for (Index n = 0; n < spec.num_layers(); ++n) {
        auto [pre, route] = bottom_up(n, n == 0 ? x : tr.acts.back(), params, spec);
        tr.acts.push_back(hard_clamp(pre));
        tr.pre.push_back(std::move(pre));
        if (route) tr.routes.push_back(std::move(*route));
    }
    const Tensor<Scalar>& top = tr.acts.empty() ? x : tr.acts.back();
    tr.logits = affine(top.reshaped({top.size()}), params.readout_weight, params.readout_bias).values();
    return tr;
}

}  // namespace eprobust
