#pragma once

#include "eprobust/feedforward.hpp"

#ifdef EPROBUST_BLACKBOX_ONLY
#error "backprop included in a black-box-only translation unit"
#endif

namespace eprobust {

/// Reverse sweep. Writes parameter gradients into `dparams` (same layout as
/// params) when given, and returns the gradient with respect to x.
template <typename Scalar>
Tensor<Scalar> feedforward_backward(const Tensor<Scalar>& x, const FeedForwardTrace<Scalar>& tr,
                                    const VectorX<Scalar>& dlogits, const Params<Scalar>& params,
                                    const ModelSpec& spec, Params<Scalar>* dparams) {
    const Index N = spec.num_layers();
    const Tensor<Scalar>& top = tr.acts.empty() ? x : tr.acts.back();
    const Tensor<Scalar> dz({dlogits.size()}, dlogits);
    if (dparams) {
        dparams->readout_weight = outer(dz, top.reshaped({top.size()}));
        dparams->readout_bias = dz;
    }
    Tensor<Scalar> da = affine_transpose(dz, params.readout_weight, top.shape());
    for (Index n = N - 1; n >= 0; --n) {
        const auto& lower = n == 0 ? x : tr.acts[std::size_t(n - 1)];
        const auto& w = params.weights[std::size_t(n)];
        Tensor<Scalar> dpre(da.shape(), da.values().cwiseProduct(hard_clamp_mask(tr.pre[std::size_t(n)]).values()));
        if (spec.is_conv(n)) {
            const ConvSpec& cs = spec.conv_layers[std::size_t(n)];
            const Tensor<Scalar> dconv = unpool2(dpre, tr.routes[std::size_t(n)]);
            if (dparams) {
                dparams->weights[std::size_t(n)] = conv2d_weight_grad(lower, dconv, cs);
                dparams->biases[std::size_t(n)] = channel_sums(dpre);
            }
            da = conv2d_transpose(dconv, w, cs);
        } else {
            if (dparams) {
                dparams->weights[std::size_t(n)] = outer(dpre, lower.reshaped({lower.size()}));
                dparams->biases[std::size_t(n)] = dpre;
            }
            da = affine_transpose(dpre, w, lower.shape());
        }
    }
    return da;
}

}  // namespace eprobust
