#pragma once

// Reverse-mode differentiation of a readout loss with respect to the input,
// through t recorded steps of the free-phase dynamics. Pooling routes are
// constants of the forward pass; the clamp subgradient is 1 on [0,1].

#include "eprobust/energy.hpp"
#include "eprobust/parallel.hpp"

#ifdef EPROBUST_BLACKBOX_ONLY
#error "gradient engine included in a black-box-only translation unit"
#endif

#include <functional>
#include <span>

namespace eprobust {

template <typename Scalar>
struct UnrolledTape {
    Tensor<Scalar> input;
    std::vector<std::vector<Tensor<Scalar>>> states;  // states[0] is the zero init, states[k] follows step k
    std::vector<std::vector<Tensor<Scalar>>> pre;     // pre[k] is clamped into states[k + 1]
    std::vector<std::vector<PoolIndices>> routes;     // routes[k] used by step k

    int steps() const { return int(pre.size()); }
    const Tensor<Scalar>& top() const { return states.back().empty() ? input : states.back().back(); }

    /// Bytes held by saved states, pre-activations and routes. Grows linearly
    /// in the step count and in the total state size.
    std::size_t bytes() const {
        std::size_t b = 0;
        for (const auto& step : states)
            for (const auto& s : step) b += std::size_t(s.size()) * sizeof(Scalar);
        for (const auto& step : pre)
            for (const auto& s : step) b += std::size_t(s.size()) * sizeof(Scalar);
        for (const auto& step : routes)
            for (const auto& r : step) b += r.source.size() * sizeof(Index);
        return b;
    }
};

template <typename Scalar>
UnrolledTape<Scalar> record_tape(const EnergyDynamics<Scalar>& dyn, int t) {
    if (t < 1) throw std::invalid_argument("record_tape: t must be >= 1");
    UnrolledTape<Scalar> tape;
    tape.input = dyn.input();
    tape.states.push_back(zero_state(dyn.input(), dyn.spec()).layers);
    if (dyn.spec().num_layers() == 0) return tape;
    for (int k = 0; k < t; ++k) {
        Drive<Scalar> d = dyn.drive(tape.states.back());
        std::vector<Tensor<Scalar>> next;
        for (const auto& p : d.pre) next.push_back(hard_clamp(p));
        tape.pre.push_back(std::move(d.pre));
        tape.routes.push_back(std::move(d.routes));
        tape.states.push_back(std::move(next));
    }
    return tape;
}

/// Re-runs the dynamics from the tape's input; used to check tapes are faithful.
template <typename Scalar>
std::vector<std::vector<Tensor<Scalar>>> replay_tape(const UnrolledTape<Scalar>& tape, const Params<Scalar>& params,
                                                     const ModelSpec& spec) {
    EnergyDynamics<Scalar> dyn(tape.input, params, spec);
    std::vector<std::vector<Tensor<Scalar>>> out{zero_state(tape.input, spec).layers};
    for (int k = 0; k < tape.steps(); ++k) out.push_back(relax(dyn, NetworkState<Scalar>{tape.input, out.back(), {}}, 1, false).state.layers);
    return out;
}

/// Pulls a cotangent on the final top state back to the input.
template <typename Scalar>
Tensor<Scalar> backprop_tape(const UnrolledTape<Scalar>& tape, const Tensor<Scalar>& top_cotangent,
                             const Params<Scalar>& params, const ModelSpec& spec) {
    const Index N = spec.num_layers();
    if (N == 0) return top_cotangent.reshaped(tape.input.shape());

    Tensor<Scalar> dx(tape.input.shape());
    std::vector<Tensor<Scalar>> ds;
    for (const auto& s : tape.states.back()) ds.emplace_back(s.shape());
    ds.back() = top_cotangent.reshaped(ds.back().shape());

    for (int k = tape.steps() - 1; k >= 0; --k) {
        const auto& pre = tape.pre[std::size_t(k)];
        const auto& routes = tape.routes[std::size_t(k)];
        std::vector<Tensor<Scalar>> dprev;
        for (const auto& s : ds) dprev.emplace_back(s.shape());

        for (Index n = 0; n < N; ++n) {
            Tensor<Scalar> dpre(ds[std::size_t(n)].shape(),
                                ds[std::size_t(n)].values().cwiseProduct(hard_clamp_mask(pre[std::size_t(n)]).values()));
            if (dpre.values().isZero(0)) continue;
            const auto& w = params.weights[std::size_t(n)];
            const Shape& lower_shape = n == 0 ? tape.input.shape() : ds[std::size_t(n - 1)].shape();
            // bottom-up term of layer n depends on the layer below (or the input)
            Tensor<Scalar> dlower = spec.is_conv(n)
                ? conv2d_transpose(unpool2(dpre, routes[std::size_t(n)]), w, spec.conv_layers[std::size_t(n)])
                : affine_transpose(dpre, w, lower_shape);
            (n == 0 ? dx : dprev[std::size_t(n - 1)]).values() += dlower.values();
            // top-down term of layer n depends linearly on layer n+1
            if (n + 1 < N) {
                const auto& wu = params.weights[std::size_t(n + 1)];
                Tensor<Scalar> dupper = spec.is_conv(n + 1)
                    ? pool_select(conv2d(dpre, wu, spec.conv_layers[std::size_t(n + 1)]), routes[std::size_t(n + 1)])
                    : affine(dpre.reshaped({dpre.size()}), wu, Tensor<Scalar>({wu.dim(0)}));
                dprev[std::size_t(n + 1)].values() += dupper.values();
            }
        }
        ds = std::move(dprev);
    }
    return dx;
}

/// Scalar function of the logits: returns its value and writes d/dlogits.
template <typename Scalar>
using LogitHead = std::function<Scalar(const VectorX<Scalar>& logits, VectorX<Scalar>& dlogits)>;

template <typename Scalar>
LogitHead<Scalar> cross_entropy_head(int label) {
    return [label](const VectorX<Scalar>& z, VectorX<Scalar>& dz) {
        dz = cross_entropy_grad(z, label);
        return cross_entropy(z, label);
    };
}

template <typename Scalar>
struct ValueAndGrad {
    Scalar value{};
    Tensor<Scalar> grad;
    VectorX<Scalar> logits;
};

/// head(readout(s_t(x))) and its exact gradient with respect to x.
template <typename Scalar>
ValueAndGrad<Scalar> input_vjp(const Tensor<Scalar>& x, const Params<Scalar>& params, const ModelSpec& spec, int t,
                               const LogitHead<Scalar>& head) {
    EnergyDynamics<Scalar> dyn(x, params, spec);
    const UnrolledTape<Scalar> tape = record_tape(dyn, t);
    ValueAndGrad<Scalar> out;
    out.logits = dyn.logits_of(tape.top());
    VectorX<Scalar> dz;
    out.value = head(out.logits, dz);
    const Tensor<Scalar>& top = tape.top();
    const Tensor<Scalar> dtop = affine_transpose(Tensor<Scalar>({dz.size()}, dz), params.readout_weight, top.shape());
    out.grad = backprop_tape(tape, dtop, params, spec);
    return out;
}

/// Gradient of softmax cross-entropy at free-phase step t with respect to x.
template <typename Scalar>
Tensor<Scalar> input_grad(const Tensor<Scalar>& x, int label, const Params<Scalar>& params, const ModelSpec& spec,
                          int t) {
    return input_vjp(x, params, spec, t, cross_entropy_head<Scalar>(label)).grad;
}

template <typename Scalar>
struct BatchLossGrad {
    std::vector<Scalar> losses;
    std::vector<Tensor<Scalar>> grads;
};

template <typename Scalar>
BatchLossGrad<Scalar> loss_and_grad_batch(std::span<const Tensor<Scalar>> xs, std::span<const int> ys,
                                          const Params<Scalar>& params, const ModelSpec& spec, int t) {
    if (xs.size() != ys.size()) throw ShapeError("loss_and_grad_batch", "batch", Index(xs.size()), Index(ys.size()));
    BatchLossGrad<Scalar> out{std::vector<Scalar>(xs.size()), std::vector<Tensor<Scalar>>(xs.size())};
    parallel_for(xs.size(), [&](std::size_t i) {
        auto r = input_vjp(xs[i], params, spec, t, cross_entropy_head<Scalar>(ys[i]));
        out.losses[i] = r.value;
        out.grads[i] = std::move(r.grad);
    });
    return out;
}

}  // namespace eprobust
