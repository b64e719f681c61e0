#pragma once

// Forward-only logits queries for black-box attacks. Nothing here can
// differentiate a model, so it is safe in EPROBUST_BLACKBOX_ONLY units.

#include "eprobust/feedforward.hpp"
#include "eprobust/normalization.hpp"
#include "eprobust/square.hpp"

#include <memory>

namespace eprobust {

/// Energy model read out after exactly t free-phase steps.
template <typename Scalar>
QueryModel<Scalar> energy_query(Params<Scalar> params, ModelSpec spec, int t, Normalization norm = {}) {
    if (t < 1) throw std::invalid_argument("energy_query: t must be >= 1");
    params.check(spec);
    auto m = std::make_shared<const std::tuple<Params<Scalar>, ModelSpec, Normalization>>(std::move(params), std::move(spec),
                                                                                        std::move(norm));
    return [m, t](const Tensor<Scalar>& x) {
        const auto& [p, s, n] = *m;
        return predict_at(n.apply(x), p, s, t).logits;
    };
}

template <typename Scalar>
QueryModel<Scalar> feedforward_query(Params<Scalar> params, ModelSpec spec, Normalization norm = {}) {
    params.check(spec);
    auto m = std::make_shared<const std::tuple<Params<Scalar>, ModelSpec, Normalization>>(std::move(params), std::move(spec),
                                                                                        std::move(norm));
    return [m](const Tensor<Scalar>& x) {
        const auto& [p, s, n] = *m;
        return feedforward(n.apply(x), p, s).logits;
    };
}

}  // namespace eprobust
