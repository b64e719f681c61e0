#pragma once

// Finite-difference references for the EP estimates and the unrolled
// input gradient.

#include "eprobust/ep_update.hpp"
#include "eprobust/grad.hpp"
#include "support/oracles.hpp"

namespace oracle {

using eprobust::EnergyDynamics;
using eprobust::ModelSpec;
using eprobust::Params;
using eprobust::VectorX;

inline VectorX<double> flatten_layers(const Params<double>& g) {
    std::vector<double> v;
    for (const auto& [name, t] : g.named())
        if (name.rfind("readout", 0) != 0) v.insert(v.end(), t->data(), t->data() + t->size());
    return Eigen::Map<VectorX<double>>(v.data(), Index(v.size()));
}

inline double fixed_point_loss(const Tensor<double>& x, int label, const Params<double>& p, const ModelSpec& spec) {
    return oracle::brute_cross_entropy(oracle::brute_readout(free_phase(x, p, spec).state.top(), p), label);
}

/// -dL/dtheta of the fixed-point loss by central differences, layer tensors only.
inline Params<double> fd_negative_gradient(const Tensor<double>& x, int label, Params<double> p, const ModelSpec& spec,
                                           double h = 1e-5) {
    Params<double> out = zero_params<double>(spec);
    auto pn = p.named();
    auto on = out.named();
    for (std::size_t k = 0; k < pn.size(); ++k) {
        if (pn[k].first.rfind("readout", 0) == 0) continue;
        for (Index i = 0; i < pn[k].second->size(); ++i) {
            const double v = (*pn[k].second)[i];
            (*pn[k].second)[i] = v + h;
            const double lp = fixed_point_loss(x, label, p, spec);
            (*pn[k].second)[i] = v - h;
            const double lm = fixed_point_loss(x, label, p, spec);
            (*pn[k].second)[i] = v;
            (*on[k].second)[i] = -(lp - lm) / (2 * h);
        }
    }
    return out;
}

/// Clamp masks and pooling routes along the whole unrolled trajectory.
inline std::vector<Index> activity(const Tensor<double>& x, const Params<double>& p, const ModelSpec& spec, int t) {
    EnergyDynamics<double> dyn(x, p, spec);
    const auto tape = record_tape(dyn, t);
    std::vector<Index> sig;
    for (int k = 0; k < tape.steps(); ++k) {
        for (const auto& pre : tape.pre[std::size_t(k)])
            for (Index i = 0; i < pre.size(); ++i) sig.push_back(pre[i] < 0 ? 0 : pre[i] > 1 ? 2 : 1);
        for (const auto& r : tape.routes[std::size_t(k)]) sig.insert(sig.end(), r.source.begin(), r.source.end());
    }
    return sig;
}

}  // namespace oracle
