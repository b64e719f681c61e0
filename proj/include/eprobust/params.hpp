#pragma once

#include "eprobust/model_spec.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace eprobust {

/// Weight set of a layered network: one (weight, bias) pair per energy layer
/// plus the readout. Conv biases are per output channel.
template <typename Scalar>
struct Params {
    std::vector<Tensor<Scalar>> weights;
    std::vector<Tensor<Scalar>> biases;
    Tensor<Scalar> readout_weight;
    Tensor<Scalar> readout_bias;

    Index num_layers() const { return Index(weights.size()); }

    /// Every tensor in a fixed order, paired with its checkpoint name.
    std::vector<std::pair<std::string, Tensor<Scalar>*>> named() {
        std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
        for (std::size_t n = 0; n < weights.size(); ++n) {
            out.emplace_back("layer" + std::to_string(n) + ".weight", &weights[n]);
            out.emplace_back("layer" + std::to_string(n) + ".bias", &biases[n]);
        }
        out.emplace_back("readout.weight", &readout_weight);
        out.emplace_back("readout.bias", &readout_bias);
        return out;
    }

    std::vector<std::pair<std::string, const Tensor<Scalar>*>> named() const {
        std::vector<std::pair<std::string, const Tensor<Scalar>*>> out;
        for (auto& [name, t] : const_cast<Params*>(this)->named()) out.emplace_back(name, t);
        return out;
    }

    template <typename To>
    Params<To> cast() const {
        Params<To> p;
        for (const auto& w : weights) p.weights.push_back(w.template cast<To>());
        for (const auto& b : biases) p.biases.push_back(b.template cast<To>());
        p.readout_weight = readout_weight.template cast<To>();
        p.readout_bias = readout_bias.template cast<To>();
        return p;
    }

    bool all_finite() const {
        for (const auto& [name, t] : named())
            if (!t->all_finite()) return false;
        return true;
    }

    void check(const ModelSpec& spec) const {
        if (Index(weights.size()) != spec.num_layers() || Index(biases.size()) != spec.num_layers())
            throw ShapeError("Params", "layer count", spec.num_layers(), Index(weights.size()));
        for (Index n = 0; n < spec.num_layers(); ++n) {
            if (weights[std::size_t(n)].shape() != spec.weight_shape(n))
                throw ShapeError("Params", "layer" + std::to_string(n) + ".weight",
                                 to_string(weights[std::size_t(n)].shape()) + " vs " + to_string(spec.weight_shape(n)));
            if (biases[std::size_t(n)].shape() != spec.bias_shape(n))
                throw ShapeError("Params", "layer" + std::to_string(n) + ".bias",
                                 to_string(biases[std::size_t(n)].shape()) + " vs " + to_string(spec.bias_shape(n)));
        }
        const Shape ro{spec.readout_dim, spec.top_dim()};
        if (readout_weight.shape() != ro)
            throw ShapeError("Params", "readout.weight", to_string(readout_weight.shape()) + " vs " + to_string(ro));
        if (readout_bias.shape() != Shape{spec.readout_dim})
            throw ShapeError("Params", "readout.bias", spec.readout_dim, readout_bias.size());
    }

    friend bool operator==(const Params&, const Params&) = default;
};

template <typename Scalar>
Params<Scalar> zero_params(const ModelSpec& spec) {
    spec.validate();
    Params<Scalar> p;
    for (Index n = 0; n < spec.num_layers(); ++n) {
        p.weights.emplace_back(spec.weight_shape(n));
        p.biases.emplace_back(spec.bias_shape(n));
    }
    p.readout_weight = Tensor<Scalar>({spec.readout_dim, spec.top_dim()});
    p.readout_bias = Tensor<Scalar>({spec.readout_dim});
    return p;
}

/// Uniform(-gain/sqrt(fan_in), gain/sqrt(fan_in)) for weights and biases alike.
template <typename Scalar>
Params<Scalar> init_params(const ModelSpec& spec, std::uint64_t seed, double gain = 1.0) {
    Params<Scalar> p = zero_params<Scalar>(spec);
    std::mt19937_64 rng(seed);
    auto fill = [&](Tensor<Scalar>& t, Index fan_in) {
        const double bound = gain / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(u(rng));
    };
    for (Index n = 0; n < spec.num_layers(); ++n) {
        const Shape ws = spec.weight_shape(n);
        const Index fan_in = spec.is_conv(n) ? ws[1] * ws[2] * ws[3] : ws[1];
        fill(p.weights[std::size_t(n)], fan_in);
        fill(p.biases[std::size_t(n)], fan_in);
    }
    fill(p.readout_weight, spec.top_dim());
    fill(p.readout_bias, spec.top_dim());
    return p;
}

}  // namespace eprobust
