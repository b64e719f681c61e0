#pragma once

// Model views consumed by attacks, evaluation and the uncertainty estimator.
// Inputs are pixel-space images in [0,1]; normalization happens inside.

#include "eprobust/backprop.hpp"
#include "eprobust/grad.hpp"
#include "eprobust/normalization.hpp"

#include <functional>

namespace eprobust {

/// Logits-only view.
template <typename Scalar>
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual VectorX<Scalar> logits(const Tensor<Scalar>& x) const = 0;
    int predict(const Tensor<Scalar>& x) const { return argmax(logits(x)); }
};

/// Adds exact input gradients of a scalar function of the logits.
template <typename Scalar>
class DifferentiableClassifier : public Classifier<Scalar> {
public:
    virtual ValueAndGrad<Scalar> value_and_grad(const Tensor<Scalar>& x, const LogitHead<Scalar>& head) const = 0;

    ValueAndGrad<Scalar> loss_and_grad(const Tensor<Scalar>& x, int label) const {
        return value_and_grad(x, cross_entropy_head<Scalar>(label));
    }
};

/// Energy network read out after exactly `timestep` free-phase steps.
template <typename Scalar>
class EnergyClassifier final : public DifferentiableClassifier<Scalar> {
public:
    EnergyClassifier(Params<Scalar> params, ModelSpec spec, int timestep, Normalization norm = {})
        : params_(std::move(params)), spec_(std::move(spec)), timestep_(timestep), norm_(std::move(norm)) {
        params_.check(spec_);
        if (timestep_ < 1) throw std::invalid_argument("EnergyClassifier: timestep must be >= 1");
    }

    VectorX<Scalar> logits(const Tensor<Scalar>& x) const override {
        return predict_at(norm_.apply(x), params_, spec_, timestep_).logits;
    }

    ValueAndGrad<Scalar> value_and_grad(const Tensor<Scalar>& x, const LogitHead<Scalar>& head) const override {
        auto r = input_vjp(norm_.apply(x), params_, spec_, timestep_, head);
        r.grad = norm_.pullback(r.grad);
        return r;
    }

    int timestep() const { return timestep_; }
    const Params<Scalar>& params() const { return params_; }
    const ModelSpec& spec() const { return spec_; }

private:
    Params<Scalar> params_;
    ModelSpec spec_;
    int timestep_;
    Normalization norm_;
};

template <typename Scalar>
class FeedForwardClassifier final : public DifferentiableClassifier<Scalar> {
public:
    FeedForwardClassifier(Params<Scalar> params, ModelSpec spec, Normalization norm = {})
        : params_(std::move(params)), spec_(std::move(spec)), norm_(std::move(norm)) {
        params_.check(spec_);
    }

    VectorX<Scalar> logits(const Tensor<Scalar>& x) const override {
        return feedforward(norm_.apply(x), params_, spec_).logits;
    }

    ValueAndGrad<Scalar> value_and_grad(const Tensor<Scalar>& x, const LogitHead<Scalar>& head) const override {
        const Tensor<Scalar> xn = norm_.apply(x);
        const auto tr = feedforward(xn, params_, spec_);
        ValueAndGrad<Scalar> out;
        out.logits = tr.logits;
        VectorX<Scalar> dz;
        out.value = head(tr.logits, dz);
        out.grad = norm_.pullback(feedforward_backward<Scalar>(xn, tr, dz, params_, spec_, nullptr));
        return out;
    }

private:
    Params<Scalar> params_;
    ModelSpec spec_;
    Normalization norm_;
};

/// Logits-only closure over a classifier, for black-box consumers.
template <typename Scalar>
std::function<VectorX<Scalar>(const Tensor<Scalar>&)> as_query(const Classifier<Scalar>& model) {
    return [&model](const Tensor<Scalar>& x) { return model.logits(x); };
}

}  // namespace eprobust
