#pragma once

#include "eprobust/tensor.hpp"

#include <cmath>

namespace eprobust {

template <typename Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& z) {
    VectorX<Scalar> e = (z.array() - z.maxCoeff()).exp().matrix();
    return e / e.sum();
}

/// Lowest index wins ties.
template <typename Scalar>
int argmax(const VectorX<Scalar>& z) {
    int best = 0;
    for (Index i = 1; i < z.size(); ++i)
        if (z[i] > z[best]) best = int(i);
    return best;
}

template <typename Scalar>
Scalar cross_entropy(const VectorX<Scalar>& z, int label) {
    const Scalar m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum()) - z[label];
}

/// d cross_entropy / d logits = softmax(z) - onehot(label).
template <typename Scalar>
VectorX<Scalar> cross_entropy_grad(const VectorX<Scalar>& z, int label) {
    VectorX<Scalar> g = softmax(z);
    g[label] -= Scalar(1);
    return g;
}

/// z_label - max_{j != label} z_j; negative once the example is misclassified.
template <typename Scalar>
Scalar margin(const VectorX<Scalar>& z, int label, int* runner_up = nullptr) {
    int best = -1;
    for (Index j = 0; j < z.size(); ++j)
        if (j != label && (best < 0 || z[j] > z[best])) best = int(j);
    if (runner_up) *runner_up = best;
    return best < 0 ? Scalar(0) : z[label] - z[best];
}

}  // namespace eprobust
