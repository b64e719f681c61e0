#pragma once

#include "eprobust/tensor.hpp"

#include <vector>

namespace eprobust {

/// Per-channel input standardization applied in front of a model. Empty
/// vectors mean identity.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool identity() const { return mean.empty(); }

    template <typename Scalar>
    Tensor<Scalar> apply(const Tensor<Scalar>& x) const {
        if (identity()) return x;
        check(x);
        Tensor<Scalar> y = x;
        const Index plane = x.size() / x.dim(0);
        for (Index c = 0; c < x.dim(0); ++c)
            y.values().segment(c * plane, plane) =
                ((x.values().segment(c * plane, plane).array() - Scalar(mean[std::size_t(c)])) /
                 Scalar(stddev[std::size_t(c)])).matrix();
        return y;
    }

    /// Maps a gradient taken in normalized space back to pixel space.
    template <typename Scalar>
    Tensor<Scalar> pullback(const Tensor<Scalar>& g) const {
        if (identity()) return g;
        check(g);
        Tensor<Scalar> y = g;
        const Index plane = g.size() / g.dim(0);
        for (Index c = 0; c < g.dim(0); ++c)
            y.values().segment(c * plane, plane) /= Scalar(stddev[std::size_t(c)]);
        return y;
    }

    friend bool operator==(const Normalization&, const Normalization&) = default;

private:
    template <typename Scalar>
    void check(const Tensor<Scalar>& x) const {
        if (x.rank() != 3 || x.dim(0) != Index(mean.size()))
            throw ShapeError("Normalization", "channels", Index(mean.size()), x.rank() ? x.dim(0) : 0);
    }
};

}  // namespace eprobust
