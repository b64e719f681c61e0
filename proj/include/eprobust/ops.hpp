#pragma once

// Forward and adjoint primitives the energy dynamics are built from.
// Convolution is cross-correlation (no kernel flip), stride 1.

#include "eprobust/tensor.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace eprobust {

struct ConvSpec {
    Index in_channels = 1;
    Index out_channels = 1;
    Index kernel = 3;
    Index padding = 0;

    Index output_extent(Index input_extent) const { return input_extent + 2 * padding - kernel + 1; }

    void validate() const {
        if (in_channels < 1) throw ShapeError("ConvSpec", "in_channels", "must be >= 1");
        if (out_channels < 1) throw ShapeError("ConvSpec", "out_channels", "must be >= 1");
        if (kernel < 1) throw ShapeError("ConvSpec", "kernel", "must be >= 1");
        if (padding < 0) throw ShapeError("ConvSpec", "padding", "must be >= 0");
    }

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Argmax routing recorded by maxpool2. `source[k]` is the flat index into
/// the pooling input of the winner for pooled cell k.
struct PoolIndices {
    Shape input_shape;
    Shape output_shape;
    std::vector<Index> source;

    friend bool operator==(const PoolIndices&, const PoolIndices&) = default;
};

namespace detail {

inline void check_rank(const char* op, const Shape& s, Index rank, const char* what) {
    if (Index(s.size()) != rank) throw ShapeError(op, std::string(what) + " rank", rank, Index(s.size()));
}

inline void check_conv_operands(const char* op, const Shape& w, const ConvSpec& spec) {
    spec.validate();
    check_rank(op, w, 4, "weight");
    if (w[0] != spec.out_channels) throw ShapeError(op, "weight out_channels", spec.out_channels, w[0]);
    if (w[1] != spec.in_channels) throw ShapeError(op, "weight in_channels", spec.in_channels, w[1]);
    if (w[2] != spec.kernel) throw ShapeError(op, "weight kernel height", spec.kernel, w[2]);
    if (w[3] != spec.kernel) throw ShapeError(op, "weight kernel width", spec.kernel, w[3]);
}

// Output rows i for which i + a - pad falls inside [0, extent).
inline std::pair<Index, Index> valid_range(Index a, Index pad, Index extent, Index out_extent) {
    return {std::max<Index>(0, pad - a), std::min<Index>(out_extent, extent + pad - a)};
}

}  // namespace detail

namespace detail {

/// Column matrix of zero-padded k x k patches: row (c, a, b), column (i, j).
template <typename Scalar>
MatrixX<Scalar> im2col(const Scalar* x, Index C, Index H, Index W, Index k, Index p, Index Ho, Index Wo) {
    MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(C * k * k, Ho * Wo);
    for (Index c = 0; c < C; ++c)
        for (Index a = 0; a < k; ++a) {
            const auto [i0, i1] = valid_range(a, p, H, Ho);
            for (Index b = 0; b < k; ++b) {
                const auto [j0, j1] = valid_range(b, p, W, Wo);
                Scalar* row = cols.data() + ((c * k + a) * k + b) * Ho * Wo;
                for (Index i = i0; i < i1; ++i) {
                    const Scalar* src = x + (c * H + i + a - p) * W + (b - p);
                    for (Index j = j0; j < j1; ++j) row[i * Wo + j] = src[j];
                }
            }
        }
    return cols;
}

/// Scatter-adds a column matrix back onto the image it was gathered from.
template <typename Scalar>
void col2im(const MatrixX<Scalar>& cols, Scalar* x, Index C, Index H, Index W, Index k, Index p, Index Ho, Index Wo) {
    for (Index c = 0; c < C; ++c)
        for (Index a = 0; a < k; ++a) {
            const auto [i0, i1] = valid_range(a, p, H, Ho);
            for (Index b = 0; b < k; ++b) {
                const auto [j0, j1] = valid_range(b, p, W, Wo);
                const Scalar* row = cols.data() + ((c * k + a) * k + b) * Ho * Wo;
                for (Index i = i0; i < i1; ++i) {
                    Scalar* dst = x + (c * H + i + a - p) * W + (b - p);
                    for (Index j = j0; j < j1; ++j) dst[j] += row[i * Wo + j];
                }
            }
        }
}

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const MatrixX<Scalar>>;

}  // namespace detail

/// Cross-correlation with zero padding, stride 1: y[o] = sum_c w[o,c] * x[c].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const ConvSpec& spec) {
    detail::check_conv_operands("conv2d", w.shape(), spec);
    detail::check_rank("conv2d", x.shape(), 3, "input");
    if (x.dim(0) != spec.in_channels) throw ShapeError("conv2d", "input channels", spec.in_channels, x.dim(0));
    const Index H = x.dim(1), W = x.dim(2), k = spec.kernel, p = spec.padding;
    const Index Ho = spec.output_extent(H), Wo = spec.output_extent(W);
    if (Ho < 1) throw ShapeError("conv2d", "height", "output extent < 1");
    if (Wo < 1) throw ShapeError("conv2d", "width", "output extent < 1");

    const auto cols = detail::im2col(x.data(), spec.in_channels, H, W, k, p, Ho, Wo);
    const detail::ConstMatrixMap<Scalar> wm(w.data(), spec.out_channels, spec.in_channels * k * k);
    Tensor<Scalar> y({spec.out_channels, Ho, Wo});
    Eigen::Map<MatrixX<Scalar>>(y.data(), spec.out_channels, Ho * Wo).noalias() = wm * cols;
    return y;
}

/// Adjoint of conv2d with respect to its input.
template <typename Scalar>
Tensor<Scalar> conv2d_transpose(const Tensor<Scalar>& g, const Tensor<Scalar>& w, const ConvSpec& spec) {
    detail::check_conv_operands("conv2d_transpose", w.shape(), spec);
    detail::check_rank("conv2d_transpose", g.shape(), 3, "gradient");
    if (g.dim(0) != spec.out_channels)
        throw ShapeError("conv2d_transpose", "gradient channels", spec.out_channels, g.dim(0));
    const Index Ho = g.dim(1), Wo = g.dim(2), k = spec.kernel, p = spec.padding;
    const Index H = Ho - 2 * p + k - 1, W = Wo - 2 * p + k - 1;
    if (H < 1) throw ShapeError("conv2d_transpose", "height", "implied input extent < 1");
    if (W < 1) throw ShapeError("conv2d_transpose", "width", "implied input extent < 1");

    const detail::ConstMatrixMap<Scalar> wm(w.data(), spec.out_channels, spec.in_channels * k * k);
    const detail::ConstMatrixMap<Scalar> gm(g.data(), spec.out_channels, Ho * Wo);
    const MatrixX<Scalar> cols = wm.transpose() * gm;
    Tensor<Scalar> x({spec.in_channels, H, W});
    detail::col2im(cols, x.data(), spec.in_channels, H, W, k, p, Ho, Wo);
    return x;
}

/// Adjoint of conv2d with respect to its kernel: dW[o,c,a,b] = sum_ij g[o,i,j] x_pad[c,i+a,j+b].
template <typename Scalar>
Tensor<Scalar> conv2d_weight_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& g, const ConvSpec& spec) {
    spec.validate();
    detail::check_rank("conv2d_weight_grad", x.shape(), 3, "input");
    detail::check_rank("conv2d_weight_grad", g.shape(), 3, "gradient");
    if (x.dim(0) != spec.in_channels)
        throw ShapeError("conv2d_weight_grad", "input channels", spec.in_channels, x.dim(0));
    if (g.dim(0) != spec.out_channels)
        throw ShapeError("conv2d_weight_grad", "gradient channels", spec.out_channels, g.dim(0));
    const Index H = x.dim(1), W = x.dim(2), k = spec.kernel, p = spec.padding;
    const Index Ho = spec.output_extent(H), Wo = spec.output_extent(W);
    if (g.dim(1) != Ho) throw ShapeError("conv2d_weight_grad", "gradient height", Ho, g.dim(1));
    if (g.dim(2) != Wo) throw ShapeError("conv2d_weight_grad", "gradient width", Wo, g.dim(2));

    const auto cols = detail::im2col(x.data(), spec.in_channels, H, W, k, p, Ho, Wo);
    const detail::ConstMatrixMap<Scalar> gm(g.data(), spec.out_channels, Ho * Wo);
    Tensor<Scalar> dw({spec.out_channels, spec.in_channels, k, k});
    Eigen::Map<MatrixX<Scalar>>(dw.data(), spec.out_channels, spec.in_channels * k * k).noalias() =
        gm * cols.transpose();
    return dw;
}

/// 2x2 stride-2 max pooling. Ties go to the lowest flat index.
template <typename Scalar>
std::pair<Tensor<Scalar>, PoolIndices> maxpool2(const Tensor<Scalar>& x) {
    detail::check_rank("maxpool2", x.shape(), 3, "input");
    const Index C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % 2 != 0) throw ShapeError("maxpool2", "height", "odd extent " + std::to_string(H) + "; pad the input to an even size");
    if (W % 2 != 0) throw ShapeError("maxpool2", "width", "odd extent " + std::to_string(W) + "; pad the input to an even size");
    const Index Hp = H / 2, Wp = W / 2;
    Tensor<Scalar> y({C, Hp, Wp});
    PoolIndices idx{x.shape(), y.shape(), std::vector<Index>(std::size_t(C * Hp * Wp))};
    for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < Hp; ++i)
            for (Index j = 0; j < Wp; ++j) {
                Index best = (c * H + 2 * i) * W + 2 * j;
                for (const Index cand : {best + 1, best + W, best + W + 1})
                    if (x[cand] > x[best]) best = cand;
                const Index out = (c * Hp + i) * Wp + j;
                y[out] = x[best];
                idx.source[std::size_t(out)] = best;
            }
    return {std::move(y), std::move(idx)};
}

namespace detail {

inline void check_pool_route(const char* op, const PoolIndices& idx, Index out) {
    const Index src = idx.source[std::size_t(out)];
    const Index H = idx.input_shape[1], W = idx.input_shape[2];
    const Index Hp = idx.output_shape[1], Wp = idx.output_shape[2];
    const Index c = out / (Hp * Wp), i = (out / Wp) % Hp, j = out % Wp;
    const Index base = (c * H + 2 * i) * W + 2 * j;
    if (src != base && src != base + 1 && src != base + W && src != base + W + 1)
        throw std::out_of_range(std::string(op) + ": corrupted PoolIndices, source " + std::to_string(src) +
                                " outside the window of pooled cell " + std::to_string(out));
}

}  // namespace detail

/// Adjoint of maxpool2 for a fixed routing: scatters each cell to its argmax.
template <typename Scalar>
Tensor<Scalar> unpool2(const Tensor<Scalar>& g, const PoolIndices& idx) {
    if (g.shape() != idx.output_shape)
        throw ShapeError("unpool2", "gradient shape", to_string(g.shape()) + " vs routing " + to_string(idx.output_shape));
    Tensor<Scalar> x(idx.input_shape);
    for (Index k = 0; k < g.size(); ++k) {
        detail::check_pool_route("unpool2", idx, k);
        x[idx.source[std::size_t(k)]] = g[k];
    }
    return x;
}

/// Gathers z at the routed cells; the adjoint of unpool2.
template <typename Scalar>
Tensor<Scalar> pool_select(const Tensor<Scalar>& z, const PoolIndices& idx) {
    if (z.shape() != idx.input_shape)
        throw ShapeError("pool_select", "input shape", to_string(z.shape()) + " vs routing " + to_string(idx.input_shape));
    Tensor<Scalar> y(idx.output_shape);
    for (Index k = 0; k < y.size(); ++k) {
        detail::check_pool_route("pool_select", idx, k);
        y[k] = z[idx.source[std::size_t(k)]];
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> affine(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
    detail::check_rank("affine", w.shape(), 2, "weight");
    if (x.size() != w.dim(1)) throw ShapeError("affine", "input dim", w.dim(1), x.size());
    if (b.size() != w.dim(0)) throw ShapeError("affine", "bias dim", w.dim(0), b.size());
    Eigen::Map<const MatrixX<Scalar>> m(w.data(), w.dim(0), w.dim(1));
    return Tensor<Scalar>({w.dim(0)}, m * x.values() + b.values());
}

/// w^T g for a [K,D] weight; `shape` is the shape of the original input.
template <typename Scalar>
Tensor<Scalar> affine_transpose(const Tensor<Scalar>& g, const Tensor<Scalar>& w, Shape shape) {
    detail::check_rank("affine_transpose", w.shape(), 2, "weight");
    if (g.size() != w.dim(0)) throw ShapeError("affine_transpose", "gradient dim", w.dim(0), g.size());
    if (numel(shape) != w.dim(1)) throw ShapeError("affine_transpose", "input dim", w.dim(1), numel(shape));
    Eigen::Map<const MatrixX<Scalar>> m(w.data(), w.dim(0), w.dim(1));
    return Tensor<Scalar>(std::move(shape), m.transpose() * g.values());
}

template <typename Scalar>
Tensor<Scalar> outer(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    Tensor<Scalar> out({a.size(), b.size()});
    Eigen::Map<MatrixX<Scalar>>(out.data(), a.size(), b.size()) = a.values() * b.values().transpose();
    return out;
}

template <typename Scalar>
Tensor<Scalar> hard_clamp(const Tensor<Scalar>& x) {
    return Tensor<Scalar>(x.shape(), x.values().cwiseMax(Scalar(0)).cwiseMin(Scalar(1)));
}

/// Subgradient of hard_clamp: 1 on the closed interval [0,1], 0 outside.
template <typename Scalar>
Tensor<Scalar> hard_clamp_mask(const Tensor<Scalar>& pre) {
    return Tensor<Scalar>(pre.shape(), pre.values().unaryExpr([](Scalar v) {
        return (v >= Scalar(0) && v <= Scalar(1)) ? Scalar(1) : Scalar(0);
    }));
}

/// Adds a per-channel bias to a [C,H,W] tensor in place.
template <typename Scalar>
void add_channel_bias(Tensor<Scalar>& x, const Tensor<Scalar>& b) {
    if (b.size() != x.dim(0)) throw ShapeError("add_channel_bias", "channels", x.dim(0), b.size());
    const Index plane = x.size() / x.dim(0);
    for (Index c = 0; c < x.dim(0); ++c) x.values().segment(c * plane, plane).array() += b[c];
}

/// Per-channel sums of a [C,H,W] tensor; adjoint of add_channel_bias.
template <typename Scalar>
Tensor<Scalar> channel_sums(const Tensor<Scalar>& x) {
    const Index plane = x.size() / x.dim(0);
    Tensor<Scalar> s({x.dim(0)});
    for (Index c = 0; c < x.dim(0); ++c)
        s[c] = Scalar(x.values().segment(c * plane, plane).template cast<double>().sum());
    return s;
}

}  // namespace eprobust
