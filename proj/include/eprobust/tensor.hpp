#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eprobust {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

/// Raised when operands disagree on an extent. `axis()` names the offending axis.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const std::string& axis, Index expected, Index got)
        : std::invalid_argument(op + ": " + axis + " mismatch (expected " + std::to_string(expected) +
                                ", got " + std::to_string(got) + ")"),
          axis_(axis) {}
    ShapeError(const std::string& op, const std::string& axis, const std::string& what)
        : std::invalid_argument(op + ": " + axis + ": " + what), axis_(axis) {}

    const std::string& axis() const noexcept { return axis_; }

private:
    std::string axis_;
};

/// Dense row-major n-d array. Values live in an Eigen column vector so the
/// usual Eigen expressions apply to `values()` directly.
template <typename Scalar_>
class Tensor {
public:
    using Scalar = Scalar_;
    using Vector = VectorX<Scalar>;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Vector::Zero(numel(shape_))) {
        check_extents();
    }

    Tensor(Shape shape, Vector values) : shape_(std::move(shape)), values_(std::move(values)) {
        check_extents();
        if (values_.size() != numel(shape_))
            throw ShapeError("Tensor", "size", numel(shape_), values_.size());
    }

    Tensor(Shape shape, std::initializer_list<Scalar> values)
        : Tensor(std::move(shape), Eigen::Map<const Vector>(values.begin(), Index(values.size()))) {}

    static Tensor constant(Shape shape, Scalar value) {
        Tensor t(std::move(shape));
        t.values_.setConstant(value);
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    Index rank() const noexcept { return Index(shape_.size()); }
    Index dim(Index axis) const { return shape_.at(std::size_t(axis)); }
    Index size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return shape_.empty(); }

    Vector& values() noexcept { return values_; }
    const Vector& values() const noexcept { return values_; }
    Scalar* data() noexcept { return values_.data(); }
    const Scalar* data() const noexcept { return values_.data(); }

    Scalar& operator[](Index i) { return values_[i]; }
    Scalar operator[](Index i) const { return values_[i]; }

    // [C,H,W] access
    Scalar& operator()(Index c, Index i, Index j) { return values_[(c * shape_[1] + i) * shape_[2] + j]; }
    Scalar operator()(Index c, Index i, Index j) const { return values_[(c * shape_[1] + i) * shape_[2] + j]; }

    Tensor reshaped(Shape shape) const {
        if (numel(shape) != size()) throw ShapeError("reshape", "size", size(), numel(shape));
        return Tensor(std::move(shape), values_);
    }

    template <typename To>
    Tensor<To> cast() const {
        return Tensor<To>(shape_, values_.template cast<To>());
    }

    bool all_finite() const { return values_.allFinite(); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    void check_extents() const {
        for (std::size_t a = 0; a < shape_.size(); ++a)
            if (shape_[a] < 0) throw ShapeError("Tensor", "axis " + std::to_string(a), "negative extent");
    }

    Shape shape_;
    Vector values_;
};

/// Inner product with a 64-bit accumulator.
template <typename Scalar>
double dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.size() != b.size()) throw ShapeError("dot", "size", a.size(), b.size());
    return a.values().template cast<double>().dot(b.values().template cast<double>());
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.size() != b.size()) throw ShapeError("max_abs_diff", "size", a.size(), b.size());
    if (a.size() == 0) return Scalar(0);
    return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

}  // namespace eprobust
