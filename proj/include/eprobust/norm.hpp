#pragma once

#include "eprobust/tensor.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace eprobust {

enum class Norm { l2, linf };

inline std::string to_string(Norm n) { return n == Norm::l2 ? "l2" : "linf"; }

inline Norm parse_norm(const std::string& s) {
    if (s == "l2") return Norm::l2;
    if (s == "linf") return Norm::linf;
    throw std::invalid_argument("unknown norm '" + s + "' (expected l2 or linf)");
}

template <typename Scalar>
double lp_norm(const VectorX<Scalar>& v, Norm norm) {
    if (v.size() == 0) return 0.0;
    const VectorX<double> d = v.template cast<double>();
    return norm == Norm::l2 ? d.norm() : d.cwiseAbs().maxCoeff();
}

template <typename Scalar>
double distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Norm norm) {
    if (a.size() != b.size()) throw ShapeError("distance", "size", a.size(), b.size());
    return lp_norm<Scalar>(a.values() - b.values(), norm);
}

/// Uniform sample from the radius-eps ball: per-coordinate uniform for linf,
/// Gaussian direction times eps * U^(1/d) for l2.
template <typename Scalar, typename Rng>
VectorX<Scalar> sample_ball(Index dim, Norm norm, double eps, Rng& rng) {
    VectorX<Scalar> v(dim);
    if (norm == Norm::linf) {
        std::uniform_real_distribution<double> u(-eps, eps);
        for (Index i = 0; i < dim; ++i) v[i] = Scalar(u(rng));
        return v;
    }
    std::normal_distribution<double> g(0.0, 1.0);
    VectorX<double> d(dim);
    for (Index i = 0; i < dim; ++i) d[i] = g(rng);
    const double n = d.norm();
    if (n == 0.0) return VectorX<Scalar>::Zero(dim);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = eps * std::pow(u(rng), 1.0 / double(dim));
    return (d * (r / n)).template cast<Scalar>();
}

}  // namespace eprobust
