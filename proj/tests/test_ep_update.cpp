#include "eprobust/ep_update.hpp"
#include "support/ep_oracles.hpp"

#include <doctest.h>

#include <limits>

using namespace eprobust;
using oracle::fd_negative_gradient;
using oracle::flatten_layers;

namespace {

struct LinearModel {
    ModelSpec spec;
    Params<double> params;
    Tensor<double> x;
    int label = 1;
};

/// Dense chain whose fixed point stays strictly inside the box, so the
/// dynamics are affine there: s = A s + c.
LinearModel interior_model(std::uint64_t seed) {
    LinearModel m;
    m.spec = oracle::fc_spec(4, {5, 4}, 3);
    m.params = init_params<double>(m.spec, seed, 0.3);
    for (auto& b : m.params.biases) b.values().array() += 0.5;
    std::mt19937_64 rng(seed);
    m.x = oracle::random_tensor({1, 1, 4}, rng, 0, 1);
    m.label = int(seed % 3);
    return m;
}

/// -dL/dtheta through (I - A)^{-1} for an interior dense chain.
Params<double> implicit_negative_gradient(const LinearModel& m) {
    const auto& p = m.params;
    const Index n0 = 5, n1 = 4, dim = n0 + n1;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    const Eigen::MatrixXd W0 = Eigen::Map<const MatrixX<double>>(p.weights[0].data(), n0, 4);
    const Eigen::MatrixXd W1 = Eigen::Map<const MatrixX<double>>(p.weights[1].data(), n1, n0);
    A.block(n0, 0, n1, n0) = W1;
    A.block(0, n0, n0, n1) = W1.transpose();
    Eigen::VectorXd c(dim);
    c.head(n0) = W0 * m.x.values() + p.biases[0].values();
    c.tail(n1) = p.biases[1].values();
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(dim, dim) - A;
    const Eigen::VectorXd s = M.partialPivLu().solve(c);
    const Eigen::VectorXd s0 = s.head(n0), s1 = s.tail(n1);

    const Eigen::MatrixXd R = Eigen::Map<const MatrixX<double>>(p.readout_weight.data(), 3, n1);
    Eigen::VectorXd z = R * s1 + p.readout_bias.values();
    Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
    e /= e.sum();
    e[m.label] -= 1;
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(dim);
    gs.tail(n1) = R.transpose() * e;
    const Eigen::VectorXd lam = M.transpose().partialPivLu().solve(gs);
    const Eigen::VectorXd l0 = lam.head(n0), l1 = lam.tail(n1);

    Params<double> g = zero_params<double>(m.spec);
    Eigen::MatrixXd dW0 = l0 * m.x.values().transpose();
    Eigen::MatrixXd dW1 = l1 * s0.transpose() + s1 * l0.transpose();
    g.weights[0].values() = -Eigen::Map<VectorX<double>>(MatrixX<double>(dW0).data(), dW0.size());
    g.weights[1].values() = -Eigen::Map<VectorX<double>>(MatrixX<double>(dW1).data(), dW1.size());
    g.biases[0].values() = -l0;
    g.biases[1].values() = -l1;
    return g;
}

}  // namespace

TEST_CASE("phi_grad_params matches differences of the brute-force energy") {
    auto spec = oracle::tiny_conv_spec(2, 4, 4, 3);
    spec.fc_layers = {{16, 6}};
    auto p = init_params<double>(spec, 1, 1.0);
    std::mt19937_64 rng(1);
    auto x = oracle::random_tensor(spec.input_shape, rng, 0, 1);
    auto s = zero_state(x, spec);
    for (auto& l : s.layers) l = oracle::random_tensor(l.shape(), rng, 0, 1);
    const auto g = phi_grad_params(x, s, p, spec);
    const auto gn = g.named();
    auto pn = p.named();
    const double h = 1e-6;
    for (std::size_t k = 0; k < pn.size(); ++k) {
        if (pn[k].first.rfind("readout", 0) == 0) {
            CHECK(gn[k].second->values().isZero(0));
            continue;
        }
        for (Index i = 0; i < pn[k].second->size(); i += 2) {
            const double v = (*pn[k].second)[i];
            (*pn[k].second)[i] = v + h;
            const auto lp = oracle::brute_phi(x, s.layers, p, spec);
            (*pn[k].second)[i] = v - h;
            const auto lm = oracle::brute_phi(x, s.layers, p, spec);
            (*pn[k].second)[i] = v;
            CHECK((*gn[k].second)[i] == doctest::Approx(double(lp - lm) / (2 * h)).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("each layer's estimate reads only its adjacent states") {
    auto spec = oracle::tiny_conv_spec(1, 4, 4, 2);
    spec.fc_layers = {{16, 5}, {5, 4}};
    auto p = init_params<double>(spec, 2, 1.0);
    std::mt19937_64 rng(2);
    auto x = oracle::random_tensor(spec.input_shape, rng, 0, 1);
    auto s = zero_state(x, spec);
    for (auto& l : s.layers) l = oracle::random_tensor(l.shape(), rng, 0, 1);
    const auto clean = phi_grad_params(x, s, p, spec);

    for (std::size_t poisoned = 0; poisoned < s.layers.size(); ++poisoned) {
        auto bad = s;
        bad.layers[poisoned].values().setConstant(std::numeric_limits<double>::quiet_NaN());
        const auto g = phi_grad_params(x, bad, p, spec);
        for (std::size_t n = 0; n < s.layers.size(); ++n) {
            const bool touches = n == poisoned || n == poisoned + 1;
            if (touches) continue;
            CHECK(g.weights[n] == clean.weights[n]);
            CHECK(g.biases[n] == clean.biases[n]);
        }
    }
}

TEST_CASE("interior dense chain against implicit differentiation") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const auto m = interior_model(seed);
        auto free = free_phase(m.x, m.params, m.spec);
        REQUIRE(free.converged);
        for (const auto& l : free.state.layers) {
            REQUIRE(l.values().minCoeff() > 0.05);
            REQUIRE(l.values().maxCoeff() < 0.95);
        }
        const VectorX<double> ref = flatten_layers(implicit_negative_gradient(m));

        {  // first and second order convergence
            auto err = [&](bool symmetric, double beta) {
                const auto g = symmetric ? ep_update_symmetric(m.x, m.label, m.params, m.spec, beta)
                                         : ep_update_one_sided(m.x, m.label, m.params, m.spec, beta);
                return oracle::relative_error<double>(flatten_layers(g), ref);
            };
            CHECK(err(false, 0.02) / err(false, 0.01) == doctest::Approx(2.0).epsilon(0.05));
            CHECK(err(true, 0.02) / err(true, 0.01) == doctest::Approx(4.0).epsilon(0.05));
            CHECK(err(true, 0.01) < 1e-3);
        }
        {  // near-zero nudge
            const auto g = ep_update_symmetric(m.x, m.label, m.params, m.spec, 1e-5);
            CHECK(oracle::relative_error<double>(flatten_layers(g), ref) < 1e-6);
        }
    }
}

TEST_CASE("symmetric rule is exactly antisymmetric in beta") {
    auto spec = oracle::tiny_conv_spec(1, 4, 4, 3);
    auto p = init_params<double>(spec, 6, 0.7);
    std::mt19937_64 rng(6);
    auto x = oracle::random_tensor(spec.input_shape, rng, 0, 1);
    const auto a = ep_update_symmetric(x, 1, p, spec, 0.05);
    const auto b = ep_update_symmetric(x, 1, p, spec, -0.05);
    CHECK(a == b);
}

TEST_CASE("symmetric estimate aligns with the fixed-point gradient on conv models") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 2; ++trial) {
        auto spec = oracle::tiny_conv_spec(1, 4, 5, 3);
        auto p = init_params<double>(spec, 70 + trial, 0.7);
        auto x = oracle::random_tensor(spec.input_shape, rng, 0, 1);
        const int label = trial % 3;
        const auto ref = fd_negative_gradient(x, label, p, spec);
        EpTrace<double> trace;
        const auto g = ep_update_symmetric(x, label, p, spec, 0.01, &trace);
        CHECK(trace.converged);
        CHECK(trace.logits == readout(trace.free_state, p));
        const auto rn = ref.named();
        const auto gn = g.named();
        for (std::size_t k = 0; k + 2 < gn.size(); ++k)
            CHECK(oracle::cosine(gn[k].second->values(), rn[k].second->values()) >= 0.99);
        CHECK(g.readout_weight.values().isZero(0));
        CHECK(g.readout_bias.values().isZero(0));
    }
}

TEST_CASE("readout delta rule") {
    auto spec = oracle::tiny_conv_spec(1, 4, 4, 3);
    auto p = init_params<double>(spec, 8, 1.0);
    std::mt19937_64 rng(8);
    auto x = oracle::random_tensor(spec.input_shape, rng, 0, 1);
    auto s = free_phase(x, p, spec).state;
    auto g = zero_params<double>(spec);
    readout_delta(s, 2, p, g);
    const double h = 1e-6;
    for (Index i = 0; i < p.readout_weight.size(); i += 7) {
        auto q = p;
        q.readout_weight[i] += h;
        const double lp = oracle::brute_cross_entropy(oracle::brute_readout(s.top(), q), 2);
        q.readout_weight[i] -= 2 * h;
        const double lm = oracle::brute_cross_entropy(oracle::brute_readout(s.top(), q), 2);
        CHECK(g.readout_weight[i] == doctest::Approx(-(lp - lm) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
    auto z = oracle::brute_readout(s.top(), p);
    VectorX<double> e = z.array().exp();
    e /= e.sum();
    e[2] -= 1;
    CHECK((g.readout_bias.values() + e).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dense energy gradient on a hand example") {
    auto spec = oracle::fc_spec(1, {1, 1}, 2);
    auto p = init_params<double>(spec, 1, 1.0);
    Tensor<double> x({1, 1, 1}, {0.5});
    auto s = zero_state(x, spec);
    s.layers[0][0] = 2;
    s.layers[1][0] = 3;
    const auto g = phi_grad_params(x, s, p, spec);
    CHECK(g.weights[1][0] == 6.0);
    CHECK(g.weights[0][0] == 1.0);
    CHECK(g.biases[1][0] == 3.0);
}

TEST_CASE("a saturated correct prediction gives a vanishing estimate") {
    auto spec = oracle::tiny_conv_spec(1, 4, 4, 3);
    auto p = init_params<double>(spec, 9, 0.7);
    p.readout_bias[1] = 60.0;
    std::mt19937_64 rng(9);
    auto x = oracle::random_tensor(spec.input_shape, rng, 0, 1);
    for (bool symmetric : {false, true}) {
        const auto g = symmetric ? ep_update_symmetric(x, 1, p, spec, 0.5) : ep_update_one_sided(x, 1, p, spec, 0.5);
        CHECK(flatten_layers(g).norm() < 1e-12);
    }
}

TEST_CASE("one-sided error halves with beta at small nudges") {
    const auto m = interior_model(3);
    const VectorX<double> ref = flatten_layers(implicit_negative_gradient(m));
    auto err = [&](double beta) {
        return oracle::relative_error<double>(flatten_layers(ep_update_one_sided(m.x, m.label, m.params, m.spec, beta)), ref);
    };
    CHECK(err(1e-3) / err(5e-4) == doctest::Approx(2.0).epsilon(0.05));
}
