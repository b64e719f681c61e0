#include "eprobust/attacks.hpp"
#include "eprobust/blackbox.hpp"
#include "eprobust/query.hpp"
#include "support/linear_models.hpp"

#include <doctest.h>

using namespace eprobust;
using oracle::linear_problem;

namespace {

template <typename Scalar>
void check_containment(std::span<const Tensor<Scalar>> xs, const AttackResult<Scalar>& r, Norm norm, double eps) {
    REQUIRE(r.size() == xs.size());
    for (std::size_t e = 0; e < xs.size(); ++e) {
        CHECK(distance(r.adversarial[e], xs[e], norm) <= eps + 1e-6);
        CHECK(r.adversarial[e].values().minCoeff() >= Scalar(0));
        CHECK(r.adversarial[e].values().maxCoeff() <= Scalar(1));
    }
}

}  // namespace

TEST_CASE("projection") {
    Tensor<double> x0({1, 1, 2}, {0.5, 0.5});
    auto p = project(x0, Tensor<double>({1, 1, 2}, {1.5, 0.5}), Norm::l2, 0.3);
    CHECK(p[0] == doctest::Approx(0.8));
    CHECK(p[1] == 0.5);
    p = project(x0, Tensor<double>({1, 1, 2}, {0.9, 0.1}), Norm::linf, 0.1);
    CHECK(p[0] == doctest::Approx(0.6));
    CHECK(p[1] == doctest::Approx(0.4));
    // box wins over the ball
    p = project(Tensor<double>({1, 1, 1}, {0.95}), Tensor<double>({1, 1, 1}, {1.2}), Norm::linf, 0.3);
    CHECK(p[0] == 1.0);
    CHECK(project(x0, x0, Norm::l2, 0.0) == x0);
    CHECK_THROWS_AS(project(x0, Tensor<double>({2}), Norm::l2, 1.0), ShapeError);

    const Tensor<double> g({1, 1, 3}, {3, -4, 0});
    CHECK(steepest_ascent(g, Norm::linf) == Tensor<double>({1, 1, 3}, {1, -1, 0}));
    CHECK(steepest_ascent(g, Norm::l2).values().isApprox(VectorX<double>((VectorX<double>(3) << 0.6, -0.8, 0).finished())));
}

TEST_CASE("PGD flips exactly the examples inside the ball on a linear model") {
    for (Norm norm : {Norm::l2, Norm::linf}) {
        CAPTURE(to_string(norm));
        const double eps = norm == Norm::l2 ? 0.15 : 0.05;
        const auto prob = linear_problem(norm, 2 * eps, 200, norm == Norm::l2 ? 1 : 2);
        const auto model = prob.model();
        auto cfg = AttackConfig::pgd(norm, eps);
        cfg.seed = 3;
        const auto r = pgd_attack<double>(prob.xs, prob.ys, model, cfg);
        check_containment<double>(prob.xs, r, norm, eps);
        int compared = 0;
        for (std::size_t e = 0; e < prob.xs.size(); ++e) {
            CHECK(model.predict(prob.xs[e]) == prob.ys[e]);
            CHECK(r.queries[e] == cfg.steps + 1);
            if (std::abs(prob.dist[e] - eps) < 0.1 * eps) continue;
            CHECK(bool(r.success[e]) == (prob.dist[e] < eps));
            ++compared;
        }
        CHECK(compared > 150);
    }
}

TEST_CASE("C&W finds the minimal l2 distance on a linear model") {
    const auto prob = linear_problem(Norm::l2, 0.3, 40, 4);
    const auto model = prob.model();
    auto cfg = AttackConfig::cw(10.0);
    cfg.steps = 2000;
    // Adam moves about lr per step, so lr must sit well below the smallest distance
    cfg.cw_lr = 0.002;
    const auto r = cw_attack<double>(prob.xs, prob.ys, model, cfg);
    for (std::size_t e = 0; e < prob.xs.size(); ++e) {
        REQUIRE(r.success[e]);
        CHECK(r.perturbation[e] >= prob.dist[e] - 1e-9);
        CHECK(r.perturbation[e] <= 1.1 * prob.dist[e]);
        CHECK(r.queries[e] == cfg.steps + 2);
    }

    // bounded C&W keeps to its ball and returns failures unchanged
    cfg.epsilon = 0.1;
    cfg.steps = 300;
    const auto bounded = cw_attack<double>(prob.xs, prob.ys, model, cfg);
    check_containment<double>(prob.xs, bounded, Norm::l2, 0.1);
    for (std::size_t e = 0; e < prob.xs.size(); ++e) {
        if (prob.dist[e] > 0.1) {
            CHECK_FALSE(bounded.success[e]);
            CHECK(bounded.adversarial[e] == prob.xs[e]);
        } else if (prob.dist[e] < 0.09) {
            CHECK(bounded.success[e]);
        }
    }
}

TEST_CASE("Square flips the examples inside the linf ball on a linear model") {
    const double eps = 0.05;
    const auto prob = linear_problem(Norm::linf, 2 * eps, 60, 5);
    const auto model = prob.model();
    std::vector<Tensor<float>> xs;
    for (const auto& x : prob.xs) xs.push_back(x.cast<float>());
    const QueryModel<float> query = [&](const Tensor<float>& x) -> VectorX<float> {
        return model.logits(x.cast<double>()).cast<float>();
    };
    auto cfg = AttackConfig::square(eps, 2000);
    cfg.seed = 6;
    const auto r = blackbox_square(xs, prob.ys, query, cfg);
    check_containment<float>(xs, r, Norm::linf, eps);
    const auto noise = blackbox_random_noise(xs, prob.ys, query, cfg);
    check_containment<float>(xs, noise, Norm::linf, eps);
    for (std::size_t e = 0; e < xs.size(); ++e) {
        CHECK(r.queries[e] <= cfg.query_budget);
        CHECK(noise.queries[e] <= cfg.query_budget);
        if (prob.dist[e] > eps) {
            CHECK_FALSE(r.success[e]);
            CHECK(r.queries[e] == cfg.query_budget);
        }
        if (prob.dist[e] < 0.9 * eps) CHECK(r.success[e]);
    }
    CHECK(r.success_rate() > noise.success_rate());

    // same seed, same run; already-wrong inputs cost one query
    const auto again = blackbox_square(xs, prob.ys, query, cfg);
    for (std::size_t e = 0; e < xs.size(); ++e) {
        CHECK(again.adversarial[e] == r.adversarial[e]);
        CHECK(again.queries[e] == r.queries[e]);
    }
    std::vector<int> wrong(prob.ys.size());
    for (std::size_t e = 0; e < wrong.size(); ++e) wrong[e] = 1 - prob.ys[e];
    const auto trivial = blackbox_square(xs, wrong, query, cfg);
    for (std::size_t e = 0; e < xs.size(); ++e) {
        CHECK(trivial.success[e]);
        CHECK(trivial.queries[e] == 1);
        CHECK(trivial.adversarial[e] == xs[e]);
    }
    CHECK(blackbox_guard_active());
}

TEST_CASE("square schedule") {
    CHECK(square_fraction(0.8, 0, 10000) == 0.8);
    CHECK(square_fraction(0.8, 10, 10000) == 0.8);
    CHECK(square_fraction(0.8, 11, 10000) == 0.4);
    CHECK(square_fraction(0.8, 8001, 10000) == doctest::Approx(0.8 / 512));
    CHECK(square_fraction(0.8, 51, 1000) == doctest::Approx(0.8 / 16));
    CHECK(square_side(0.8, 32, 32) == 29);
    CHECK(square_side(1e-6, 32, 32) == 1);
    CHECK(square_side(1.0, 4, 4) == 3);
}

TEST_CASE("attacks on an energy model stay in the ball and the box") {
    auto spec = oracle::tiny_conv_spec(1, 4, 4, 3);
    spec.t_free = 30;
    const auto p = init_params<float>(spec, 21, 1.0);
    const Normalization norm{{0.4}, {0.3}};
    EnergyClassifier<float> model(p, spec, 30, norm);
    std::mt19937_64 rng(7);
    std::vector<Tensor<float>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 6; ++i) {
        xs.push_back(oracle::random_tensor<float>(spec.input_shape, rng, 0, 1));
        ys.push_back(i % 3);
    }
    for (const auto& cfg : {AttackConfig::pgd(Norm::linf, 0.1), AttackConfig::pgd(Norm::l2, 0.5),
                            AttackConfig::square(0.1, 100)}) {
        const auto r = run_attack<float>(xs, ys, model, cfg);
        check_containment<float>(xs, r, cfg.norm, cfg.epsilon);
        for (std::size_t e = 0; e < xs.size(); ++e) CHECK(r.predicted[e] == model.predict(r.adversarial[e]));
    }
    auto cw = AttackConfig::cw(1.0);
    cw.epsilon = 0.5;
    cw.steps = 20;
    check_containment<float>(xs, run_attack<float>(xs, ys, model, cw), Norm::l2, 0.5);

    // the black-box query view agrees with the classifier
    const auto q = energy_query<float>(p, spec, 30, norm);
    CHECK(q(xs[0]) == model.logits(xs[0]));
}

TEST_CASE("suite takes the worst case per example") {
    const auto prob = linear_problem(Norm::linf, 0.1, 50, 8);
    const auto model = prob.model();
    const std::vector<AttackConfig> attacks{AttackConfig::pgd(Norm::linf, 0.03), AttackConfig::pgd(Norm::l2, 0.1),
                                            AttackConfig::square(0.03, 200)};
    const auto s = attack_suite<double>(prob.xs, prob.ys, model, attacks);
    REQUIRE(s.results.size() == 3);
    std::size_t robust = 0;
    for (std::size_t e = 0; e < prob.xs.size(); ++e) {
        const bool survived = !s.results[0].success[e] && !s.results[1].success[e] && !s.results[2].success[e];
        CHECK(bool(s.robust[e]) == survived);
        robust += survived;
    }
    CHECK(s.worst_case_accuracy == doctest::Approx(double(robust) / 50));
    for (const auto& r : s.results) CHECK(s.worst_case_accuracy <= r.robust_accuracy());
    CHECK_THROWS_AS(attack_suite<double>(prob.xs, prob.ys, model, {}), std::invalid_argument);
}

TEST_CASE("attack config checks") {
    auto bad = AttackConfig::square(0.1);
    bad.norm = Norm::l2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(AttackConfig::pgd(Norm::l2, -1).validate(), std::invalid_argument);
    CHECK(AttackConfig::pgd(Norm::linf, 0.08).effective_step() == doctest::Approx(0.01));
    CHECK(AttackConfig::cw(0.3).strength() == 0.3);
    CHECK(parse_attack_family("cw") == AttackFamily::cw);
    CHECK_THROWS(parse_attack_family("fgsm"));
    const auto prob = linear_problem(Norm::l2, 0.1, 4, 9);
    const auto model = prob.model();
    CHECK_THROWS_AS(pgd_attack<double>(prob.xs, std::span<const int>(prob.ys).first(2), model, AttackConfig::pgd(Norm::l2, 0.1)),
                    ShapeError);
    // zero radius leaves inputs alone
    const auto r = pgd_attack<double>(prob.xs, prob.ys, model, AttackConfig::pgd(Norm::l2, 0.0));
    for (std::size_t e = 0; e < 4; ++e) CHECK(r.adversarial[e] == prob.xs[e]);
}
