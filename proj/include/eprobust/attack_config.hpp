#pragma once

#include "eprobust/norm.hpp"
#include "eprobust/seed.hpp"

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace eprobust {

enum class AttackFamily { pgd, cw, square };

inline std::string to_string(AttackFamily f) {
    switch (f) {
        case AttackFamily::pgd: return "pgd";
        case AttackFamily::cw: return "cw";
        case AttackFamily::square: return "square";
    }
    return "?";
}

inline AttackFamily parse_attack_family(const std::string& s) {
    if (s == "pgd") return AttackFamily::pgd;
    if (s == "cw") return AttackFamily::cw;
    if (s == "square") return AttackFamily::square;
    throw std::invalid_argument("unknown attack family '" + s + "' (expected pgd, cw or square)");
}

struct AttackConfig {
    AttackFamily family = AttackFamily::pgd;
    Norm norm = Norm::linf;
    /// Ball radius in pixel units. Infinite means unconstrained (C&W).
    double epsilon = 0.0;
    int steps = 20;
    /// PGD step; 0 selects epsilon / 8.
    double step_size = 0.0;
    bool random_start = true;
    double cw_constant = 1.0;
    double cw_lr = 0.01;
    double cw_kappa = 0.0;
    long query_budget = 5000;
    /// Free-phase steps used by energy models; 0 keeps the model's own.
    int timestep = 0;
    std::uint64_t seed = 0;

    static AttackConfig pgd(Norm norm, double epsilon) {
        AttackConfig c;
        c.norm = norm;
        c.epsilon = epsilon;
        return c;
    }

    static AttackConfig cw(double constant) {
        AttackConfig c;
        c.family = AttackFamily::cw;
        c.norm = Norm::l2;
        c.epsilon = std::numeric_limits<double>::infinity();
        c.steps = 100;
        c.cw_constant = constant;
        return c;
    }

    static AttackConfig square(double epsilon, long budget = 5000) {
        AttackConfig c;
        c.family = AttackFamily::square;
        c.norm = Norm::linf;
        c.epsilon = epsilon;
        c.query_budget = budget;
        return c;
    }

    double effective_step() const { return step_size > 0 ? step_size : epsilon / 8.0; }

    /// Strength reported in result tables: c for C&W, epsilon otherwise.
    double strength() const { return family == AttackFamily::cw ? cw_constant : epsilon; }

    void validate() const {
        if (!(epsilon >= 0)) throw std::invalid_argument("AttackConfig: epsilon must be >= 0");
        if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
        if (step_size < 0) throw std::invalid_argument("AttackConfig: step_size must be >= 0");
        if (family == AttackFamily::square && norm != Norm::linf)
            throw std::invalid_argument("AttackConfig: square attack supports linf only");
        if (family == AttackFamily::square && query_budget < 1)
            throw std::invalid_argument("AttackConfig: query_budget must be >= 1");
        if (family == AttackFamily::cw && (cw_constant < 0 || cw_lr <= 0))
            throw std::invalid_argument("AttackConfig: cw_constant must be >= 0 and cw_lr > 0");
    }
};

template <typename Scalar>
struct AttackResult {
    std::vector<Tensor<Scalar>> adversarial;
    /// Misclassified after the attack (already-wrong inputs count as successes).
    std::vector<char> success;
    std::vector<int> predicted;
    std::vector<double> loss;
    std::vector<long> queries;
    std::vector<double> perturbation;

    std::size_t size() const { return adversarial.size(); }

    void resize(std::size_t n) {
        adversarial.resize(n);
        success.assign(n, 0);
        predicted.assign(n, 0);
        loss.assign(n, 0.0);
        queries.assign(n, 0);
        perturbation.assign(n, 0.0);
    }

    double success_rate() const {
        if (success.empty()) return 0.0;
        std::size_t k = 0;
        for (char s : success) k += s != 0;
        return double(k) / double(success.size());
    }

    double robust_accuracy() const {
        if (success.empty()) return 0.0;
        std::size_t k = 0;
        for (char s : success) k += s == 0;
        return double(k) / double(success.size());
    }
};


}  // namespace eprobust
