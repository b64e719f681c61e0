#include "eprobust/blackbox.hpp"
#include "eprobust/query.hpp"

namespace eprobust {

AttackResult<float> blackbox_square(std::span<const Tensor<float>> xs, std::span<const int> ys,
                                    const QueryModel<float>& query, const AttackConfig& cfg) {
    return square_attack<float>(xs, ys, query, cfg);
}

AttackResult<float> blackbox_random_noise(std::span<const Tensor<float>> xs, std::span<const int> ys,
                                          const QueryModel<float>& query, const AttackConfig& cfg) {
    return random_noise_attack<float>(xs, ys, query, cfg);
}

bool blackbox_guard_active() {
#ifdef EPROBUST_BLACKBOX_ONLY
    return true;
#else
    return false;
#endif
}

}  // namespace eprobust
