#pragma once

// Entry points compiled in a translation unit that defines
// EPROBUST_BLACKBOX_ONLY: the gradient engine and backprop headers refuse to
// compile there, so these runs cannot reach model gradients.

#include "eprobust/square.hpp"

namespace eprobust {

AttackResult<float> blackbox_square(std::span<const Tensor<float>> xs, std::span<const int> ys,
                                    const QueryModel<float>& query, const AttackConfig& cfg);
AttackResult<float> blackbox_random_noise(std::span<const Tensor<float>> xs, std::span<const int> ys,
                                          const QueryModel<float>& query, const AttackConfig& cfg);
/// True only when the defining unit was built with EPROBUST_BLACKBOX_ONLY.
bool blackbox_guard_active();

}  // namespace eprobust
