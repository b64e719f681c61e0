#pragma once

#include <cstdint>
#include <random>

namespace eprobust {

/// Per-example stream so results do not depend on scheduling.
inline std::uint64_t example_seed(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index),
                      std::uint32_t(std::uint64_t(index) >> 32)};
    std::uint32_t w[2];
    seq.generate(w, w + 2);
    return (std::uint64_t(w[0]) << 32) | w[1];
}

}  // namespace eprobust
