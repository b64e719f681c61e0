#pragma once

// Binary model checkpoint, all integers little-endian:
//
//   "EPRBCKPT"                       8 bytes
//   version                          u32 (currently 1)
//   descriptor                       u32 length + text (model kind, timestep, architecture)
//   tensor count                     u32
//   per tensor: name                 u32 length + bytes
//               rank, dims           u32, rank x u32
//               values               f32 x numel
//   config snapshot                  u32 length + text
//   seed                             u64
//
// Tensors are the parameters in Params::named() order followed by
// normalization.mean and normalization.std (omitted for identity).

#include "eprobust/config.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eprobust {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelKind kind = ModelKind::ep;
    ModelSpec spec;
    Params<float> params;
    Normalization normalization;
    /// Free-phase steps used when evaluating or attacking the model.
    int timestep = 0;
    /// to_text() of the run configuration that produced the model.
    std::string config;
    std::uint64_t seed = 0;

    RunConfig run_config() const { return parse_config(config); }
    int effective_timestep() const { return timestep > 0 ? timestep : spec.t_free; }
};

std::vector<std::uint8_t> serialize(const Checkpoint& c);
/// Throws ParseError with the byte offset of the first bad field.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace eprobust
