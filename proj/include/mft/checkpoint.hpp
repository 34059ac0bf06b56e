#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mft/network.hpp"
#include "mft/trainer.hpp"

namespace mft {

// Layout, all little-endian:
//   "MFTC" u32 version
//   u64 epoch, u64 step, string rng_state
//   u32 param count; per param: string name, u32 rank, u64 dims,
//     f64 values, f64 momentum
//   u32 MAC layer count; per layer: f64 gamma, u8 has_block, [QuantBlock of
//     the quantized weights as used by the next forward]
// Strings are u32 length + bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(Network& net, const TrainState& state);
// Loads into a network built from the same spec; refuses other versions and
// any name or shape mismatch.
TrainState decode_checkpoint(std::string_view bytes, Network& net);

void save_checkpoint(const std::filesystem::path& path, Network& net, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path, Network& net);

}  // namespace mft
