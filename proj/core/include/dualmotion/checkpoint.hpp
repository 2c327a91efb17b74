#pragma once

#include <filesystem>

#include "dualmotion/training.hpp"

namespace dualmotion {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint, all numbers little-endian:
///   "DMGCKPT\0", u32 version,
///   u32 n, n x (string key, string value)        config snapshot
///   i64 optimizer_steps, generator_steps, critic_steps, u64 effective_seed
///   string rng_state
///   u32 groups, per group: string name, u32 n, n x tensor   parameters
///   u32 groups, per group: string name, i64 steps, u32 n, n x tensor   optimizer state
/// where string = u32 length + bytes and tensor = string name, u32 rank,
/// rank x i32 dims, f64 values.
void save_checkpoint(const std::filesystem::path& path, const TrainingState& state);

/// Throws FormatError on a malformed or incompatible file.
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace dualmotion
