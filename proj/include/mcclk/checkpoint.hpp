#pragma once

#include <string>

#include "mcclk/model.hpp"

namespace mcclk {

// Binary layout: magic 'MCLK', format version, then u64 d, M, N, |E|, |R|,
// config hash, followed by the parameter tables in declared order as 64-bit
// little-endian reals (relation table includes the trailing self-loop row).
inline constexpr std::uint32_t kCheckpointMagic = 0x4B4C434DU;  // "MCLK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelState& state,
                     std::uint64_t config_hash);

ModelState load_checkpoint(const std::string& path,
                           std::uint64_t* config_hash = nullptr);

// Header check against dataset dimensions; throws CheckpointMismatch naming
// both shapes.
void check_checkpoint_dims(const ModelState& state, idx n_users, idx n_items,
                           idx n_entities, idx n_relations);

}  // namespace mcclk
