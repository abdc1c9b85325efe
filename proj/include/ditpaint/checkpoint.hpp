#pragma once

#include <cstdint>
#include <filesystem>

#include "ditpaint/dit.hpp"

namespace ditpaint {

/// Model snapshot: parameters, config, training step counter.
struct Checkpoint {
    ModelConfig config;
    uint64_t step = 0;
    ParamMap<float> params;
};

// File layout: magic "DTCK", version u32 LE = 1, u64 LE JSON byte length,
// JSON header (config, step, ordered tensor names + shapes), then each tensor
// serialized as a DTPT record in header order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ditpaint
