#pragma once

#include <filesystem>

#include "lifas/model.hpp"

namespace lifas {

// Binary model snapshot: magic, format version, the architecture as JSON, then
// every named tensor (batch-norm running stats included) as raw little-endian
// 32-bit floats in sorted name order. Round trips are bit-exact.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace lifas
