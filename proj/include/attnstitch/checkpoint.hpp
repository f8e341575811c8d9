#pragma once

// .asck checkpoint container:
//   "ASCK" | u32 version | u32 header length | JSON header | tensors
// The header lists every tensor (name, shape) in storage order: model
// parameters, then Adam first and second moments when present. Tensors use
// the tensorcore serialization.

#include <string>

#include "attnstitch/stitcher.hpp"

namespace astitch::ckpt {

inline constexpr std::uint32_t kVersion = 1;

std::string encode_checkpoint(const stitch::StitchModel& model);
stitch::StitchModel decode_checkpoint(const std::string& bytes);

void save_checkpoint(const stitch::StitchModel& model, const std::string& path);
stitch::StitchModel load_checkpoint(const std::string& path);

}  // namespace astitch::ckpt
