#pragma once

#include <string>

#include "trodo/model.hpp"

namespace trodo {

// Container: 8-byte magic "TRODOMDL", u32 version (=1), u32 JSON header
// length, UTF-8 JSON describing spec+meta, then concatenated little-endian
// float32 weight blocks in spec order (weight before bias per layer).
//
// Weight payloads are single precision, so values are snapped to float32 on
// save; bundles produced by build_model and the trainer already hold
// float32-representable weights, making save/load a bitwise round trip.
void save_model(const ModelBundle& bundle, const std::string& path);

// Validates the loaded bundle; rejects bad magic, unsupported version,
// unknown layer kinds, shape inconsistencies, and truncated payloads.
ModelBundle load_model(const std::string& path);

}  // namespace trodo
