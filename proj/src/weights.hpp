#pragma once

#include <string>

#include "nn.hpp"

namespace trishare {

// Weights container file ("TSW1"):
//   bytes 0..3   magic "TSW1"
//   u32 LE       manifest length in bytes
//   manifest     UTF-8 text, one line per tensor:
//                  <name> f64 <rank> <dim0> ... <dimN-1> <offset>
//                offsets are byte offsets into the payload, 8-byte aligned,
//                non-overlapping
//   u64 LE       payload length in bytes
//   payload      f64 little-endian values, row-major
void save_weights(const std::string& path, const WeightsMap& weights);
WeightsMap load_weights(const std::string& path);

std::string weights_manifest(const WeightsMap& weights);

}  // namespace trishare
