#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ring.hpp"

namespace trishare {

// IDX files as produced for the MNIST corpus: big-endian u32 magic
// (0x00000803 images, 0x00000801 labels), big-endian u32 dims, u8 data.
// Images come back scaled to [0, 1] as [N, rows, cols].
RealTensor load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// Writers take raw bytes so fixtures round-trip exactly.
void save_idx_images(const std::string& path, const std::vector<uint8_t>& pixels,
                     int64_t count, int64_t rows, int64_t cols);
void save_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// Flatten [N, r, c] images to the [N, r*c] matrix the models consume.
RealTensor flatten_images(const RealTensor& images);

}  // namespace trishare
