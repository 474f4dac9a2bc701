#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vct/tensor.hpp"

namespace vct {

// [0,1] floats (clamped) to 8-bit, round-to-nearest.
std::vector<uint8_t> quantize_u8(const Tensor<float>& img);

// Binary PPM (P6). The tensor must hold size*size*3 values in row-major HWC.
void write_ppm(const std::string& path, const Tensor<float>& img, int64_t size);
// Rectangular variant (used for image grids and strips).
void write_ppm_rect(const std::string& path, const Tensor<float>& img, int64_t width,
                    int64_t height);
// Returns a {size, size, 3} tensor in [0,1]; square images only.
Tensor<float> read_ppm(const std::string& path);

// Grayscale PGM (P5) for masks/saliency; values clamped to [0,1].
void write_pgm(const std::string& path, const Tensor<float>& img, int64_t size);

// Lays out equally sized square tiles ({size*size*3} each) on a white canvas,
// row-major, with `pad` pixels of spacing.
Tensor<float> image_grid(const std::vector<Tensor<float>>& tiles, int64_t rows, int64_t cols,
                         int64_t tile_size, int64_t pad = 2);

}  // namespace vct
