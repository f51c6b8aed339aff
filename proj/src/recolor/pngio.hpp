// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recolor/tensor.hpp"

namespace recolor {

struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;               // 1 (gray) or 3 (rgb)
  std::vector<uint8_t> pixels;    // HWC interleaved
};

Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

// Byte <-> unit-float conversion; the pair is exact on 8-bit data.
Array<float> to_float_chw(const Image8& img);
Image8 to_image8(const Array<float>& chw);

}  // namespace recolor
