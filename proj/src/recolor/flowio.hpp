// SPDX-License-Identifier: Apache-2.0
//
// Middlebury .flo flow files and binary (0/255) PNG occlusion masks.
#pragma once

#include <string>

#include "recolor/colorio.hpp"

namespace recolor {

FlowField read_flo(const std::string& path);
void write_flo(const FlowField& flow, const std::string& path);

OcclusionMask read_mask_png(const std::string& path);
void write_mask_png(const OcclusionMask& mask, const std::string& path);

}  // namespace recolor
