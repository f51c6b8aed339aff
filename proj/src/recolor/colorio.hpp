// SPDX-License-Identifier: Apache-2.0
//
// LAB frame containers and sRGB(D65) <-> LAB conversion. Luminance is L/100
// in [0,1]; chrominance is (a,b)/127 clamped to [-1,1], so a tanh output
// maps directly onto valid color.
#pragma once

#include <string>
#include <vector>

#include "recolor/tensor.hpp"

namespace recolor {

struct LabFrame {
  Array<float> l;   // (H,W), [0,1]
  Array<float> ab;  // (2,H,W), [-1,1]

  LabFrame() = default;
  LabFrame(Array<float> l_, Array<float> ab_);

  int height() const { return l.dim(0); }
  int width() const { return l.dim(1); }
  void validate() const;
};

struct VideoClip {
  std::vector<LabFrame> frames;

  void validate() const;
  int height() const { return frames.at(0).height(); }
  int width() const { return frames.at(0).width(); }
  size_t length() const { return frames.size(); }
};

struct FlowField {
  Array<float> uv;  // (2,H,W): u = x displacement, v = y displacement

  int height() const { return uv.dim(1); }
  int width() const { return uv.dim(2); }
  void validate() const;
};

struct OcclusionMask {
  Array<float> m;  // (H,W), values in {0,1}

  int height() const { return m.dim(0); }
  int width() const { return m.dim(1); }
  void validate() const;
};

// rgb: (3,H,W) in [0,1]. Non-finite values are rejected; out-of-range values
// are clamped to the unit interval before conversion.
LabFrame rgb_to_lab(const Array<float>& rgb);

// Inverse of rgb_to_lab up to gamut clamping; output in [0,1].
Array<float> lab_to_rgb(const LabFrame& frame);

// frame_%05d.png sequences, consecutively numbered from zero.
VideoClip read_frame_sequence(const std::string& dir_path);
void write_frame_sequence(const VideoClip& clip, const std::string& dir_path);

std::string frame_file_name(int index);

// Scalar reference conversion used by tests and by the planar converters.
void rgb_to_lab_pixel(double r, double g, double b, double* lab_l,
                      double* lab_a, double* lab_b);
void lab_to_rgb_pixel(double lab_l, double lab_a, double lab_b, double* r,
                      double* g, double* b);

}  // namespace recolor
