// SPDX-License-Identifier: Apache-2.0

#include "recolor/colorio.hpp"

#include <cmath>
#include <filesystem>
#include <regex>
#include <set>
#include <stdexcept>

#include "recolor/pngio.hpp"

namespace recolor {
namespace {

// sRGB primaries, D65 white point.
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta
             ? std::cbrt(t)
             : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

void rgb_to_lab_pixel(double r, double g, double b, double* lab_l,
                      double* lab_a, double* lab_b) {
  const double rl = srgb_to_linear(r);
  const double gl = srgb_to_linear(g);
  const double bl = srgb_to_linear(b);
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  const double fx = lab_f(x / kXn);
  const double fy = lab_f(y / kYn);
  const double fz = lab_f(z / kZn);
  *lab_l = 116.0 * fy - 16.0;
  *lab_a = 500.0 * (fx - fy);
  *lab_b = 200.0 * (fy - fz);
}

void lab_to_rgb_pixel(double lab_l, double lab_a, double lab_b, double* r,
                      double* g, double* b) {
  const double fy = (lab_l + 16.0) / 116.0;
  const double fx = fy + lab_a / 500.0;
  const double fz = fy - lab_b / 200.0;
  const double x = kXn * lab_f_inv(fx);
  const double y = kYn * lab_f_inv(fy);
  const double z = kZn * lab_f_inv(fz);
  const double rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
  const double gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
  const double bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
  *r = clamp01(linear_to_srgb(clamp01(rl)));
  *g = clamp01(linear_to_srgb(clamp01(gl)));
  *b = clamp01(linear_to_srgb(clamp01(bl)));
}

LabFrame::LabFrame(Array<float> l_, Array<float> ab_)
    : l(std::move(l_)), ab(std::move(ab_)) {
  validate();
}

void LabFrame::validate() const {
  check(l.defined() && ab.defined(), "LabFrame: undefined planes");
  check(l.ndim() == 2, "LabFrame: l must be (H,W)");
  check(ab.ndim() == 3 && ab.dim(0) == 2, "LabFrame: ab must be (2,H,W)");
  check(ab.dim(1) == l.dim(0) && ab.dim(2) == l.dim(1),
        "LabFrame: l and ab dimensions differ");
  for (int64_t i = 0; i < l.size(); ++i)
    check(std::isfinite(l[i]) && l[i] >= -1e-4f && l[i] <= 1.0f + 1e-4f,
          "LabFrame: luminance out of [0,1]");
  for (int64_t i = 0; i < ab.size(); ++i)
    check(std::isfinite(ab[i]) && ab[i] >= -1.0f - 1e-4f &&
              ab[i] <= 1.0f + 1e-4f,
          "LabFrame: chrominance out of [-1,1]");
}

void VideoClip::validate() const {
  check(!frames.empty(), "VideoClip: empty clip");
  const int h = frames[0].height(), w = frames[0].width();
  for (const auto& f : frames)
    check(f.height() == h && f.width() == w,
          "VideoClip: frames have mixed dimensions");
}

void FlowField::validate() const {
  check(uv.defined() && uv.ndim() == 3 && uv.dim(0) == 2,
        "FlowField: uv must be (2,H,W)");
  for (int64_t i = 0; i < uv.size(); ++i)
    check(std::isfinite(uv[i]), "FlowField: non-finite displacement");
}

void OcclusionMask::validate() const {
  check(m.defined() && m.ndim() == 2, "OcclusionMask: m must be (H,W)");
  for (int64_t i = 0; i < m.size(); ++i)
    check(m[i] == 0.0f || m[i] == 1.0f, "OcclusionMask: values must be 0/1");
}

LabFrame rgb_to_lab(const Array<float>& rgb) {
  check(rgb.ndim() == 3 && rgb.dim(0) == 3, "rgb_to_lab: expects (3,H,W)");
  const int h = rgb.dim(1), w = rgb.dim(2);
  for (int64_t i = 0; i < rgb.size(); ++i)
    if (!std::isfinite(rgb[i]))
      throw std::invalid_argument(
          "rgb_to_lab: non-finite value at flat index " + std::to_string(i));
  LabFrame out;
  out.l = Array<float>({h, w});
  out.ab = Array<float>({2, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    double L, A, B;
    rgb_to_lab_pixel(clamp01(rgb[i]), clamp01(rgb[plane + i]),
                     clamp01(rgb[2 * plane + i]), &L, &A, &B);
    out.l[i] = static_cast<float>(clamp01(L / 100.0));
    out.ab[i] =
        static_cast<float>(std::min(1.0, std::max(-1.0, A / 127.0)));
    out.ab[plane + i] =
        static_cast<float>(std::min(1.0, std::max(-1.0, B / 127.0)));
  }
  return out;
}

Array<float> lab_to_rgb(const LabFrame& frame) {
  frame.validate();
  const int h = frame.height(), w = frame.width();
  Array<float> rgb({3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    double r, g, b;
    lab_to_rgb_pixel(frame.l[i] * 100.0, frame.ab[i] * 127.0,
                     frame.ab[plane + i] * 127.0, &r, &g, &b);
    rgb[i] = static_cast<float>(r);
    rgb[plane + i] = static_cast<float>(g);
    rgb[2 * plane + i] = static_cast<float>(b);
  }
  return rgb;
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d.png", index);
  return buf;
}

VideoClip read_frame_sequence(const std::string& dir_path) {
  namespace fs = std::filesystem;
  check(fs::is_directory(dir_path),
        "read_frame_sequence: not a directory: " + dir_path);
  const std::regex pat("frame_(\\d{5})\\.png");
  std::set<int> indices;
  for (const auto& entry : fs::directory_iterator(dir_path)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pat)) indices.insert(std::stoi(m[1].str()));
  }
  check(!indices.empty(),
        "read_frame_sequence: no frame_%05d.png files in " + dir_path);
  const int last = *indices.rbegin();
  for (int i = 0; i <= last; ++i)
    if (!indices.count(i))
      throw std::runtime_error("read_frame_sequence: missing frame index " +
                               std::to_string(i) + " in " + dir_path);
  VideoClip clip;
  for (int i = 0; i <= last; ++i) {
    const Image8 img = read_png((fs::path(dir_path) / frame_file_name(i)).string());
    check(img.channels == 3,
          "read_frame_sequence: frame " + std::to_string(i) + " is not RGB");
    clip.frames.push_back(rgb_to_lab(to_float_chw(img)));
  }
  clip.validate();
  return clip;
}

void write_frame_sequence(const VideoClip& clip, const std::string& dir_path) {
  namespace fs = std::filesystem;
  clip.validate();
  fs::create_directories(dir_path);
  for (size_t i = 0; i < clip.frames.size(); ++i)
    write_png((fs::path(dir_path) / frame_file_name(static_cast<int>(i))).string(),
              to_image8(lab_to_rgb(clip.frames[i])));
}

}  // namespace recolor
