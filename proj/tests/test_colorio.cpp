// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "recolor/colorio.hpp"
#include "recolor/flowio.hpp"
#include "recolor/pngio.hpp"
#include "recolor/rng.hpp"

using namespace recolor;
namespace fs = std::filesystem;

namespace {

// Independent colorimetry oracle, written straight from the CIE definitions
// (kept deliberately separate from the library path).
void reference_srgb_to_lab(double r, double g, double b, double out[3]) {
  auto lin = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double R = lin(r), G = lin(g), B = lin(b);
  const double X = (0.4124564 * R + 0.3575761 * G + 0.1804375 * B) / 0.95047;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = (0.0193339 * R + 0.1191920 * G + 0.9503041 * B) / 1.08883;
  auto f = [](double t) {
    const double d3 = std::pow(6.0 / 29.0, 3.0);
    return t > d3 ? std::pow(t, 1.0 / 3.0)
                  : t / (3.0 * std::pow(6.0 / 29.0, 2.0)) + 4.0 / 29.0;
  };
  out[0] = 116.0 * f(Y) - 16.0;
  out[1] = 500.0 * (f(X) - f(Y));
  out[2] = 200.0 * (f(Y) - f(Z));
}

Array<float> constant_rgb(int h, int w, float r, float g, float b) {
  Array<float> rgb({3, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    rgb[i] = r;
    rgb[plane + i] = g;
    rgb[2 * plane + i] = b;
  }
  return rgb;
}

fs::path temp_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("black and white map to the neutral axis") {
  const LabFrame black = rgb_to_lab(constant_rgb(4, 5, 0, 0, 0));
  for (int64_t i = 0; i < black.l.size(); ++i) CHECK(black.l[i] == 0.0f);
  for (int64_t i = 0; i < black.ab.size(); ++i)
    CHECK(std::abs(black.ab[i]) < 1e-3f);

  const LabFrame white = rgb_to_lab(constant_rgb(4, 5, 1, 1, 1));
  for (int64_t i = 0; i < white.l.size(); ++i)
    CHECK(white.l[i] == doctest::Approx(1.0f).epsilon(1e-4));
  for (int64_t i = 0; i < white.ab.size(); ++i)
    CHECK(std::abs(white.ab[i]) < 1e-3f);
}

TEST_CASE("pure red matches the independent colorimetry oracle") {
  double expect[3];
  reference_srgb_to_lab(1.0, 0.0, 0.0, expect);
  // Literature values for sRGB red under D65.
  CHECK(expect[0] == doctest::Approx(53.24).epsilon(1e-3));
  CHECK(expect[1] == doctest::Approx(80.09).epsilon(1e-3));
  CHECK(expect[2] == doctest::Approx(67.20).epsilon(1e-3));

  const LabFrame red = rgb_to_lab(constant_rgb(2, 2, 1, 0, 0));
  CHECK(red.l[0] * 100.0 == doctest::Approx(expect[0]).epsilon(1e-5));
  CHECK(red.ab[0] * 127.0 == doctest::Approx(expect[1]).epsilon(1e-5));
  CHECK(red.ab.at(1, 0, 0) * 127.0 ==
        doctest::Approx(expect[2]).epsilon(1e-5));
}

TEST_CASE("gray inputs always map to zero chrominance") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const float v = static_cast<float>(rng.uniform());
    const LabFrame f = rgb_to_lab(constant_rgb(3, 3, v, v, v));
    for (int64_t i = 0; i < f.ab.size(); ++i)
      CHECK(std::abs(f.ab[i]) < 1e-3f);
  }
}

TEST_CASE("lab_to_rgb neutral axis gives gray pixels") {
  LabFrame f;
  f.l = Array<float>::full({2, 2}, 0.5f);
  f.ab = Array<float>::zeros({2, 2, 2});
  const Array<float> rgb = lab_to_rgb(f);
  const int64_t plane = 4;
  for (int64_t i = 0; i < plane; ++i) {
    CHECK(std::abs(rgb[i] - rgb[plane + i]) <= 1.0f / 255.0f);
    CHECK(std::abs(rgb[i] - rgb[2 * plane + i]) <= 1.0f / 255.0f);
  }
}

TEST_CASE("round trip rgb->lab->rgb within 1/255 on random images") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Array<float> rgb({3, 8, 9});
    for (int64_t i = 0; i < rgb.size(); ++i)
      rgb[i] = static_cast<float>(rng.uniform());
    const Array<float> back = lab_to_rgb(rgb_to_lab(rgb));
    for (int64_t i = 0; i < rgb.size(); ++i)
      CHECK(std::abs(back[i] - rgb[i]) <= 1.0f / 255.0f);
  }
}

TEST_CASE("saturated chrominance is clamped without error") {
  LabFrame f;
  f.l = Array<float>::full({2, 2}, 0.5f);
  f.ab = Array<float>::full({2, 2, 2}, 1.0f);
  const Array<float> rgb = lab_to_rgb(f);
  for (int64_t i = 0; i < rgb.size(); ++i) {
    CHECK(rgb[i] >= 0.0f);
    CHECK(rgb[i] <= 1.0f);
  }
}

TEST_CASE("non-finite input is rejected with a descriptive error") {
  Array<float> rgb = constant_rgb(2, 2, 0.5f, 0.5f, 0.5f);
  rgb[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(rgb_to_lab(rgb), doctest::Contains("non-finite"),
                       std::invalid_argument);
}

TEST_CASE("frame sequences: write/read round trip is byte-exact") {
  Rng rng(11);
  const fs::path dir = temp_dir("recolor_seq_rt");
  // Start from 8-bit data so the quantization grid is the PNG's own.
  VideoClip clip;
  for (int t = 0; t < 3; ++t) {
    Image8 img;
    img.height = 6;
    img.width = 7;
    img.channels = 3;
    img.pixels.resize(6 * 7 * 3);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.below(256));
    clip.frames.push_back(rgb_to_lab(to_float_chw(img)));
  }
  write_frame_sequence(clip, dir.string());
  const VideoClip back = read_frame_sequence(dir.string());
  REQUIRE(back.length() == 3);

  const fs::path dir2 = temp_dir("recolor_seq_rt2");
  write_frame_sequence(back, dir2.string());
  for (int t = 0; t < 3; ++t) {
    std::ifstream a(dir / frame_file_name(t), std::ios::binary);
    std::ifstream b(dir2 / frame_file_name(t), std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)),
                         std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
}

TEST_CASE("frame sequences: three files load as a clip of length 3") {
  const fs::path dir = temp_dir("recolor_seq_len");
  Image8 img;
  img.height = 4;
  img.width = 4;
  img.channels = 3;
  img.pixels.assign(4 * 4 * 3, 77);
  for (int i = 0; i < 3; ++i)
    write_png((dir / frame_file_name(i)).string(), img);
  CHECK(read_frame_sequence(dir.string()).length() == 3);
}

TEST_CASE("frame sequences: gap in numbering names the missing index") {
  const fs::path dir = temp_dir("recolor_seq_gap");
  Image8 img;
  img.height = 4;
  img.width = 4;
  img.channels = 3;
  img.pixels.assign(4 * 4 * 3, 128);
  write_png((dir / frame_file_name(0)).string(), img);
  write_png((dir / frame_file_name(2)).string(), img);
  CHECK_THROWS_WITH_AS(read_frame_sequence(dir.string()),
                       doctest::Contains("missing frame index 1"),
                       std::runtime_error);
}

TEST_CASE("frame sequences: mixed dimensions are rejected") {
  const fs::path dir = temp_dir("recolor_seq_mixed");
  Image8 a;
  a.height = 4;
  a.width = 4;
  a.channels = 3;
  a.pixels.assign(4 * 4 * 3, 100);
  Image8 b = a;
  b.width = 5;
  b.pixels.assign(4 * 5 * 3, 100);
  write_png((dir / frame_file_name(0)).string(), a);
  write_png((dir / frame_file_name(1)).string(), b);
  CHECK_THROWS_AS(read_frame_sequence(dir.string()), std::invalid_argument);
}

TEST_CASE("flo: zero flow round trip") {
  const fs::path dir = temp_dir("recolor_flo");
  FlowField flow;
  flow.uv = Array<float>::zeros({2, 2, 2});
  write_flo(flow, (dir / "zero.flo").string());
  const FlowField back = read_flo((dir / "zero.flo").string());
  CHECK(back.height() == 2);
  CHECK(back.width() == 2);
  for (int64_t i = 0; i < back.uv.size(); ++i) CHECK(back.uv[i] == 0.0f);
}

TEST_CASE("flo: wrong magic is a format error") {
  const fs::path dir = temp_dir("recolor_flo_bad");
  const fs::path p = dir / "bad.flo";
  std::FILE* f = std::fopen(p.c_str(), "wb");
  REQUIRE(f != nullptr);
  const float magic = 0.0f;
  const int32_t wh[2] = {2, 2};
  std::fwrite(&magic, 4, 1, f);
  std::fwrite(wh, 4, 2, f);
  const float zeros[8] = {0};
  std::fwrite(zeros, 4, 8, f);
  std::fclose(f);
  CHECK_THROWS_WITH_AS(read_flo(p.string()), doctest::Contains("magic"),
                       std::runtime_error);
}

TEST_CASE("flo: synthetic u(x,y)=x reads back exactly") {
  const fs::path dir = temp_dir("recolor_flo_synth");
  FlowField flow;
  flow.uv = Array<float>::zeros({2, 3, 5});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) flow.uv.at(0, y, x) = static_cast<float>(x);
  const fs::path p = dir / "synth.flo";
  write_flo(flow, p.string());
  const FlowField back = read_flo(p.string());
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) {
      CHECK(back.uv.at(0, y, x) == static_cast<float>(x));
      CHECK(back.uv.at(1, y, x) == 0.0f);
    }
}

TEST_CASE("mask png: 0/255 encoding round trip") {
  const fs::path dir = temp_dir("recolor_mask");
  OcclusionMask mask;
  mask.m = Array<float>::zeros({3, 4});
  mask.m[0] = 1.0f;
  mask.m[5] = 1.0f;
  mask.m[11] = 1.0f;
  const fs::path p = dir / "m.png";
  write_mask_png(mask, p.string());
  const OcclusionMask back = read_mask_png(p.string());
  for (int64_t i = 0; i < mask.m.size(); ++i) CHECK(back.m[i] == mask.m[i]);
}
