// SPDX-License-Identifier: Apache-2.0

#include "recolor/flowio.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

#include "recolor/pngio.hpp"

namespace recolor {
namespace {

constexpr float kFloMagic = 202021.25f;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

FlowField read_flo(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open flow file: " + path);
  float magic = 0.0f;
  int32_t w = 0, h = 0;
  if (std::fread(&magic, 4, 1, fp.get()) != 1 ||
      std::fread(&w, 4, 1, fp.get()) != 1 ||
      std::fread(&h, 4, 1, fp.get()) != 1)
    throw std::runtime_error("truncated flow header: " + path);
  if (magic != kFloMagic)
    throw std::runtime_error("bad .flo magic in " + path +
                             " (expected 202021.25)");
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
    throw std::runtime_error("implausible flow dimensions in " + path);
  std::vector<float> interleaved(static_cast<size_t>(w) * h * 2);
  if (std::fread(interleaved.data(), 4, interleaved.size(), fp.get()) !=
      interleaved.size())
    throw std::runtime_error("truncated flow data: " + path);
  FlowField flow;
  flow.uv = Array<float>({2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      flow.uv.at(0, y, x) = interleaved[(static_cast<size_t>(y) * w + x) * 2];
      flow.uv.at(1, y, x) =
          interleaved[(static_cast<size_t>(y) * w + x) * 2 + 1];
    }
  flow.validate();
  return flow;
}

void write_flo(const FlowField& flow, const std::string& path) {
  flow.validate();
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open flow file for write: " + path);
  const int32_t w = flow.width(), h = flow.height();
  std::fwrite(&kFloMagic, 4, 1, fp.get());
  std::fwrite(&w, 4, 1, fp.get());
  std::fwrite(&h, 4, 1, fp.get());
  std::vector<float> interleaved(static_cast<size_t>(w) * h * 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      interleaved[(static_cast<size_t>(y) * w + x) * 2] = flow.uv.at(0, y, x);
      interleaved[(static_cast<size_t>(y) * w + x) * 2 + 1] =
          flow.uv.at(1, y, x);
    }
  if (std::fwrite(interleaved.data(), 4, interleaved.size(), fp.get()) !=
      interleaved.size())
    throw std::runtime_error("short write on flow file: " + path);
}

OcclusionMask read_mask_png(const std::string& path) {
  const Image8 img = read_png(path);
  check(img.channels == 1, "mask PNG must be single channel: " + path);
  OcclusionMask mask;
  mask.m = Array<float>({img.height, img.width});
  for (int64_t i = 0; i < mask.m.size(); ++i)
    mask.m[i] = img.pixels[static_cast<size_t>(i)] >= 128 ? 1.0f : 0.0f;
  return mask;
}

void write_mask_png(const OcclusionMask& mask, const std::string& path) {
  mask.validate();
  Image8 img;
  img.height = mask.height();
  img.width = mask.width();
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(img.height) * img.width);
  for (int64_t i = 0; i < mask.m.size(); ++i)
    img.pixels[static_cast<size_t>(i)] = mask.m[i] > 0.5f ? 255 : 0;
  write_png(path, img);
}

}  // namespace recolor
