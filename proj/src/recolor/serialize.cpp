// SPDX-License-Identifier: Apache-2.0
//
// Layout (little endian):
//   "RCPK" u32 version=1, u32 entry_count
//   per entry: u16 name_len, name bytes, u8 kind (0=f32 array, 1=utf8 text),
//              arrays: u8 ndim + i64 dims[ndim] + raw f32 data
//              texts:  u64 byte_len + bytes

#include "recolor/serialize.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace recolor {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put(std::FILE* f, const void* p, size_t n) {
  if (std::fwrite(p, 1, n, f) != n)
    throw std::runtime_error("checkpoint: short write");
}

void get_bytes(std::FILE* f, void* p, size_t n) {
  if (std::fread(p, 1, n, f) != n)
    throw std::runtime_error("checkpoint: truncated file");
}

template <typename T>
void put_pod(std::FILE* f, T v) {
  put(f, &v, sizeof(T));
}

template <typename T>
T get_pod(std::FILE* f) {
  T v;
  get_bytes(f, &v, sizeof(T));
  return v;
}

void put_name(std::FILE* f, const std::string& name) {
  check(name.size() < 65536, "checkpoint: name too long");
  put_pod<uint16_t>(f, static_cast<uint16_t>(name.size()));
  put(f, name.data(), name.size());
}

std::string get_name(std::FILE* f) {
  const uint16_t len = get_pod<uint16_t>(f);
  std::string name(len, '\0');
  get_bytes(f, name.data(), len);
  return name;
}

}  // namespace

void save_named_arrays(const NamedArrays& arrays, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write checkpoint: " + path);
  put(fp.get(), "RCPK", 4);
  put_pod<uint32_t>(fp.get(), 1);
  put_pod<uint32_t>(fp.get(),
                    static_cast<uint32_t>(arrays.entries.size() +
                                          arrays.texts.size()));
  for (const auto& [name, arr] : arrays.entries) {
    put_name(fp.get(), name);
    put_pod<uint8_t>(fp.get(), 0);
    put_pod<uint8_t>(fp.get(), static_cast<uint8_t>(arr.ndim()));
    for (int d = 0; d < arr.ndim(); ++d)
      put_pod<int64_t>(fp.get(), arr.dim(d));
    put(fp.get(), arr.data(), sizeof(float) * static_cast<size_t>(arr.size()));
  }
  for (const auto& [name, text] : arrays.texts) {
    put_name(fp.get(), name);
    put_pod<uint8_t>(fp.get(), 1);
    put_pod<uint64_t>(fp.get(), text.size());
    put(fp.get(), text.data(), text.size());
  }
}

NamedArrays load_named_arrays(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[4];
  get_bytes(fp.get(), magic, 4);
  if (std::memcmp(magic, "RCPK", 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const uint32_t version = get_pod<uint32_t>(fp.get());
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  const uint32_t count = get_pod<uint32_t>(fp.get());
  NamedArrays out;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = get_name(fp.get());
    const uint8_t kind = get_pod<uint8_t>(fp.get());
    if (kind == 0) {
      const uint8_t ndim = get_pod<uint8_t>(fp.get());
      std::vector<int> shape(ndim);
      for (int d = 0; d < ndim; ++d) {
        const int64_t v = get_pod<int64_t>(fp.get());
        check(v >= 0 && v < (int64_t(1) << 31), "checkpoint: bad dimension");
        shape[d] = static_cast<int>(v);
      }
      Array<float> arr(shape);
      get_bytes(fp.get(), arr.data(),
                sizeof(float) * static_cast<size_t>(arr.size()));
      out.add(name, std::move(arr));
    } else if (kind == 1) {
      const uint64_t len = get_pod<uint64_t>(fp.get());
      std::string text(len, '\0');
      get_bytes(fp.get(), text.data(), len);
      out.add_text(name, std::move(text));
    } else {
      throw std::runtime_error("unknown checkpoint entry kind in " + path);
    }
  }
  return out;
}

}  // namespace recolor
