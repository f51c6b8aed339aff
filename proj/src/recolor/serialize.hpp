// SPDX-License-Identifier: Apache-2.0
//
// Self-describing binary container: an ordered list of named arrays with
// shape headers. Backbone weights and training checkpoints share it.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recolor/tensor.hpp"

namespace recolor {

struct NamedArrays {
  std::vector<std::pair<std::string, Array<float>>> entries;
  std::vector<std::pair<std::string, std::string>> texts;  // UTF-8 payloads

  void add(const std::string& name, Array<float> arr) {
    entries.emplace_back(name, std::move(arr));
  }
  void add_text(const std::string& name, std::string text) {
    texts.emplace_back(name, std::move(text));
  }
  const Array<float>* find(const std::string& name) const {
    for (const auto& [n, a] : entries)
      if (n == name) return &a;
    return nullptr;
  }
  Array<float> get(const std::string& name) const {
    const Array<float>* a = find(name);
    check(a != nullptr, "checkpoint: missing array '" + name + "'");
    return *a;
  }
  const std::string* find_text(const std::string& name) const {
    for (const auto& [n, t] : texts)
      if (n == name) return &t;
    return nullptr;
  }
};

void save_named_arrays(const NamedArrays& arrays, const std::string& path);
NamedArrays load_named_arrays(const std::string& path);

}  // namespace recolor
