// Copyright 2026 The conde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit tests.

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "conde/graph.hpp"
#include "conde/rng.hpp"
#include "conde/tensor.hpp"

namespace conde::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("conde-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Five users, six items, four concepts; user 4 clicks a single item.
inline TripartiteGraph toy_graph() {
  std::vector<Interaction> clicks = {
      {"u0", "i0", {}}, {"u0", "i1", {}}, {"u0", "i2", {}}, {"u1", "i1", {}}, {"u1", "i3", {}},
      {"u2", "i2", {}}, {"u2", "i4", {}}, {"u2", "i5", {}}, {"u3", "i0", {}}, {"u3", "i5", {}},
      {"u4", "i3", {}},
  };
  std::vector<ItemConceptRecord> tags = {
      {"i0", "c0", 1.0}, {"i0", "c1", 0.5}, {"i1", "c1", 1.0}, {"i2", "c2", 2.0}, {"i2", "c0", 1.0},
      {"i3", "c3", 1.0}, {"i4", "c2", 1.0}, {"i4", "c3", 0.7}, {"i4", "c0", 0.2}, {"i5", "c1", 1.0},
  };
  return build_graph(clicks, tags);
}

}  // namespace conde::testing
