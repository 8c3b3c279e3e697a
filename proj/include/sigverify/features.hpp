// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sigverify {

/// Fixed-dimension feature vectors keyed by image path.
///
/// On disk: a binary file ("SVFC", version, model_id, dim, count, then
/// count*dim little-endian doubles, row-major) and "<file>.index.csv" mapping
/// row numbers to image paths.
class FeatureCache {
 public:
  FeatureCache() = default;
  FeatureCache(std::string model_id, std::size_t dim);

  const std::string& model_id() const { return model_id_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }

  /// Adds or replaces the vector for `key`. Throws ValidationError on a
  /// dimension mismatch.
  void put(const std::string& key, std::span<const double> values);
  bool contains(const std::string& key) const { return index_.count(key) != 0; }
  std::optional<std::span<const double>> find(const std::string& key) const;
  std::span<const double> row(std::size_t i) const;

  void write(const std::filesystem::path& path) const;
  static FeatureCache read(const std::filesystem::path& path);
  static std::filesystem::path index_path(const std::filesystem::path& path);

 private:
  std::string model_id_;
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace sigverify
