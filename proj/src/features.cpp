// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/features.hpp"

#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "sigverify/csv.hpp"
#include "sigverify/error.hpp"

namespace fs = std::filesystem;

namespace sigverify {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream& is, const fs::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw LoadError("truncated feature cache " + path.string());
  }
  return v;
}

}  // namespace

FeatureCache::FeatureCache(std::string model_id, std::size_t dim)
    : model_id_(std::move(model_id)), dim_(dim) {
  if (dim == 0) throw ValidationError("feature dimension must be positive");
}

void FeatureCache::put(const std::string& key, std::span<const double> values) {
  if (values.size() != dim_) {
    throw ValidationError(fmt::format("feature for {} has dim {}, cache expects {}", key,
                                      values.size(), dim_));
  }
  auto it = index_.find(key);
  if (it != index_.end()) {
    std::copy(values.begin(), values.end(), data_.begin() + it->second * dim_);
    return;
  }
  index_.emplace(key, keys_.size());
  keys_.push_back(key);
  data_.insert(data_.end(), values.begin(), values.end());
}

std::optional<std::span<const double>> FeatureCache::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return row(it->second);
}

std::span<const double> FeatureCache::row(std::size_t i) const {
  return {data_.data() + i * dim_, dim_};
}

fs::path FeatureCache::index_path(const fs::path& path) {
  return fs::path(path.string() + ".index.csv");
}

void FeatureCache::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, 4);
  put_raw(os, kVersion);
  put_raw(os, static_cast<std::uint32_t>(model_id_.size()));
  os.write(model_id_.data(), static_cast<std::streamsize>(model_id_.size()));
  put_raw(os, static_cast<std::uint64_t>(dim_));
  put_raw(os, static_cast<std::uint64_t>(keys_.size()));
  os.write(reinterpret_cast<const char*>(data_.data()),
           static_cast<std::streamsize>(data_.size() * sizeof(double)));
  if (!os) throw IoError("failed writing " + path.string());

  std::vector<csv::Row> rows;
  rows.reserve(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) rows.push_back({std::to_string(i), keys_[i]});
  csv::write(index_path(path), {"row", "path"}, rows);
}

FeatureCache FeatureCache::read(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw LoadError("not a feature cache: " + path.string());
  }
  if (get_raw<std::uint32_t>(is, path) != kVersion) {
    throw LoadError("unsupported feature cache version in " + path.string());
  }
  const auto id_len = get_raw<std::uint32_t>(is, path);
  std::string model_id(id_len, '\0');
  if (!is.read(model_id.data(), id_len)) throw LoadError("truncated feature cache " + path.string());
  const auto dim = get_raw<std::uint64_t>(is, path);
  const auto count = get_raw<std::uint64_t>(is, path);
  FeatureCache fc(std::move(model_id), dim);
  fc.data_.resize(dim * count);
  if (!is.read(reinterpret_cast<char*>(fc.data_.data()),
               static_cast<std::streamsize>(fc.data_.size() * sizeof(double)))) {
    throw LoadError("truncated feature cache " + path.string());
  }

  const auto t = csv::read(index_path(path));
  const auto ir = t.column("row");
  const auto ip = t.column("path");
  if (t.rows.size() != count) {
    throw LoadError(fmt::format("feature index lists {} rows, cache holds {}", t.rows.size(),
                                count));
  }
  fc.keys_.resize(count);
  for (const auto& r : t.rows) {
    const std::size_t i = std::stoull(r[ir]);
    if (i >= count) throw LoadError("feature index row out of range: " + r[ir]);
    fc.keys_[i] = r[ip];
    fc.index_.emplace(r[ip], i);
  }
  return fc;
}

}  // namespace sigverify
