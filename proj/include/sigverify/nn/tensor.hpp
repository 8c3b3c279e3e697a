// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace sigverify::nn {

/// 64-byte aligned storage. Vectorized kernels round differently depending on
/// where a buffer starts, so a fixed alignment keeps results bit-reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Dense NCHW tensor of doubles. Fully-connected activations use h = w = 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  static Tensor like(const Tensor& other, double fill = 0.0) {
    return Tensor(other.n(), other.c(), other.h(), other.w(), fill);
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Elements per sample (c * h * w).
  std::size_t sample_size() const {
    return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
  }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(shape_[2]) * shape_[3];
  }

  double& at(int n, int c, int h, int w) {
    return data_[index(n, c, h, w)];
  }
  double at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  std::span<double> sample(int n) {
    return {data_.data() + n * sample_size(), sample_size()};
  }
  std::span<const double> sample(int n) const {
    return {data_.data() + n * sample_size(), sample_size()};
  }

  /// Same data, new shape. Element count must match.
  Tensor reshaped(int n, int c, int h, int w) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);

  /// Stacks single samples along the batch axis. All inputs share c, h, w.
  static Tensor stack(std::span<const Tensor> samples);
  Tensor slice(int n) const;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<double, AlignedAllocator<double>> data_;
};

}  // namespace sigverify::nn
