// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/nn/tensor.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "sigverify/error.hpp"

namespace sigverify::nn {

Tensor::Tensor(int n, int c, int h, int w, double fill)
    : shape_{n, c, h, w} {
  if (n < 0 || c < 0 || h < 0 || w < 0) {
    throw InternalError("negative tensor dimension");
  }
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

Tensor Tensor::reshaped(int n, int c, int h, int w) const {
  if (static_cast<std::size_t>(n) * c * h * w != data_.size()) {
    throw InternalError(fmt::format("cannot reshape {} to [{},{},{},{}]",
                                    shape_string(), n, c, h, w));
  }
  Tensor out;
  out.shape_ = {n, c, h, w};
  out.data_ = data_;
  return out;
}

std::string Tensor::shape_string() const {
  return fmt::format("[{},{},{},{}]", shape_[0], shape_[1], shape_[2],
                     shape_[3]);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw InternalError("tensor += shape mismatch " + shape_string() + " vs " +
                        other.shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor Tensor::stack(std::span<const Tensor> samples) {
  if (samples.empty()) throw InternalError("stack of zero tensors");
  const auto& first = samples.front();
  Tensor out(0, first.c(), first.h(), first.w());
  out.shape_[0] = 0;
  for (const auto& s : samples) {
    if (s.c() != first.c() || s.h() != first.h() || s.w() != first.w()) {
      throw InternalError("stack shape mismatch " + s.shape_string() +
                          " vs " + first.shape_string());
    }
    out.data_.insert(out.data_.end(), s.data_.begin(), s.data_.end());
    out.shape_[0] += s.n();
  }
  return out;
}

Tensor Tensor::slice(int n) const {
  Tensor out(1, c(), h(), w());
  auto src = sample(n);
  std::copy(src.begin(), src.end(), out.data_.begin());
  return out;
}

}  // namespace sigverify::nn
