// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sigverify/nn/layers.hpp"

namespace sigverify::nn {

/// Owns a layer graph and exposes training/inference passes plus state I/O.
class Network {
 public:
  Network() = default;
  explicit Network(std::unique_ptr<Sequential> root);

  /// Inference pass; reentrant on an otherwise unmodified network.
  Tensor infer(const Tensor& x, Taps* taps = nullptr) const;
  Tensor forward(const Tensor& x, Cache& cache, Taps* taps = nullptr);
  Tensor backward(const Tensor& grad_out, const Cache& cache);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void zero_grad();
  std::size_t trainable_count() const;

  const Layer* find(const std::string& layer_name) const;
  std::vector<std::string> layer_names() const;

  using State = std::map<std::string, Tensor>;
  State state() const;
  /// Copies matching tensors in. strict=true requires an exact name/shape
  /// match; otherwise mismatching entries are skipped and counted.
  std::size_t load_state(const State& state, bool strict);

  bool valid() const { return root_ != nullptr; }
  Sequential& root() { return *root_; }
  const Sequential& root() const { return *root_; }

 private:
  std::unique_ptr<Sequential> root_;
};

void write_state(const std::filesystem::path& path, const Network::State& s);
Network::State read_state(const std::filesystem::path& path);

class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay = 0.0)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}
  void step(std::span<Param* const> params);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, momentum_, weight_decay_;
  std::map<const Param*, Tensor> velocity_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.5, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Param* const> params);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<const Param*, std::pair<Tensor, Tensor>> moments_;
};

struct LossAndGrad {
  double value = 0.0;
  Tensor grad;
};

/// Mean softmax cross-entropy over the batch. logits: (n, k, 1, 1).
LossAndGrad softmax_cross_entropy(const Tensor& logits,
                                  std::span<const int> labels);

}  // namespace sigverify::nn
