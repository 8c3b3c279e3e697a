// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal layer library with explicit backpropagation.
//
// A forward pass in training mode fills a Cache tree that the matching
// backward call consumes, so one layer may be applied several times before
// any backward pass (as the cycle-consistent translator requires). Inference
// passes (cache == nullptr) do not touch layer state and are safe to run
// concurrently on a shared network.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sigverify/nn/tensor.hpp"

namespace sigverify::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

struct Cache {
  std::vector<Tensor> saved;
  std::vector<Cache> children;
};

/// Named activations captured during a forward pass.
class Taps {
 public:
  void request(const std::string& layer_name) { slots_[layer_name]; }
  void offer(const std::string& layer_name, const Tensor& t);
  bool has(const std::string& layer_name) const;
  const Tensor& get(const std::string& layer_name) const;
  bool empty() const { return slots_.empty(); }
  /// Inference passes stop once `layer_name` has produced its output.
  void stop_after(const std::string& layer_name) {
    request(layer_name);
    stop_ = layer_name;
  }
  bool stopped() const { return stopped_; }

 private:
  std::map<std::string, std::optional<Tensor>> slots_;
  std::string stop_;
  bool stopped_ = false;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;

  /// Forward pass. A non-null cache records what backward() needs.
  Tensor run(const Tensor& x, Cache* cache, Taps* taps) const {
    Tensor y = forward(x, cache, taps);
    if (taps != nullptr) taps->offer(name_, y);
    return y;
  }

  /// Accumulates parameter gradients and returns dLoss/dInput.
  virtual Tensor backward(const Tensor& grad_out, const Cache& cache) = 0;

  virtual void collect_params(std::vector<Param*>& /*out*/) {}
  virtual void visit(const std::function<void(const Layer&)>& fn) const {
    fn(*this);
  }

 protected:
  virtual Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const = 0;

 private:
  std::string name_;
};

using LayerPtr = std::unique_ptr<Layer>;

class Conv2d final : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel,
         int stride = 1, int padding = 0, bool bias = true);
  std::string kind() const override { return "conv2d"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }
  int output_h(int h) const { return (h + 2 * pad_ - kernel_) / stride_ + 1; }
  int output_w(int w) const { return (w + 2 * pad_ - kernel_) / stride_ + 1; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  bool has_bias() const { return has_bias_; }

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  int in_, out_, kernel_, stride_, pad_;
  bool has_bias_;
  Param weight_;
  Param bias_;
};

/// Fully-connected layer. Accepts any (n, c, h, w) input and flattens each
/// sample; output is (n, out, 1, 1).
class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features);
  std::string kind() const override { return "linear"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  int in_, out_;
  Param weight_;
  Param bias_;
};

class ReLU final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "relu"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;
};

class LeakyReLU final : public Layer {
 public:
  LeakyReLU(std::string name, double slope)
      : Layer(std::move(name)), slope_(slope) {}
  std::string kind() const override { return "leaky_relu"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  double slope_;
};

class Sigmoid final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "sigmoid"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;
};

class MaxPool2d final : public Layer {
 public:
  MaxPool2d(std::string name, int kernel, int stride, int padding = 0)
      : Layer(std::move(name)), kernel_(kernel), stride_(stride),
        pad_(padding) {}
  std::string kind() const override { return "maxpool2d"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  int kernel_, stride_, pad_;
};

class GlobalAvgPool final : public Layer {
 public:
  using Layer::Layer;
  std::string kind() const override { return "global_avg_pool"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;
};

/// Per-channel batch normalization. Training passes use batch statistics and
/// update the running estimates; inference uses the running estimates.
class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, double momentum = 0.1,
              double eps = 1e-5);
  std::string kind() const override { return "batchnorm2d"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  int channels_;
  double momentum_, eps_;
  Param gamma_;
  Param beta_;
  // Running statistics are mutated by training passes only.
  mutable Param running_mean_;
  mutable Param running_var_;
};

class Sequential : public Layer {
 public:
  explicit Sequential(std::string name) : Layer(std::move(name)) {}
  std::string kind() const override { return "sequential"; }

  Sequential& add(LayerPtr layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer));
    return ref;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit(const std::function<void(const Layer&)>& fn) const override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_[i]; }
  const Layer& at(std::size_t i) const { return *layers_[i]; }

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  std::vector<LayerPtr> layers_;
};

/// y = post(body(x) + shortcut(x)); an empty shortcut is the identity and
/// post_relu=false leaves the sum unactivated.
class Residual final : public Layer {
 public:
  Residual(std::string name, std::unique_ptr<Sequential> body,
           std::unique_ptr<Sequential> shortcut, bool post_relu);
  std::string kind() const override { return "residual"; }
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect_params(std::vector<Param*>& out) override;
  void visit(const std::function<void(const Layer&)>& fn) const override;

 protected:
  Tensor forward(const Tensor& x, Cache* cache, Taps* taps) const override;

 private:
  std::unique_ptr<Sequential> body_;
  std::unique_ptr<Sequential> shortcut_;
  bool post_relu_;
};

/// He-normal weights, zero biases, for every conv/linear reachable from root.
void kaiming_init(Layer& root, std::mt19937_64& rng);

}  // namespace sigverify::nn
