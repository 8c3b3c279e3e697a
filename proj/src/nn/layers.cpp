// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "sigverify/error.hpp"

namespace sigverify::nn {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

void ensure_grad(Param& p) {
  if (p.grad.empty() || !p.grad.same_shape(p.value)) {
    p.grad = Tensor::like(p.value);
  }
}

Tensor shape_record(const Tensor& t) {
  Tensor s(1, 1, 1, 4);
  for (int i = 0; i < 4; ++i) s[i] = t.shape()[i];
  return s;
}

Tensor zeros_from_record(const Tensor& s) {
  return Tensor(static_cast<int>(s[0]), static_cast<int>(s[1]),
                static_cast<int>(s[2]), static_cast<int>(s[3]));
}

// Unfolds one CHW sample into a row-major (C*k*k) x (Ho*Wo) matrix.
void im2col(const double* x, int channels, int h, int w, int k, int stride,
            int pad, int out_h, int out_w, double* cols) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) *
                                 plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          double* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int channels, int h, int w, int k, int stride,
            int pad, int out_h, int out_w, double* x) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    double* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row =
            cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * out_w;
          double* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void Taps::offer(const std::string& layer_name, const Tensor& t) {
  auto it = slots_.find(layer_name);
  if (it != slots_.end()) it->second = t;
  if (!stop_.empty() && layer_name == stop_) stopped_ = true;
}

bool Taps::has(const std::string& layer_name) const {
  auto it = slots_.find(layer_name);
  return it != slots_.end() && it->second.has_value();
}

const Tensor& Taps::get(const std::string& layer_name) const {
  auto it = slots_.find(layer_name);
  if (it == slots_.end() || !it->second) {
    throw InternalError("no activation captured for layer '" + layer_name +
                        "'");
  }
  return *it->second;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels,
               int kernel, int stride, int padding, bool bias)
    : Layer(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(padding),
      has_bias_(bias) {
  if (in_ < 1 || out_ < 1 || kernel_ < 1 || stride_ < 1 || pad_ < 0) {
    throw ValidationError("invalid conv2d geometry for layer " + this->name());
  }
  weight_.name = this->name() + ".weight";
  weight_.value = Tensor(out_, in_, kernel_, kernel_);
  if (has_bias_) {
    bias_.name = this->name() + ".bias";
    bias_.value = Tensor(1, out_, 1, 1);
  }
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

Tensor Conv2d::forward(const Tensor& x, Cache* cache, Taps*) const {
  if (x.c() != in_) {
    throw InternalError(name() + ": expected " + std::to_string(in_) +
                        " input channels, got " + x.shape_string());
  }
  const int oh = output_h(x.h());
  const int ow = output_w(x.w());
  if (oh < 1 || ow < 1) {
    throw ValidationError(name() + ": input " + x.shape_string() +
                          " too small for kernel");
  }
  const int kdim = in_ * kernel_ * kernel_;
  const int plane = oh * ow;
  Tensor y(x.n(), out_, oh, ow);
  RowMat cols(kdim, plane);
  ConstMapRow wm(weight_.value.data(), out_, kdim);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n).data(), in_, x.h(), x.w(), kernel_, stride_, pad_, oh,
           ow, cols.data());
    MapRow ym(y.sample(n).data(), out_, plane);
    ym.noalias() = wm * cols;
    if (has_bias_) {
      ym.colwise() += ConstMapVec(bias_.value.data(), out_);
    }
  }
  if (cache != nullptr) cache->saved = {x};
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.saved.at(0);
  const int oh = grad_out.h();
  const int ow = grad_out.w();
  const int kdim = in_ * kernel_ * kernel_;
  const int plane = oh * ow;
  ensure_grad(weight_);
  if (has_bias_) ensure_grad(bias_);
  Tensor dx = Tensor::like(x);
  RowMat cols(kdim, plane);
  RowMat dcols(kdim, plane);
  ConstMapRow wm(weight_.value.data(), out_, kdim);
  MapRow dw(weight_.grad.data(), out_, kdim);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x.sample(n).data(), in_, x.h(), x.w(), kernel_, stride_, pad_, oh,
           ow, cols.data());
    ConstMapRow dy(grad_out.sample(n).data(), out_, plane);
    dw.noalias() += dy * cols.transpose();
    if (has_bias_) {
      MapVec(bias_.grad.data(), out_) += dy.rowwise().sum();
    }
    dcols.noalias() = wm.transpose() * dy;
    col2im(dcols.data(), in_, x.h(), x.w(), kernel_, stride_, pad_, oh, ow,
           dx.sample(n).data());
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features)
    : Layer(std::move(name)), in_(in_features), out_(out_features) {
  if (in_ < 1 || out_ < 1) {
    throw ValidationError("invalid linear geometry for layer " + this->name());
  }
  weight_.name = this->name() + ".weight";
  weight_.value = Tensor(out_, in_, 1, 1);
  bias_.name = this->name() + ".bias";
  bias_.value = Tensor(1, out_, 1, 1);
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor Linear::forward(const Tensor& x, Cache* cache, Taps*) const {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw InternalError(name() + ": expected " + std::to_string(in_) +
                        " features, got " + x.shape_string());
  }
  Tensor y(x.n(), out_, 1, 1);
  ConstMapRow xm(x.data(), x.n(), in_);
  ConstMapRow wm(weight_.value.data(), out_, in_);
  MapRow ym(y.data(), x.n(), out_);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += ConstMapVec(bias_.value.data(), out_).transpose();
  if (cache != nullptr) cache->saved = {x};
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.saved.at(0);
  ensure_grad(weight_);
  ensure_grad(bias_);
  ConstMapRow xm(x.data(), x.n(), in_);
  ConstMapRow dy(grad_out.data(), x.n(), out_);
  ConstMapRow wm(weight_.value.data(), out_, in_);
  MapRow(weight_.grad.data(), out_, in_).noalias() += dy.transpose() * xm;
  MapVec(bias_.grad.data(), out_) += dy.colwise().sum().transpose();
  Tensor dx = Tensor::like(x);
  MapRow(dx.data(), x.n(), in_).noalias() = dy * wm;
  return dx;
}

// ---------------------------------------------------------- activations

Tensor ReLU::forward(const Tensor& x, Cache* cache, Taps*) const {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  if (cache != nullptr) cache->saved = {y};
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& y = cache.saved.at(0);
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (y[i] <= 0.0) dx[i] = 0.0;
  }
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, Cache* cache, Taps*) const {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : slope_ * v;
  if (cache != nullptr) cache->saved = {x};
  return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.saved.at(0);
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (x[i] <= 0.0) dx[i] *= slope_;
  }
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, Cache* cache, Taps*) const {
  Tensor y = x;
  for (auto& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  if (cache != nullptr) cache->saved = {y};
  return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& y = cache.saved.at(0);
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
  return dx;
}

// -------------------------------------------------------------- pooling

Tensor MaxPool2d::forward(const Tensor& x, Cache* cache, Taps*) const {
  const int oh = (x.h() + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (x.w() + 2 * pad_ - kernel_) / stride_ + 1;
  if (oh < 1 || ow < 1) {
    throw ValidationError(name() + ": input " + x.shape_string() +
                          " too small for pooling");
  }
  Tensor y(x.n(), x.c(), oh, ow);
  Tensor argmax;
  if (cache != nullptr) argmax = Tensor::like(y);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = -1;
          for (int ki = 0; ki < kernel_; ++ki) {
            const int iy = oy * stride_ - pad_ + ki;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kj = 0; kj < kernel_; ++kj) {
              const int ix = ox * stride_ - pad_ + kj;
              if (ix < 0 || ix >= x.w()) continue;
              const double v = x.at(n, c, iy, ix);
              if (v > best) {
                best = v;
                best_idx = iy * x.w() + ix;
              }
            }
          }
          y.at(n, c, oy, ox) = best;
          if (cache != nullptr) argmax.at(n, c, oy, ox) = best_idx;
        }
      }
    }
  }
  if (cache != nullptr) cache->saved = {shape_record(x), std::move(argmax)};
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor dx = zeros_from_record(cache.saved.at(0));
  const Tensor& argmax = cache.saved.at(1);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      double* plane = dx.sample(n).data() + c * dx.plane_size();
      for (int oy = 0; oy < grad_out.h(); ++oy) {
        for (int ox = 0; ox < grad_out.w(); ++ox) {
          const int idx = static_cast<int>(argmax.at(n, c, oy, ox));
          if (idx >= 0) plane[idx] += grad_out.at(n, c, oy, ox);
        }
      }
    }
  }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, Cache* cache, Taps*) const {
  Tensor y(x.n(), x.c(), 1, 1);
  const double inv = 1.0 / static_cast<double>(x.plane_size());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.sample(n).data() + c * x.plane_size();
      double s = 0.0;
      for (std::size_t i = 0; i < x.plane_size(); ++i) s += p[i];
      y.at(n, c, 0, 0) = s * inv;
    }
  }
  if (cache != nullptr) cache->saved = {shape_record(x)};
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor dx = zeros_from_record(cache.saved.at(0));
  const double inv = 1.0 / static_cast<double>(dx.plane_size());
  for (int n = 0; n < dx.n(); ++n) {
    for (int c = 0; c < dx.c(); ++c) {
      double* p = dx.sample(n).data() + c * dx.plane_size();
      const double g = grad_out.at(n, c, 0, 0) * inv;
      std::fill(p, p + dx.plane_size(), g);
    }
  }
  return dx;
}

// ------------------------------------------------------------ batchnorm

BatchNorm2d::BatchNorm2d(std::string name, int channels, double momentum,
                         double eps)
    : Layer(std::move(name)), channels_(channels), momentum_(momentum),
      eps_(eps) {
  gamma_ = {this->name() + ".gamma", Tensor(1, channels, 1, 1, 1.0), {}, true};
  beta_ = {this->name() + ".beta", Tensor(1, channels, 1, 1, 0.0), {}, true};
  running_mean_ = {this->name() + ".running_mean",
                   Tensor(1, channels, 1, 1, 0.0), {}, false};
  running_var_ = {this->name() + ".running_var",
                  Tensor(1, channels, 1, 1, 1.0), {}, false};
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

Tensor BatchNorm2d::forward(const Tensor& x, Cache* cache, Taps*) const {
  if (x.c() != channels_) {
    throw InternalError(name() + ": channel mismatch " + x.shape_string());
  }
  Tensor y = Tensor::like(x);
  const std::size_t plane = x.plane_size();
  if (cache == nullptr) {
    for (int c = 0; c < channels_; ++c) {
      const double inv_std = 1.0 / std::sqrt(running_var_.value[c] + eps_);
      const double scale = gamma_.value[c] * inv_std;
      const double shift = beta_.value[c] - running_mean_.value[c] * scale;
      for (int n = 0; n < x.n(); ++n) {
        const double* src = x.sample(n).data() + c * plane;
        double* dst = y.sample(n).data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    return y;
  }
  const double count = static_cast<double>(x.n()) * plane;
  Tensor xhat = Tensor::like(x);
  Tensor inv_std_t(1, channels_, 1, 1);
  for (int c = 0; c < channels_; ++c) {
    double mean = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.sample(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) mean += src[i];
    }
    mean /= count;
    double var = 0.0;
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.sample(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        var += (src[i] - mean) * (src[i] - mean);
      }
    }
    var /= count;
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_t[c] = inv_std;
    for (int n = 0; n < x.n(); ++n) {
      const double* src = x.sample(n).data() + c * plane;
      double* xh = xhat.sample(n).data() + c * plane;
      double* dst = y.sample(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean) * inv_std;
        dst[i] = gamma_.value[c] * xh[i] + beta_.value[c];
      }
    }
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    running_mean_.value[c] =
        (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean;
    running_var_.value[c] =
        (1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
  }
  cache->saved = {std::move(xhat), std::move(inv_std_t)};
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& xhat = cache.saved.at(0);
  const Tensor& inv_std = cache.saved.at(1);
  ensure_grad(gamma_);
  ensure_grad(beta_);
  Tensor dx = Tensor::like(grad_out);
  const std::size_t plane = grad_out.plane_size();
  const double count = static_cast<double>(grad_out.n()) * plane;
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < grad_out.n(); ++n) {
      const double* dy = grad_out.sample(n).data() + c * plane;
      const double* xh = xhat.sample(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double k = gamma_.value[c] * inv_std[c] / count;
    for (int n = 0; n < grad_out.n(); ++n) {
      const double* dy = grad_out.sample(n).data() + c * plane;
      const double* xh = xhat.sample(n).data() + c * plane;
      double* d = dx.sample(n).data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        d[i] = k * (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------- containers

Sequential& Sequential::add(LayerPtr layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Cache* cache, Taps* taps) const {
  if (cache != nullptr) cache->children.assign(layers_.size(), Cache{});
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->run(cur, cache ? &cache->children[i] : nullptr, taps);
    if (cache == nullptr && taps != nullptr && taps->stopped()) break;
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, const Cache& cache) {
  if (cache.children.size() != layers_.size()) {
    throw InternalError(name() + ": backward without a training forward pass");
  }
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, cache.children[i]);
  }
  return g;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::visit(const std::function<void(const Layer&)>& fn) const {
  fn(*this);
  for (const auto& l : layers_) l->visit(fn);
}

Residual::Residual(std::string name, std::unique_ptr<Sequential> body,
                   std::unique_ptr<Sequential> shortcut, bool post_relu)
    : Layer(std::move(name)),
      body_(std::move(body)),
      shortcut_(std::move(shortcut)),
      post_relu_(post_relu) {}

Tensor Residual::forward(const Tensor& x, Cache* cache, Taps* taps) const {
  if (cache != nullptr) cache->children.assign(2, Cache{});
  Tensor y = body_->run(x, cache ? &cache->children[0] : nullptr, taps);
  if (cache == nullptr && taps != nullptr && taps->stopped()) return y;
  if (shortcut_) {
    y += shortcut_->run(x, cache ? &cache->children[1] : nullptr, taps);
  } else {
    y += x;
  }
  if (post_relu_) {
    for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
    if (cache != nullptr) cache->saved = {y};
  }
  return y;
}

Tensor Residual::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor g = grad_out;
  if (post_relu_) {
    const Tensor& y = cache.saved.at(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] <= 0.0) g[i] = 0.0;
    }
  }
  Tensor dx = body_->backward(g, cache.children.at(0));
  if (shortcut_) {
    dx += shortcut_->backward(g, cache.children.at(1));
  } else {
    dx += g;
  }
  return dx;
}

void Residual::collect_params(std::vector<Param*>& out) {
  body_->collect_params(out);
  if (shortcut_) shortcut_->collect_params(out);
}

void Residual::visit(const std::function<void(const Layer&)>& fn) const {
  fn(*this);
  body_->visit(fn);
  if (shortcut_) shortcut_->visit(fn);
}

void kaiming_init(Layer& root, std::mt19937_64& rng) {
  std::vector<Param*> params;
  root.collect_params(params);
  for (Param* p : params) {
    const auto& n = p->name;
    auto ends_with = [&](std::string_view suffix) {
      return n.size() >= suffix.size() &&
             n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".weight")) {
      const double fan_in = static_cast<double>(p->value.sample_size());
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : p->value.values()) v = dist(rng);
    } else if (ends_with(".bias")) {
      p->value.fill(0.0);
    }
  }
}

}  // namespace sigverify::nn
