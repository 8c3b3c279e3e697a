// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sigverify/error.hpp"

namespace sigverify::nn {

namespace {
constexpr char kMagic[4] = {'S', 'V', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw LoadError("truncated weights file");
  return v;
}
}  // namespace

Network::Network(std::unique_ptr<Sequential> root) : root_(std::move(root)) {}

Tensor Network::infer(const Tensor& x, Taps* taps) const {
  return root_->run(x, nullptr, taps);
}

Tensor Network::forward(const Tensor& x, Cache& cache, Taps* taps) {
  return root_->run(x, &cache, taps);
}

Tensor Network::backward(const Tensor& grad_out, const Cache& cache) {
  return root_->backward(grad_out, cache);
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  root_->collect_params(out);
  return out;
}

std::vector<const Param*> Network::params() const {
  std::vector<Param*> tmp;
  const_cast<Sequential&>(*root_).collect_params(tmp);
  return {tmp.begin(), tmp.end()};
}

void Network::zero_grad() {
  for (Param* p : params()) {
    if (!p->grad.empty()) p->grad.fill(0.0);
  }
}

std::size_t Network::trainable_count() const {
  std::size_t n = 0;
  for (const Param* p : params()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

const Layer* Network::find(const std::string& layer_name) const {
  const Layer* found = nullptr;
  root_->visit([&](const Layer& l) {
    if (found == nullptr && l.name() == layer_name) found = &l;
  });
  return found;
}

std::vector<std::string> Network::layer_names() const {
  std::vector<std::string> names;
  root_->visit([&](const Layer& l) { names.push_back(l.name()); });
  return names;
}

Network::State Network::state() const {
  State s;
  for (const Param* p : params()) s.emplace(p->name, p->value);
  return s;
}

std::size_t Network::load_state(const State& state, bool strict) {
  std::size_t skipped = 0;
  for (Param* p : params()) {
    auto it = state.find(p->name);
    if (it == state.end() || !it->second.same_shape(p->value)) {
      if (strict) {
        throw LoadError("state entry missing or mis-shaped: " + p->name);
      }
      ++skipped;
      continue;
    }
    p->value = it->second;
  }
  return skipped;
}

void write_state(const std::filesystem::path& path, const Network::State& s) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(s.size()));
  for (const auto& [name, t] : s) {
    put(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (int d : t.shape()) put(os, static_cast<std::int32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Network::State read_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open weights file " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw LoadError("not a weights file: " + path.string());
  }
  if (get<std::uint32_t>(is) != kVersion) {
    throw LoadError("unsupported weights version in " + path.string());
  }
  const auto count = get<std::uint32_t>(is);
  Network::State s;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    int dims[4];
    for (int& d : dims) d = get<std::int32_t>(is);
    Tensor t(dims[0], dims[1], dims[2], dims[3]);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw LoadError("truncated weights file " + path.string());
    s.emplace(std::move(name), std::move(t));
  }
  return s;
}

void Sgd::step(std::span<Param* const> params) {
  for (Param* p : params) {
    if (!p->trainable || p->grad.empty()) continue;
    auto [it, inserted] = velocity_.try_emplace(p, Tensor::like(p->value));
    Tensor& v = it->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i] + weight_decay_ * p->value[i];
      v[i] = momentum_ * v[i] + g;
      p->value[i] -= lr_ * v[i];
    }
  }
}

void Adam::step(std::span<Param* const> params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params) {
    if (!p->trainable || p->grad.empty()) continue;
    auto [it, inserted] = moments_.try_emplace(
        p, Tensor::like(p->value), Tensor::like(p->value));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p->value[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

LossAndGrad softmax_cross_entropy(const Tensor& logits,
                                  std::span<const int> labels) {
  const int n = logits.n();
  const int k = static_cast<int>(logits.sample_size());
  if (static_cast<int>(labels.size()) != n || n == 0) {
    throw InternalError("label count does not match batch");
  }
  LossAndGrad out;
  out.grad = Tensor::like(logits);
  for (int i = 0; i < n; ++i) {
    auto z = logits.sample(i);
    auto g = out.grad.sample(i);
    const int y = labels[i];
    if (y < 0 || y >= k) throw InternalError("label out of range");
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    const double log_sum = std::log(sum) + zmax;
    out.value += log_sum - z[y];
    for (int j = 0; j < k; ++j) {
      g[j] = (std::exp(z[j] - log_sum) - (j == y ? 1.0 : 0.0)) / n;
    }
  }
  out.value /= n;
  return out;
}

}  // namespace sigverify::nn
