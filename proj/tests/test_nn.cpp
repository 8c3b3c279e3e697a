// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "sigverify/nn/network.hpp"

using namespace sigverify::nn;
using sigverify::testing::check_gradients;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor t(n, c, h, w);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
  return s;
}

/// Checks parameter and input gradients of `net` under loss = <y, W>.
void check_network(Network& net, Tensor x, std::mt19937_64& rng) {
  Cache cache;
  Tensor y = net.forward(x, cache);
  Tensor weights = random_tensor(y.n(), y.c(), y.h(), y.w(), rng);
  net.zero_grad();
  Tensor dx = net.backward(weights, cache);

  auto loss = [&]() {
    Cache scratch;
    return weighted_sum(net.forward(x, scratch), weights);
  };
  for (Param* p : net.params()) {
    if (!p->trainable) continue;
    auto r = check_gradients(p->value.values(), p->grad.values(), loss, p->name);
    CHECK_MESSAGE(r.max_rel_err < 1e-5, r.worst);
  }
  auto r = check_gradients(x.values(), dx.values(), loss, "input");
  CHECK_MESSAGE(r.max_rel_err < 1e-5, r.worst);
}

}  // namespace

TEST_CASE("conv2d forward matches a direct convolution") {
  std::mt19937_64 rng(1);
  Conv2d conv("c", 2, 3, 3, 2, 1);
  for (auto& v : conv.weight().value.values()) v = std::normal_distribution<>(0, 1)(rng);
  for (auto& v : conv.bias().value.values()) v = std::normal_distribution<>(0, 1)(rng);
  Tensor x = random_tensor(2, 2, 5, 6, rng);
  Tensor y = conv.run(x, nullptr, nullptr);
  REQUIRE(y.h() == 3);
  REQUIRE(y.w() == 3);
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
          double s = conv.bias().value[o];
          for (int c = 0; c < 2; ++c)
            for (int ki = 0; ki < 3; ++ki)
              for (int kj = 0; kj < 3; ++kj) {
                const int iy = oy * 2 - 1 + ki;
                const int ix = ox * 2 - 1 + kj;
                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                s += conv.weight().value.at(o, c, ki, kj) * x.at(n, c, iy, ix);
              }
          CHECK(y.at(n, o, oy, ox) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("layer gradients match central differences") {
  std::mt19937_64 rng(7);

  SUBCASE("conv + leaky relu + maxpool + linear") {
    auto root = std::make_unique<Sequential>("net");
    root->emplace<Conv2d>("c1", 2, 3, 3, 1, 1);
    root->emplace<LeakyReLU>("a1", 0.2);
    root->emplace<MaxPool2d>("p1", 2, 2);
    root->emplace<Conv2d>("c2", 3, 2, 3, 2, 1);
    root->emplace<Linear>("fc", 2 * 2 * 2, 3);
    root->emplace<Sigmoid>("s");
    Network net(std::move(root));
    kaiming_init(net.root(), rng);
    check_network(net, random_tensor(2, 2, 7, 8, rng), rng);
  }

  SUBCASE("batchnorm in training mode") {
    auto root = std::make_unique<Sequential>("net");
    root->emplace<Conv2d>("c1", 1, 3, 3, 1, 1);
    root->emplace<BatchNorm2d>("bn", 3);
    root->emplace<ReLU>("r");
    root->emplace<GlobalAvgPool>("gap");
    Network net(std::move(root));
    kaiming_init(net.root(), rng);
    check_network(net, random_tensor(3, 1, 5, 5, rng), rng);
  }

  SUBCASE("residual block with projection shortcut") {
    auto body = std::make_unique<Sequential>("b");
    body->emplace<Conv2d>("b.c1", 2, 4, 3, 1, 1);
    body->emplace<LeakyReLU>("b.a", 0.1);
    body->emplace<Conv2d>("b.c2", 4, 4, 1);
    auto sc = std::make_unique<Sequential>("sc");
    sc->emplace<Conv2d>("sc.c", 2, 4, 1);
    auto root = std::make_unique<Sequential>("net");
    root->add(std::make_unique<Residual>("res", std::move(body), std::move(sc), true));
    Network net(std::move(root));
    kaiming_init(net.root(), rng);
    check_network(net, random_tensor(2, 2, 4, 4, rng), rng);
  }
}

TEST_CASE("softmax cross entropy gradient") {
  std::mt19937_64 rng(3);
  Tensor logits = random_tensor(4, 5, 1, 1, rng);
  std::vector<int> labels{0, 3, 4, 1};
  auto lg = softmax_cross_entropy(logits, labels);
  auto f = [&]() { return softmax_cross_entropy(logits, labels).value; };
  auto r = check_gradients(logits.values(), lg.grad.values(), f, "logits");
  CHECK_MESSAGE(r.max_rel_err < 1e-6, r.worst);
}

TEST_CASE("taps capture intermediate activations without changing output") {
  std::mt19937_64 rng(5);
  auto root = std::make_unique<Sequential>("net");
  root->emplace<Conv2d>("c1", 1, 2, 3, 1, 1);
  root->emplace<ReLU>("r1");
  root->emplace<Linear>("fc", 2 * 4 * 4, 2);
  Network net(std::move(root));
  kaiming_init(net.root(), rng);
  Tensor x = random_tensor(1, 1, 4, 4, rng);
  Taps taps;
  taps.request("c1");
  Tensor y1 = net.infer(x, &taps);
  Tensor y2 = net.infer(x);
  REQUIRE(taps.has("c1"));
  CHECK(taps.get("c1").c() == 2);
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("state round-trips through the weights file") {
  std::mt19937_64 rng(11);
  auto make = [] {
    auto root = std::make_unique<Sequential>("net");
    root->emplace<Conv2d>("c1", 1, 2, 3);
    root->emplace<BatchNorm2d>("bn", 2);
    return Network(std::move(root));
  };
  Network a = make();
  kaiming_init(a.root(), rng);
  auto path = std::filesystem::temp_directory_path() / "sigverify_state_test.bin";
  write_state(path, a.state());
  Network b = make();
  b.load_state(read_state(path), true);
  auto sa = a.state();
  auto sb = b.state();
  REQUIRE(sa.size() == sb.size());
  for (const auto& [k, v] : sa) {
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(sb.at(k)[i] == v[i]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("sgd with momentum follows the textbook update") {
  Param p{"p", Tensor(1, 1, 1, 1, 1.0), Tensor(1, 1, 1, 1, 0.5), true};
  Sgd sgd(0.1, 0.9);
  std::vector<Param*> ps{&p};
  sgd.step(ps);  // v = 0.5, x = 1 - 0.05
  CHECK(p.value[0] == doctest::Approx(0.95));
  sgd.step(ps);  // v = 0.9*0.5 + 0.5 = 0.95, x = 0.95 - 0.095
  CHECK(p.value[0] == doctest::Approx(0.855));
}
