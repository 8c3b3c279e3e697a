// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/cleaner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "sigverify/error.hpp"
#include "sigverify/hash.hpp"
#include "sigverify/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sigverify::cleaner {

using nn::Tensor;

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }
bool clamped(double p) { return p < kProbEps || p > 1.0 - kProbEps; }

void scale(Tensor& t, double s) {
  for (auto& v : t.values()) v *= s;
}

std::vector<nn::Param*> trainable(std::initializer_list<nn::Network*> nets) {
  std::vector<nn::Param*> out;
  for (auto* n : nets)
    for (auto* p : n->params())
      if (p->trainable) out.push_back(p);
  return out;
}

json losses_json(const EpochLosses& e) {
  return {{"epoch", e.epoch},         {"adv_g", e.adv_g},       {"adv_f", e.adv_f},
          {"cyc", e.cyc},             {"objective", e.objective}, {"gen_loss", e.gen_loss},
          {"disc_loss", e.disc_loss}};
}

EpochLosses losses_from_json(const json& j) {
  EpochLosses e;
  e.epoch = j.at("epoch");
  e.adv_g = j.at("adv_g");
  e.adv_f = j.at("adv_f");
  e.cyc = j.at("cyc");
  e.objective = j.at("objective");
  e.gen_loss = j.at("gen_loss");
  e.disc_loss = j.at("disc_loss");
  return e;
}

std::vector<Tensor> prepare(const std::vector<imaging::SignatureImage>& imgs, int h, int w) {
  std::vector<Tensor> out;
  out.reserve(imgs.size());
  for (const auto& img : imgs) out.push_back(to_model_input(img, h, w));
  return out;
}

Tensor batch_of(const std::vector<Tensor>& pool, const std::vector<std::size_t>& order,
                std::size_t start, int size) {
  std::vector<Tensor> items;
  items.reserve(size);
  for (int k = 0; k < size; ++k) items.push_back(pool[order[(start + k) % order.size()]]);
  return Tensor::stack(items);
}

struct NetSet {
  nn::Network G, F, D_X, D_Y;
};

NetSet build_nets(const CleanerTrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  NetSet n;
  n.G = build_generator(cfg.arch, rng);
  n.F = build_generator(cfg.arch, rng);
  n.D_X = build_discriminator(cfg.arch, rng);
  n.D_Y = build_discriminator(cfg.arch, rng);
  return n;
}

}  // namespace

AdversarialLoss adversarial_loss(const Tensor& d_real, const Tensor& d_fake) {
  if (d_real.empty() || d_fake.empty()) {
    throw ValidationError("adversarial_loss: empty discriminator output");
  }
  AdversarialLoss out;
  out.grad_real = Tensor::like(d_real);
  out.grad_fake = Tensor::like(d_fake);
  const double nr = static_cast<double>(d_real.size());
  const double nf = static_cast<double>(d_fake.size());
  double sr = 0.0, sf = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    const double p = clamp_prob(d_real[i]);
    sr += std::log(p);
    out.grad_real[i] = clamped(d_real[i]) ? 0.0 : 1.0 / (p * nr);
  }
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const double p = clamp_prob(d_fake[i]);
    sf += std::log(1.0 - p);
    out.grad_fake[i] = clamped(d_fake[i]) ? 0.0 : -1.0 / ((1.0 - p) * nf);
  }
  out.value = sr / nr + sf / nf;
  return out;
}

GeneratorLoss parse_generator_loss(std::string_view s) {
  if (s == "minimax") return GeneratorLoss::minimax;
  if (s == "non_saturating") return GeneratorLoss::non_saturating;
  if (s == "least_squares") return GeneratorLoss::least_squares;
  throw ValidationError("unknown generator loss '" + std::string(s) + "'");
}

std::string_view to_string(GeneratorLoss g) {
  switch (g) {
    case GeneratorLoss::minimax: return "minimax";
    case GeneratorLoss::non_saturating: return "non_saturating";
    case GeneratorLoss::least_squares: return "least_squares";
  }
  return "non_saturating";
}

LossAndGrad generator_adv_loss(const Tensor& d_fake, GeneratorLoss kind) {
  if (d_fake.empty()) throw ValidationError("generator loss: empty discriminator output");
  LossAndGrad out;
  out.grad = Tensor::like(d_fake);
  const double n = static_cast<double>(d_fake.size());
  double s = 0.0;
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const double raw = d_fake[i];
    const double p = clamp_prob(raw);
    switch (kind) {
      case GeneratorLoss::minimax:
        s += std::log(1.0 - p);
        out.grad[i] = clamped(raw) ? 0.0 : -1.0 / ((1.0 - p) * n);
        break;
      case GeneratorLoss::non_saturating:
        s -= std::log(p);
        out.grad[i] = clamped(raw) ? 0.0 : -1.0 / (p * n);
        break;
      case GeneratorLoss::least_squares:
        s += (raw - 1.0) * (raw - 1.0);
        out.grad[i] = 2.0 * (raw - 1.0) / n;
        break;
    }
  }
  out.value = s / n;
  return out;
}

AdversarialLoss discriminator_loss(const Tensor& d_real, const Tensor& d_fake,
                                   GeneratorLoss kind) {
  if (kind != GeneratorLoss::least_squares) {
    AdversarialLoss a = adversarial_loss(d_real, d_fake);
    a.value = -a.value;
    scale(a.grad_real, -1.0);
    scale(a.grad_fake, -1.0);
    return a;
  }
  if (d_real.empty() || d_fake.empty()) {
    throw ValidationError("discriminator loss: empty discriminator output");
  }
  AdversarialLoss out;
  out.grad_real = Tensor::like(d_real);
  out.grad_fake = Tensor::like(d_fake);
  const double nr = static_cast<double>(d_real.size());
  const double nf = static_cast<double>(d_fake.size());
  double sr = 0.0, sf = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    sr += (d_real[i] - 1.0) * (d_real[i] - 1.0);
    out.grad_real[i] = 2.0 * (d_real[i] - 1.0) / nr;
  }
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    sf += d_fake[i] * d_fake[i];
    out.grad_fake[i] = 2.0 * d_fake[i] / nf;
  }
  out.value = sr / nr + sf / nf;
  return out;
}

LossAndGrad l1_loss(const Tensor& recon, const Tensor& target) {
  if (!recon.same_shape(target)) {
    throw InternalError(fmt::format("reconstruction shape {} differs from input shape {}",
                                    recon.shape_string(), target.shape_string()));
  }
  if (recon.empty()) throw ValidationError("l1_loss: empty batch");
  LossAndGrad out;
  out.grad = Tensor::like(recon);
  const double n = static_cast<double>(recon.size());
  double s = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double d = recon[i] - target[i];
    s += std::abs(d);
    out.grad[i] = (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / n;
  }
  out.value = s / n;
  return out;
}

double cycle_loss(const nn::Network& G, const nn::Network& F, const Tensor& x,
                  const Tensor& y) {
  if (x.empty() || y.empty()) throw ValidationError("cycle_loss: empty batch");
  return l1_loss(F.infer(G.infer(x)), x).value + l1_loss(G.infer(F.infer(y)), y).value;
}

double full_objective(double adv_g, double adv_f, double cyc, double lambda_cyc) {
  return adv_g + adv_f + lambda_cyc * cyc;
}

nn::Network build_generator(const Architecture& a, std::mt19937_64& rng) {
  if (a.gen_width < 1 || a.gen_blocks < 0) throw ValidationError("bad generator architecture");
  auto body = std::make_unique<nn::Sequential>("body");
  body->emplace<nn::Conv2d>("head", 1, a.gen_width, 3, 1, 1);
  body->emplace<nn::ReLU>("head.act");
  for (int b = 0; b < a.gen_blocks; ++b) {
    const std::string p = fmt::format("block{}", b);
    auto inner = std::make_unique<nn::Sequential>(p + ".body");
    inner->emplace<nn::Conv2d>(p + ".conv1", a.gen_width, a.gen_width, 3, 1, 1);
    inner->emplace<nn::ReLU>(p + ".act");
    inner->emplace<nn::Conv2d>(p + ".conv2", a.gen_width, a.gen_width, 3, 1, 1);
    body->add(std::make_unique<nn::Residual>(p, std::move(inner), nullptr, false));
  }
  body->emplace<nn::ReLU>("body.act");
  auto& tail = body->emplace<nn::Conv2d>("tail", a.gen_width, 1, 3, 1, 1);
  auto root = std::make_unique<nn::Sequential>("generator");
  root->add(std::make_unique<nn::Residual>("skip", std::move(body), nullptr, false));
  nn::kaiming_init(*root, rng);
  tail.weight().value.fill(0.0);
  tail.bias().value.fill(0.0);
  return nn::Network(std::move(root));
}

nn::Network build_discriminator(const Architecture& a, std::mt19937_64& rng) {
  if (a.disc_width < 1 || a.disc_layers < 2) throw ValidationError("bad discriminator architecture");
  auto root = std::make_unique<nn::Sequential>("discriminator");
  int in = 1, width = a.disc_width;
  for (int l = 0; l + 1 < a.disc_layers; ++l) {
    root->emplace<nn::Conv2d>(fmt::format("conv{}", l), in, width, 4, 2, 1);
    root->emplace<nn::LeakyReLU>(fmt::format("act{}", l), 0.2);
    in = width;
    width *= 2;
  }
  root->emplace<nn::Conv2d>("out", in, 1, 3, 1, 1);
  root->emplace<nn::Sigmoid>("prob");
  nn::kaiming_init(*root, rng);
  return nn::Network(std::move(root));
}

void CleanerTrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (decay_epochs < 0 || decay_epochs > epochs) {
    throw ValidationError("decay_epochs must lie in [0, epochs]");
  }
  if (!(lambda_cyc >= 0.0)) throw ValidationError("lambda_cyc must be >= 0");
  if (height < 8 || width < 8) throw ValidationError("cleaner input must be at least 8x8");
}

json CleanerTrainConfig::to_json() const {
  json j{{"epochs", epochs},
         {"batch_size", batch_size},
         {"learning_rate", learning_rate},
         {"decay_epochs", decay_epochs},
         {"beta1", beta1},
         {"lambda_cyc", lambda_cyc},
         {"generator_loss", std::string(to_string(generator_loss))},
         {"seed", seed},
         {"height", height},
         {"width", width},
         {"gen_width", arch.gen_width},
         {"gen_blocks", arch.gen_blocks},
         {"disc_width", arch.disc_width},
         {"disc_layers", arch.disc_layers}};
  if (checkpoint_dir) j["checkpoint_dir"] = checkpoint_dir->string();
  return j;
}

CleanerTrainConfig CleanerTrainConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys{
      "epochs", "batch_size", "learning_rate", "decay_epochs", "beta1",
      "lambda_cyc", "generator_loss", "seed", "height", "width",
      "gen_width", "gen_blocks", "disc_width", "disc_layers", "checkpoint_dir"};
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw ValidationError("unknown cleaner config key '" + k + "'");
  }
  CleanerTrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
    c.beta1 = j.value("beta1", c.beta1);
    c.lambda_cyc = j.value("lambda_cyc", c.lambda_cyc);
    if (j.contains("generator_loss")) {
      c.generator_loss = parse_generator_loss(j["generator_loss"].get<std::string>());
    }
    c.seed = j.value("seed", c.seed);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.arch.gen_width = j.value("gen_width", c.arch.gen_width);
    c.arch.gen_blocks = j.value("gen_blocks", c.arch.gen_blocks);
    c.arch.disc_width = j.value("disc_width", c.arch.disc_width);
    c.arch.disc_layers = j.value("disc_layers", c.arch.disc_layers);
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j["checkpoint_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad cleaner config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string CleanerTrainConfig::hash() const {
  json j = to_json();
  j.erase("checkpoint_dir");
  return sha256_hex(j.dump());
}

Tensor to_model_input(const imaging::SignatureImage& img, int height, int width,
                      imaging::ContentBox* box) {
  const auto src = img.polarity == imaging::Polarity::inverse ? imaging::invert(img) : img;
  Tensor t = imaging::to_tensor(imaging::fit_to_canvas(src, height, width, box));
  for (auto& v : t.values()) v = 2.0 * v - 1.0;
  return t;
}

EpochLosses evaluate_losses(const CleanerModel& model,
                            const std::vector<imaging::SignatureImage>& stamped,
                            const std::vector<imaging::SignatureImage>& clean_set) {
  const auto& cfg = model.config;
  if (stamped.empty() || clean_set.empty()) {
    throw ValidationError("evaluate_losses: both image sets must be nonempty");
  }
  const auto X = prepare(stamped, cfg.height, cfg.width);
  const auto Y = prepare(clean_set, cfg.height, cfg.width);
  std::vector<std::size_t> ox(X.size()), oy(Y.size());
  std::iota(ox.begin(), ox.end(), 0);
  std::iota(oy.begin(), oy.end(), 0);
  const std::size_t n = std::max(X.size(), Y.size());
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  EpochLosses acc;
  int batches = 0;
  for (std::size_t s = 0; s < n; s += b) {
    const int size = static_cast<int>(std::min(b, n - s));
    const Tensor x = batch_of(X, ox, s, size), y = batch_of(Y, oy, s, size);
    const Tensor fake_y = model.G.infer(x), fake_x = model.F.infer(y);
    const double cyc = l1_loss(model.F.infer(fake_y), x).value +
                       l1_loss(model.G.infer(fake_x), y).value;
    const Tensor dy_real = model.D_Y.infer(y), dy_fake = model.D_Y.infer(fake_y);
    const Tensor dx_real = model.D_X.infer(x), dx_fake = model.D_X.infer(fake_x);
    const double adv_g = adversarial_loss(dy_real, dy_fake).value;
    const double adv_f = adversarial_loss(dx_real, dx_fake).value;
    acc.adv_g += adv_g;
    acc.adv_f += adv_f;
    acc.cyc += cyc;
    acc.gen_loss += generator_adv_loss(dy_fake, cfg.generator_loss).value +
                    generator_adv_loss(dx_fake, cfg.generator_loss).value +
                    cfg.lambda_cyc * cyc;
    acc.disc_loss += discriminator_loss(dy_real, dy_fake, cfg.generator_loss).value +
                     discriminator_loss(dx_real, dx_fake, cfg.generator_loss).value;
    ++batches;
  }
  for (double* v : {&acc.adv_g, &acc.adv_f, &acc.cyc, &acc.gen_loss, &acc.disc_loss}) *v /= batches;
  acc.objective = full_objective(acc.adv_g, acc.adv_f, acc.cyc, cfg.lambda_cyc);
  acc.epoch = model.epoch;
  return acc;
}

CleanerModel train_cleaner(const std::vector<imaging::SignatureImage>& stamped,
                           const std::vector<imaging::SignatureImage>& clean_set,
                           const CleanerTrainConfig& cfg) {
  cfg.validate();
  if (stamped.empty() || clean_set.empty()) {
    throw ValidationError("train_cleaner: both image sets must be nonempty");
  }
  CleanerModel m;
  m.config = cfg;
  {
    NetSet nets = build_nets(cfg);
    m.G = std::move(nets.G);
    m.F = std::move(nets.F);
    m.D_X = std::move(nets.D_X);
    m.D_Y = std::move(nets.D_Y);
  }
  m.initial = evaluate_losses(m, stamped, clean_set);

  const auto X = prepare(stamped, cfg.height, cfg.width);
  const auto Y = prepare(clean_set, cfg.height, cfg.width);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::Adam opt_gen(cfg.learning_rate, cfg.beta1);
  nn::Adam opt_disc(cfg.learning_rate, cfg.beta1);
  const auto gen_params = trainable({&m.G, &m.F});
  const auto disc_params = trainable({&m.D_X, &m.D_Y});
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n = std::max(X.size(), Y.size());
  const double lambda = cfg.lambda_cyc;

  struct Snapshot {
    nn::Network::State g, f, dx, dy;
  };
  auto snapshot = [&] { return Snapshot{m.G.state(), m.F.state(), m.D_X.state(), m.D_Y.state()}; };
  Snapshot good = snapshot();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.decay_epochs > 0) {
      const int start = cfg.epochs - cfg.decay_epochs;
      const double f = epoch <= start ? 1.0
                                      : 1.0 - static_cast<double>(epoch - start) /
                                                  (cfg.decay_epochs + 1);
      opt_gen.set_lr(cfg.learning_rate * f);
      opt_disc.set_lr(cfg.learning_rate * f);
    }
    std::vector<std::size_t> ox(X.size()), oy(Y.size());
    std::iota(ox.begin(), ox.end(), 0);
    std::iota(oy.begin(), oy.end(), 0);
    shuffle(ox, rng);
    shuffle(oy, rng);

    EpochLosses acc;
    acc.epoch = epoch;
    int batches = 0;
    bool finite = true;
    for (std::size_t s = 0; s < n && finite; s += b) {
      const int size = static_cast<int>(std::min(b, n - s));
      const Tensor x = batch_of(X, ox, s, size), y = batch_of(Y, oy, s, size);

      // Generator step.
      nn::Cache cg1, cf1, cf2, cg2, cdy, cdx;
      const Tensor fake_y = m.G.forward(x, cg1);
      const Tensor rec_x = m.F.forward(fake_y, cf1);
      const Tensor fake_x = m.F.forward(y, cf2);
      const Tensor rec_y = m.G.forward(fake_x, cg2);
      const Tensor dy_fake = m.D_Y.forward(fake_y, cdy);
      const Tensor dx_fake = m.D_X.forward(fake_x, cdx);
      const auto ga = generator_adv_loss(dy_fake, cfg.generator_loss);
      const auto fa = generator_adv_loss(dx_fake, cfg.generator_loss);
      auto lx = l1_loss(rec_x, x);
      auto ly = l1_loss(rec_y, y);
      const double gen_loss = ga.value + fa.value + lambda * (lx.value + ly.value);
      scale(lx.grad, lambda);
      scale(ly.grad, lambda);
      for (auto* net : {&m.G, &m.F, &m.D_X, &m.D_Y}) net->zero_grad();
      Tensor g_fake_y = m.D_Y.backward(ga.grad, cdy);
      g_fake_y += m.F.backward(lx.grad, cf1);
      m.G.backward(g_fake_y, cg1);
      Tensor g_fake_x = m.D_X.backward(fa.grad, cdx);
      g_fake_x += m.G.backward(ly.grad, cg2);
      m.F.backward(g_fake_x, cf2);
      opt_gen.step(gen_params);

      // Discriminator step on the same (now fixed) fakes.
      for (auto* net : {&m.D_X, &m.D_Y}) net->zero_grad();
      nn::Cache a1, a2, b1, b2;
      const Tensor dy_r = m.D_Y.forward(y, a1), dy_f = m.D_Y.forward(fake_y, a2);
      const Tensor dx_r = m.D_X.forward(x, b1), dx_f = m.D_X.forward(fake_x, b2);
      const auto ly_d = discriminator_loss(dy_r, dy_f, cfg.generator_loss);
      const auto lx_d = discriminator_loss(dx_r, dx_f, cfg.generator_loss);
      m.D_Y.backward(ly_d.grad_real, a1);
      m.D_Y.backward(ly_d.grad_fake, a2);
      m.D_X.backward(lx_d.grad_real, b1);
      m.D_X.backward(lx_d.grad_fake, b2);
      opt_disc.step(disc_params);

      const double disc_loss = ly_d.value + lx_d.value;
      finite = std::isfinite(gen_loss) && std::isfinite(disc_loss);
      acc.adv_g += adversarial_loss(dy_r, dy_f).value;
      acc.adv_f += adversarial_loss(dx_r, dx_f).value;
      acc.cyc += lx.value + ly.value;
      acc.gen_loss += gen_loss;
      acc.disc_loss += disc_loss;
      ++batches;
    }
    if (!finite) {
      m.G.load_state(good.g, true);
      m.F.load_state(good.f, true);
      m.D_X.load_state(good.dx, true);
      m.D_Y.load_state(good.dy, true);
      m.diverged = true;
      break;
    }
    for (double* v : {&acc.adv_g, &acc.adv_f, &acc.cyc, &acc.gen_loss, &acc.disc_loss}) *v /= batches;
    acc.objective = full_objective(acc.adv_g, acc.adv_f, acc.cyc, lambda);
    m.history.push_back(acc);
    m.epoch = epoch;
    good = snapshot();
    if (cfg.checkpoint_dir) save_cleaner(m, *cfg.checkpoint_dir);
  }
  return m;
}

imaging::SignatureImage clean(const CleanerModel& model, const imaging::SignatureImage& img) {
  img.validate();
  const auto& cfg = model.config;
  imaging::ContentBox box;
  const Tensor out = model.G.infer(to_model_input(img, cfg.height, cfg.width, &box));
  imaging::PixelMatrix px(cfg.height, cfg.width);
  for (int r = 0; r < cfg.height; ++r)
    for (int c = 0; c < cfg.width; ++c)
      px(r, c) = std::clamp((out.at(0, 0, r, c) + 1.0) / 2.0, 0.0, 1.0);
  auto canvas = imaging::SignatureImage::from_pixels(std::move(px));
  auto restored = imaging::restore_from_canvas(canvas, box, img.rows(), img.cols());
  if (img.polarity == imaging::Polarity::inverse) restored = imaging::invert(restored);
  imaging::SignatureImage result = img.with_pixels(restored.pixels);
  result.cleaned = true;
  return result;
}

void save_cleaner(const CleanerModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  nn::write_state(dir / "G.bin", model.G.state());
  nn::write_state(dir / "F.bin", model.F.state());
  nn::write_state(dir / "D_X.bin", model.D_X.state());
  nn::write_state(dir / "D_Y.bin", model.D_Y.state());
  json meta;
  meta["epoch"] = model.epoch;
  meta["seed"] = model.config.seed;
  json cfg = model.config.to_json();
  cfg.erase("checkpoint_dir");
  meta["config"] = cfg;
  meta["config_hash"] = model.config.hash();
  meta["diverged"] = model.diverged;
  if (model.initial) meta["initial"] = losses_json(*model.initial);
  json hist = json::array();
  for (const auto& e : model.history) hist.push_back(losses_json(e));
  meta["loss_history"] = std::move(hist);
  const fs::path tmp = dir / "meta.json.tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << meta.dump(2) << '\n';
  }
  fs::rename(tmp, dir / "meta.json");
}

CleanerModel load_cleaner(const fs::path& dir, const std::optional<CleanerTrainConfig>& expected) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw LoadError("no cleaner checkpoint at " + dir.string());
  CleanerModel m;
  try {
    json meta;
    is >> meta;
    m.config = CleanerTrainConfig::from_json(meta.at("config"));
    const std::string stored = meta.at("config_hash");
    if (m.config.hash() != stored) {
      throw LoadError("checkpoint hash mismatch: stored config does not match " + stored);
    }
    if (expected && expected->hash() != stored) {
      throw LoadError("checkpoint hash mismatch: checkpoint was trained with a different config");
    }
    m.epoch = meta.at("epoch");
    m.diverged = meta.value("diverged", false);
    if (meta.contains("initial")) m.initial = losses_from_json(meta["initial"]);
    for (const auto& e : meta.at("loss_history")) m.history.push_back(losses_from_json(e));
  } catch (const json::exception& e) {
    throw LoadError("bad cleaner metadata in " + dir.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw LoadError("bad cleaner config in " + dir.string() + ": " + e.what());
  }
  NetSet nets = build_nets(m.config);
  m.G = std::move(nets.G);
  m.F = std::move(nets.F);
  m.D_X = std::move(nets.D_X);
  m.D_Y = std::move(nets.D_Y);
  const std::pair<nn::Network*, const char*> files[] = {
      {&m.G, "G.bin"}, {&m.F, "F.bin"}, {&m.D_X, "D_X.bin"}, {&m.D_Y, "D_Y.bin"}};
  for (const auto& [net, file] : files) {
    try {
      net->load_state(nn::read_state(dir / file), true);
    } catch (const LoadError&) {
      throw;
    } catch (const Error& e) {
      throw LoadError(fmt::format("cannot load {}: {}", (dir / file).string(), e.what()));
    }
  }
  return m;
}

DiskCleaner::DiskCleaner(const CleanerModel& model, fs::path out_dir)
    : model_(model), out_dir_(std::move(out_dir)) {}

std::string DiskCleaner::cleaned_path(const std::string& path) {
  if (auto it = done_.find(path); it != done_.end()) return it->second;
  const fs::path src(path);
  const fs::path dst =
      out_dir_ / (src.stem().string() + "-" +
                 sha256_hex(model_.config.hash() + path).substr(0, 12) + ".png");
  if (!fs::exists(dst)) {
    const auto img = imaging::load_signature(src);
    imaging::save_signature(clean(model_, img), dst);
  }
  done_.emplace(path, dst.string());
  return dst.string();
}

}  // namespace sigverify::cleaner
