// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "sigverify/error.hpp"
#include "sigverify/rng.hpp"

namespace sigverify::backbone {

namespace fs = std::filesystem;
using json = nlohmann::json;
using nn::Tensor;

Arch parse_arch(std::string_view s) {
  if (s == "tiny") return Arch::tiny;
  if (s == "vgg_like") return Arch::vgg_like;
  if (s == "resnet_like") return Arch::resnet_like;
  throw ValidationError(fmt::format("unknown backbone architecture '{}'", s));
}

std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::tiny: return "tiny";
    case Arch::vgg_like: return "vgg_like";
    case Arch::resnet_like: return "resnet_like";
  }
  return "?";
}

InputVariant parse_variant(std::string_view s) {
  if (s == "raw") return InputVariant::raw;
  if (s == "cleaned") return InputVariant::cleaned;
  if (s == "inverse") return InputVariant::inverse;
  throw ValidationError(fmt::format("unknown input variant '{}'", s));
}

std::string_view to_string(InputVariant v) {
  switch (v) {
    case InputVariant::raw: return "raw";
    case InputVariant::cleaned: return "cleaned";
    case InputVariant::inverse: return "inverse";
  }
  return "?";
}

// ------------------------------------------------------------------ spec json

json BackboneSpec::to_json() const {
  return json{{"arch", to_string(arch)},
              {"n_classes", n_classes},
              {"variant", to_string(variant)},
              {"seed", seed},
              {"input",
               {{"height", input.height},
                {"width", input.width},
                {"channels", input.channels},
                {"mean", input.mean},
                {"stddev", input.stddev}}},
              {"tiny", {{"channels", tiny.channels}, {"embedding", tiny.embedding}}}};
}

BackboneSpec BackboneSpec::from_json(const json& j) {
  static const std::set<std::string> kKeys{"arch", "n_classes", "variant", "seed", "input",
                                           "tiny"};
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw ValidationError("unknown backbone key '" + k + "'");
  }
  BackboneSpec s;
  try {
    if (j.contains("arch")) s.arch = parse_arch(j["arch"].get<std::string>());
    if (j.contains("variant")) s.variant = parse_variant(j["variant"].get<std::string>());
    s.n_classes = j.value("n_classes", s.n_classes);
    s.seed = j.value("seed", s.seed);
    if (s.arch != Arch::tiny) {
      // Stock layouts take 3-channel 224 x 224 input unless told otherwise.
      s.input.channels = 3;
    }
    if (j.contains("input")) {
      const auto& in = j["input"];
      s.input.height = in.value("height", s.input.height);
      s.input.width = in.value("width", s.input.width);
      s.input.channels = in.value("channels", s.input.channels);
      s.input.mean = in.value("mean", s.input.mean);
      s.input.stddev = in.value("stddev", s.input.stddev);
    } else if (s.arch == Arch::tiny) {
      s.input.height = 64;
      s.input.width = 64;
    }
    if (j.contains("tiny")) {
      s.tiny.channels = j["tiny"].value("channels", s.tiny.channels);
      s.tiny.embedding = j["tiny"].value("embedding", s.tiny.embedding);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad backbone spec: ") + e.what());
  }
  s.input.validate();
  return s;
}

// --------------------------------------------------------------- architectures

namespace {

struct Built {
  std::unique_ptr<nn::Sequential> root;
  std::string feature_layer;
  std::string response_layer;
  int response_filters = 0;
};

Built build_tiny(const BackboneSpec& spec) {
  const auto& cfg = spec.tiny;
  if (cfg.channels.empty() || cfg.embedding < 1) {
    throw ValidationError("tiny backbone needs at least one stage and a positive embedding");
  }
  auto root = std::make_unique<nn::Sequential>("tiny");
  int c = spec.input.channels, h = spec.input.height, w = spec.input.width;
  std::string last_act;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const std::string p = fmt::format("stage{}", i);
    root->emplace<nn::Conv2d>(p + ".conv", c, cfg.channels[i], 3, 1, 1);
    root->emplace<nn::ReLU>(p + ".relu");
    root->emplace<nn::MaxPool2d>(p + ".pool", 2, 2);
    last_act = p + ".relu";
    c = cfg.channels[i];
    h /= 2;
    w /= 2;
    if (h < 1 || w < 1) throw ValidationError("input too small for the tiny backbone");
  }
  root->emplace<nn::Linear>("embedding", c * h * w, cfg.embedding);
  root->emplace<nn::ReLU>("embedding.act");
  root->emplace<nn::Linear>("head", cfg.embedding, spec.n_classes);
  return {std::move(root), "embedding", last_act, cfg.channels.back()};
}

Built build_vgg(const BackboneSpec& spec) {
  static const int kStages[5][2] = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  auto root = std::make_unique<nn::Sequential>("vgg");
  int c = spec.input.channels, h = spec.input.height, w = spec.input.width;
  std::string last_act;
  for (int b = 0; b < 5; ++b) {
    for (int i = 0; i < kStages[b][1]; ++i) {
      const std::string p = fmt::format("block{}.conv{}", b + 1, i + 1);
      root->emplace<nn::Conv2d>(p, c, kStages[b][0], 3, 1, 1);
      root->emplace<nn::ReLU>(p + ".relu");
      last_act = p + ".relu";
      c = kStages[b][0];
    }
    root->emplace<nn::MaxPool2d>(fmt::format("block{}.pool", b + 1), 2, 2);
    h /= 2;
    w /= 2;
    if (h < 1 || w < 1) throw ValidationError("input too small for the vgg_like backbone");
  }
  root->emplace<nn::Linear>("fc1", c * h * w, 4096);
  root->emplace<nn::ReLU>("fc1.relu");
  root->emplace<nn::Linear>("fc2", 4096, 4096);
  root->emplace<nn::ReLU>("fc2.relu");
  root->emplace<nn::Linear>("head", 4096, spec.n_classes);
  return {std::move(root), "fc1", last_act, 512};
}

std::unique_ptr<nn::Residual> bottleneck(const std::string& p, int in, int width, int stride) {
  const int out = 4 * width;
  auto body = std::make_unique<nn::Sequential>(p + ".body");
  body->emplace<nn::Conv2d>(p + ".conv1", in, width, 1, 1, 0, false);
  body->emplace<nn::BatchNorm2d>(p + ".bn1", width);
  body->emplace<nn::ReLU>(p + ".relu1");
  body->emplace<nn::Conv2d>(p + ".conv2", width, width, 3, stride, 1, false);
  body->emplace<nn::BatchNorm2d>(p + ".bn2", width);
  body->emplace<nn::ReLU>(p + ".relu2");
  body->emplace<nn::Conv2d>(p + ".conv3", width, out, 1, 1, 0, false);
  body->emplace<nn::BatchNorm2d>(p + ".bn3", out);
  std::unique_ptr<nn::Sequential> shortcut;
  if (stride != 1 || in != out) {
    shortcut = std::make_unique<nn::Sequential>(p + ".shortcut");
    shortcut->emplace<nn::Conv2d>(p + ".down", in, out, 1, stride, 0, false);
    shortcut->emplace<nn::BatchNorm2d>(p + ".down_bn", out);
  }
  return std::make_unique<nn::Residual>(p, std::move(body), std::move(shortcut), true);
}

Built build_resnet(const BackboneSpec& spec) {
  static const int kBlocks[4] = {3, 4, 6, 3};
  static const int kWidths[4] = {64, 128, 256, 512};
  auto root = std::make_unique<nn::Sequential>("resnet");
  root->emplace<nn::Conv2d>("stem.conv", spec.input.channels, 64, 7, 2, 3, false);
  root->emplace<nn::BatchNorm2d>("stem.bn", 64);
  root->emplace<nn::ReLU>("stem.relu");
  root->emplace<nn::MaxPool2d>("stem.pool", 3, 2, 1);
  int in = 64;
  std::string last;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < kBlocks[s]; ++b) {
      last = fmt::format("layer{}.{}", s + 1, b);
      root->add(bottleneck(last, in, kWidths[s], (b == 0 && s > 0) ? 2 : 1));
      in = 4 * kWidths[s];
    }
  }
  root->emplace<nn::GlobalAvgPool>("avgpool");
  root->emplace<nn::Linear>("head", in, spec.n_classes);
  return {std::move(root), last + ".conv2", last, in};
}

std::size_t probe_feature_dim(const nn::Network& net, const BackboneSpec& spec,
                              const std::string& layer) {
  // Shape inference by running the truncated pass on a blank input.
  nn::Taps taps;
  taps.stop_after(layer);
  net.infer(Tensor(1, spec.input.channels, spec.input.height, spec.input.width), &taps);
  return taps.get(layer).sample_size();
}

std::size_t analytic_feature_dim(const BackboneSpec& spec) {
  switch (spec.arch) {
    case Arch::tiny: return static_cast<std::size_t>(spec.tiny.embedding);
    case Arch::vgg_like: return 4096;
    case Arch::resnet_like: {
      // stride 2 conv, stride 2 pool, then three stride-2 stages.
      auto down = [](int x) {
        x = (x + 2 * 3 - 7) / 2 + 1;
        x = (x + 2 - 3) / 2 + 1;
        for (int i = 0; i < 3; ++i) x = (x + 2 - 3) / 2 + 1;
        return x;
      };
      return 512u * static_cast<std::size_t>(down(spec.input.height)) *
             static_cast<std::size_t>(down(spec.input.width));
    }
  }
  return 0;
}

}  // namespace

BackboneModel build_backbone(const BackboneSpec& spec,
                             const std::optional<fs::path>& pretrained) {
  spec.input.validate();
  if (spec.n_classes < 2) throw ValidationError("a backbone needs at least two classes");
  Built b;
  switch (spec.arch) {
    case Arch::tiny: b = build_tiny(spec); break;
    case Arch::vgg_like: b = build_vgg(spec); break;
    case Arch::resnet_like: b = build_resnet(spec); break;
  }
  BackboneModel m;
  m.net = nn::Network(std::move(b.root));
  m.spec = spec;
  m.feature_layer = b.feature_layer;
  m.response_layer = b.response_layer;
  m.response_filters = b.response_filters;
  std::mt19937_64 rng(spec.seed);
  nn::kaiming_init(m.net.root(), rng);
  if (pretrained) {
    m.net.load_state(nn::read_state(*pretrained), /*strict=*/false);
  }
  m.feature_dim = analytic_feature_dim(spec);
  if (spec.arch == Arch::tiny) {
    const std::size_t probed = probe_feature_dim(m.net, spec, m.feature_layer);
    if (probed != m.feature_dim) throw InternalError("tiny feature dimension mismatch");
  }
  m.model_id = fmt::format("{}-{}-s{}", to_string(spec.arch), to_string(spec.variant), spec.seed);
  return m;
}

// ------------------------------------------------------------- early stopping

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw ValidationError("patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  const int epoch = seen_++;
  if (best_epoch_ < 0 || val_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    bad_ = 0;
    return false;
  }
  return ++bad_ >= patience_;
}

// ------------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (max_epochs < 0) throw ValidationError("max_epochs must be >= 0");
  if (!(lr_init > 0.0)) throw ValidationError("lr_init must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
}

json TrainConfig::to_json() const {
  return json{{"batch_size", batch_size}, {"lr_init", lr_init},
              {"momentum", momentum},     {"weight_decay", weight_decay},
              {"patience", patience},     {"max_epochs", max_epochs},
              {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys{"batch_size", "lr_init",    "momentum", "weight_decay",
                                           "patience",   "max_epochs", "seed"};
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw ValidationError("unknown training key '" + k + "'");
  }
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

int default_batch_size(Arch a) { return a == Arch::vgg_like ? 64 : 32; }

nn::Tensor preprocess(const BackboneModel& model, const imaging::SignatureImage& img) {
  if (model.spec.variant == InputVariant::inverse && img.polarity == imaging::Polarity::original) {
    return imaging::resize_normalize(imaging::invert(img), model.spec.input);
  }
  return imaging::resize_normalize(img, model.spec.input);
}

namespace {

struct Labeled {
  std::vector<Tensor> x;
  std::vector<int> y;
};

Labeled prepare(const BackboneModel& model, const std::vector<imaging::SignatureImage>& imgs,
                const std::map<std::string, int>& classes, const char* what) {
  Labeled out;
  out.x.reserve(imgs.size());
  for (const auto& img : imgs) {
    auto it = classes.find(img.user_id);
    if (it == classes.end()) {
      throw ValidationError(fmt::format("{} image of user '{}' has no training class", what,
                                        img.user_id));
    }
    out.x.push_back(preprocess(model, img));
    out.y.push_back(it->second);
  }
  return out;
}

struct Eval {
  double loss = 0.0;
  double accuracy = 0.0;
};

Eval evaluate(const nn::Network& net, const Labeled& data, int batch) {
  Eval e;
  const std::size_t n = data.x.size();
  for (std::size_t s = 0; s < n; s += batch) {
    const std::size_t len = std::min<std::size_t>(batch, n - s);
    Tensor logits = net.infer(Tensor::stack({data.x.data() + s, len}));
    std::span<const int> labels(data.y.data() + s, len);
    e.loss += nn::softmax_cross_entropy(logits, labels).value * static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) {
      auto row = logits.sample(static_cast<int>(i));
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      if (best == labels[i]) e.accuracy += 1.0;
    }
  }
  e.loss /= static_cast<double>(n);
  e.accuracy /= static_cast<double>(n);
  return e;
}

}  // namespace

void finetune(BackboneModel& model, const std::vector<imaging::SignatureImage>& train,
              const std::vector<imaging::SignatureImage>& val, const TrainConfig& cfg,
              const std::vector<std::string>& test_users) {
  cfg.validate();
  if (train.empty() || val.empty()) {
    throw ValidationError("fine-tuning needs non-empty training and validation sets");
  }
  const std::set<std::string> held_out(test_users.begin(), test_users.end());
  for (const auto* set : {&train, &val}) {
    for (const auto& img : *set) {
      if (held_out.count(img.user_id)) {
        throw ValidationError("writer-independence breach: user '" + img.user_id +
                              "' is a verification test user");
      }
    }
  }
  std::set<std::string> users;
  for (const auto& img : train) users.insert(img.user_id);
  if (static_cast<int>(users.size()) != model.spec.n_classes) {
    throw ValidationError(fmt::format("training set has {} users but the head has {} classes",
                                      users.size(), model.spec.n_classes));
  }
  std::map<std::string, int> classes;
  model.classes.assign(users.begin(), users.end());
  for (std::size_t i = 0; i < model.classes.size(); ++i) {
    classes[model.classes[i]] = static_cast<int>(i);
  }
  const Labeled tr = prepare(model, train, classes, "training");
  const Labeled va = prepare(model, val, classes, "validation");

  nn::Sgd opt(cfg.lr_init, cfg.momentum, cfg.weight_decay);
  EarlyStopping stopper(cfg.patience);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(tr.x.size());
  std::iota(order.begin(), order.end(), 0);
  const int eval_batch = std::max(cfg.batch_size, 32);

  model.history.clear();
  nn::Network::State best_state = model.net.state();
  for (int epoch = 0; epoch <= cfg.max_epochs; ++epoch) {
    if (epoch > 0) {
      shuffle(order, rng);
      for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
        const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - s);
        std::vector<Tensor> xs;
        std::vector<int> ys;
        for (std::size_t i = s; i < s + len; ++i) {
          xs.push_back(tr.x[order[i]]);
          ys.push_back(tr.y[order[i]]);
        }
        model.net.zero_grad();
        nn::Cache cache;
        Tensor logits = model.net.forward(Tensor::stack(xs), cache);
        auto lg = nn::softmax_cross_entropy(logits, ys);
        if (!std::isfinite(lg.value)) {
          throw InternalError(fmt::format("non-finite training loss at epoch {}", epoch));
        }
        model.net.backward(lg.grad, cache);
        opt.step(model.net.params());
      }
    }
    const Eval te = evaluate(model.net, tr, eval_batch);
    const Eval ve = evaluate(model.net, va, eval_batch);
    model.history.push_back({epoch, te.loss, ve.loss, ve.accuracy});
    const bool stop = stopper.update(ve.loss);
    if (stopper.best_epoch() == epoch) best_state = model.net.state();
    if (stop) break;
  }
  model.net.load_state(best_state, /*strict=*/true);
  model.best_epoch = stopper.best_epoch();
}

// ---------------------------------------------------------------- extraction

std::vector<double> extract_features(const BackboneModel& model, const Tensor& input) {
  const auto& in = model.spec.input;
  if (input.n() != 1 || input.c() != in.channels || input.h() != in.height ||
      input.w() != in.width) {
    throw ValidationError(fmt::format("feature input must be (1, {}, {}, {}), got {}",
                                      in.channels, in.height, in.width, input.shape_string()));
  }
  nn::Taps taps;
  taps.stop_after(model.feature_layer);
  model.net.infer(input, &taps);
  const auto v = taps.get(model.feature_layer).values();
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
    throw DegenerateEmbedding("all-zero output at layer " + model.feature_layer);
  }
  return {v.begin(), v.end()};
}

FeatureCache extract_to_cache(const BackboneModel& model, const std::vector<std::string>& paths) {
  FeatureCache cache(model.model_id, model.feature_dim);
  for (const auto& p : paths) {
    const auto img = imaging::load_signature(p);
    try {
      cache.put(p, extract_features(model, preprocess(model, img)));
    } catch (const DegenerateEmbedding& e) {
      throw DegenerateEmbedding(p + ": " + e.what());
    }
  }
  return cache;
}

std::vector<ResponseMap> response_maps(const BackboneModel& model, const Tensor& input, int k) {
  if (k < 1 || k > model.response_filters) {
    throw ValidationError(fmt::format("k must be in [1, {}], got {}", model.response_filters, k));
  }
  nn::Taps taps;
  taps.stop_after(model.response_layer);
  model.net.infer(input, &taps);
  const Tensor& act = taps.get(model.response_layer);
  const std::size_t plane = act.plane_size();
  std::vector<std::pair<double, int>> energy(act.c());
  for (int f = 0; f < act.c(); ++f) {
    const double* p = act.data() + f * plane;
    double e = 0.0;
    for (std::size_t i = 0; i < plane; ++i) e += p[i] * p[i];
    energy[f] = {e, f};
  }
  std::partial_sort(energy.begin(), energy.begin() + k, energy.end(), [](auto& a, auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<ResponseMap> out;
  for (int i = 0; i < k; ++i) {
    const int f = energy[i].second;
    cv::Mat src(act.h(), act.w(), CV_64F, const_cast<double*>(act.data() + f * plane));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(input.w(), input.h()), 0, 0, cv::INTER_LINEAR);
    imaging::PixelMatrix map(input.h(), input.w());
    for (int r = 0; r < input.h(); ++r)
      for (int c = 0; c < input.w(); ++c) map(r, c) = dst.at<double>(r, c);
    out.push_back({f, energy[i].first, std::move(map)});
  }
  return out;
}

// -------------------------------------------------------------- checkpoints

void save_backbone(const BackboneModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  nn::write_state(dir / "weights.bin", model.net.state());
  json hist = json::array();
  for (const auto& r : model.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss},
                    {"val_accuracy", r.val_accuracy}});
  }
  json meta{{"arch", to_string(model.spec.arch)},
            {"feature_layer", model.feature_layer},
            {"input_variant", to_string(model.spec.variant)},
            {"n_classes", model.spec.n_classes},
            {"seed", model.spec.seed},
            {"feature_dim", model.feature_dim},
            {"model_id", model.model_id},
            {"spec", model.spec.to_json()},
            {"classes", model.classes},
            {"best_epoch", model.best_epoch},
            {"history", std::move(hist)}};
  const fs::path tmp = dir / "backbone.json.tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << meta.dump(2) << '\n';
  }
  fs::rename(tmp, dir / "backbone.json");
}

BackboneModel load_backbone(const fs::path& dir) {
  std::ifstream is(dir / "backbone.json");
  if (!is) throw LoadError("no backbone checkpoint at " + dir.string());
  json meta;
  BackboneModel m;
  try {
    is >> meta;
    m = build_backbone(BackboneSpec::from_json(meta.at("spec")));
    if (meta.at("feature_layer").get<std::string>() != m.feature_layer) {
      throw LoadError("checkpoint feature layer does not match the architecture");
    }
    m.model_id = meta.value("model_id", m.model_id);
    m.classes = meta.value("classes", std::vector<std::string>{});
    m.best_epoch = meta.value("best_epoch", 0);
    for (const auto& r : meta.value("history", json::array())) {
      m.history.push_back({r.at("epoch"), r.at("train_loss"), r.at("val_loss"),
                           r.at("val_accuracy")});
    }
  } catch (const json::exception& e) {
    throw LoadError("bad backbone metadata in " + dir.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw LoadError("bad backbone metadata in " + dir.string() + ": " + e.what());
  }
  m.net.load_state(nn::read_state(dir / "weights.bin"), /*strict=*/true);
  return m;
}

}  // namespace sigverify::backbone
