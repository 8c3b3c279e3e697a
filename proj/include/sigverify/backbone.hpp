// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Writer-classification backbones, fine-tuning and feature extraction.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigverify/dataset.hpp"
#include "sigverify/features.hpp"
#include "sigverify/imaging.hpp"
#include "sigverify/nn/network.hpp"

namespace sigverify::backbone {

enum class Arch { tiny, vgg_like, resnet_like };
enum class InputVariant { raw, cleaned, inverse };

Arch parse_arch(std::string_view s);
std::string_view to_string(Arch a);
InputVariant parse_variant(std::string_view s);
std::string_view to_string(InputVariant v);

/// conv3x3 -> relu -> maxpool2 per stage, then the "embedding" linear layer
/// (the feature layer), relu and the classifier head.
struct TinyConfig {
  std::vector<int> channels{8, 16, 32};
  int embedding = 64;
};

struct BackboneSpec {
  Arch arch = Arch::tiny;
  int n_classes = 2;
  imaging::InputSpec input;
  InputVariant variant = InputVariant::raw;
  TinyConfig tiny;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static BackboneSpec from_json(const nlohmann::json& j);
};

struct TrainRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct BackboneModel {
  nn::Network net;
  BackboneSpec spec;
  std::string feature_layer;
  /// Activation following the last convolution, used for response maps.
  std::string response_layer;
  int response_filters = 0;
  std::size_t feature_dim = 0;
  std::string model_id;
  /// Training-set user ids in class-index order.
  std::vector<std::string> classes;
  std::vector<TrainRow> history;
  int best_epoch = 0;
};

/// vgg_like: VGG-16 layout, feature layer fc1 (4096 wide).
/// resnet_like: ResNet-50 bottleneck layout, feature layer is the last
///   block's 3x3 convolution (512 x 7 x 7 = 25088 at 224 x 224).
/// tiny: see TinyConfig; feature dim = embedding width.
/// Weights come from `pretrained` when given (non-matching tensors are
/// skipped, e.g. a different classifier head), else seeded He init.
BackboneModel build_backbone(const BackboneSpec& spec,
                             const std::optional<std::filesystem::path>& pretrained = std::nullopt);

/// Tracks validation losses; stops after `patience` consecutive epochs
/// without improvement. The best epoch is the first minimum.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Records the next epoch's loss; returns true when training should stop.
  bool update(double val_loss);
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int epochs_seen() const { return seen_; }

 private:
  int patience_;
  int seen_ = 0;
  int best_epoch_ = -1;
  int bad_ = 0;
  double best_loss_ = 0.0;
};

struct TrainConfig {
  int batch_size = 32;
  double lr_init = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int patience = 3;
  int max_epochs = 30;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Default batch size per architecture (64 vgg_like, 32 resnet_like and tiny).
int default_batch_size(Arch a);

/// Cross-entropy fine-tuning with SGD + momentum on writer labels. Epoch 0 is
/// the evaluation before any update. Returns with the best-validation weights
/// loaded. Any training or validation user listed in `test_users` raises
/// ValidationError (writer-independence breach).
void finetune(BackboneModel& model, const std::vector<imaging::SignatureImage>& train,
              const std::vector<imaging::SignatureImage>& val, const TrainConfig& cfg,
              const std::vector<std::string>& test_users);

/// Image -> model input tensor, applying the model's input variant.
nn::Tensor preprocess(const BackboneModel& model, const imaging::SignatureImage& img);

/// Output of the feature layer for a (1, C, H, W) input, flattened.
/// An all-zero vector raises DegenerateEmbedding.
std::vector<double> extract_features(const BackboneModel& model, const nn::Tensor& input);

/// Loads each path, extracts its features and collects them in a cache.
FeatureCache extract_to_cache(const BackboneModel& model,
                              const std::vector<std::string>& paths);

struct ResponseMap {
  int filter = 0;
  double energy = 0.0;
  /// Activation map resized to the input size.
  imaging::PixelMatrix map;
};

/// The k filters of the last convolution stage with the largest activation
/// energy (sum of squares), highest first, ties by lower index.
std::vector<ResponseMap> response_maps(const BackboneModel& model, const nn::Tensor& input,
                                       int k);

void save_backbone(const BackboneModel& model, const std::filesystem::path& dir);
BackboneModel load_backbone(const std::filesystem::path& dir);

}  // namespace sigverify::backbone
