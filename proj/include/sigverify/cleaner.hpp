// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Unpaired stamped -> clean translation with two generators, two patch
// discriminators, adversarial and L1 cycle-consistency losses.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigverify/dataset.hpp"
#include "sigverify/imaging.hpp"
#include "sigverify/nn/network.hpp"

namespace sigverify::cleaner {

/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kProbEps = 1e-7;

struct AdversarialLoss {
  double value = 0.0;
  nn::Tensor grad_real;  // dvalue / d d_real
  nn::Tensor grad_fake;  // dvalue / d d_fake
};

/// mean(log d_real) + mean(log(1 - d_fake)). Gradients are zero where the
/// clamp is active. Empty inputs raise ValidationError.
AdversarialLoss adversarial_loss(const nn::Tensor& d_real, const nn::Tensor& d_fake);

/// Generator-side objective on D(G(x)).
///   minimax:         mean(log(1 - d_fake))      (the literal min side)
///   non_saturating:  -mean(log d_fake)
///   least_squares:   mean((d_fake - 1)^2)
enum class GeneratorLoss { minimax, non_saturating, least_squares };
GeneratorLoss parse_generator_loss(std::string_view s);
std::string_view to_string(GeneratorLoss g);

struct LossAndGrad {
  double value = 0.0;
  nn::Tensor grad;
};
LossAndGrad generator_adv_loss(const nn::Tensor& d_fake, GeneratorLoss kind);
/// Discriminator loss to minimise: -adversarial_loss for the log forms,
/// mean((d_real - 1)^2) + mean(d_fake^2) for least squares.
AdversarialLoss discriminator_loss(const nn::Tensor& d_real, const nn::Tensor& d_fake,
                                   GeneratorLoss kind);

/// Per-pixel mean |recon - target| and its gradient w.r.t. recon. A shape
/// mismatch raises InternalError.
LossAndGrad l1_loss(const nn::Tensor& recon, const nn::Tensor& target);

/// mean |F(G(x)) - x| + mean |G(F(y)) - y|, each averaged over all pixels of
/// the batch.
double cycle_loss(const nn::Network& G, const nn::Network& F, const nn::Tensor& x,
                  const nn::Tensor& y);

double full_objective(double adv_g, double adv_f, double cyc, double lambda_cyc);

struct Architecture {
  int gen_width = 16;
  int gen_blocks = 3;
  int disc_width = 16;
  int disc_layers = 3;
};

/// x + tail(body(head(x))). The tail starts at zero so the generator is the
/// identity map before training.
nn::Network build_generator(const Architecture& a, std::mt19937_64& rng);
/// Strided conv patch discriminator with a sigmoid output grid.
nn::Network build_discriminator(const Architecture& a, std::mt19937_64& rng);

struct CleanerTrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double learning_rate = 2e-4;
  /// Linear decay to zero over the last `decay_epochs` epochs.
  int decay_epochs = 0;
  double beta1 = 0.5;
  double lambda_cyc = 10.0;
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  Architecture arch;
  /// Written after every epoch when set.
  std::optional<std::filesystem::path> checkpoint_dir;

  void validate() const;
  nlohmann::json to_json() const;
  static CleanerTrainConfig from_json(const nlohmann::json& j);
  /// SHA-256 of the canonical JSON form (checkpoint_dir excluded).
  std::string hash() const;
};

struct EpochLosses {
  int epoch = 0;
  double adv_g = 0.0;  // adversarial term for G and D_Y
  double adv_f = 0.0;  // adversarial term for F and D_X
  double cyc = 0.0;
  double objective = 0.0;
  double gen_loss = 0.0;
  double disc_loss = 0.0;
};

struct CleanerModel {
  nn::Network G, F, D_X, D_Y;
  CleanerTrainConfig config;
  int epoch = 0;
  /// Losses measured on the training data before the first update.
  std::optional<EpochLosses> initial;
  std::vector<EpochLosses> history;
  bool diverged = false;
};

/// Alternating generator / discriminator Adam updates. Batches follow a
/// seed-determined order. A non-finite loss stops training and returns the
/// state after the last completed epoch with diverged = true.
CleanerModel train_cleaner(const std::vector<imaging::SignatureImage>& stamped,
                           const std::vector<imaging::SignatureImage>& clean_set,
                           const CleanerTrainConfig& cfg);

/// Epoch losses of the current model on the given sets, no updates.
EpochLosses evaluate_losses(const CleanerModel& model,
                            const std::vector<imaging::SignatureImage>& stamped,
                            const std::vector<imaging::SignatureImage>& clean_set);

/// G(x) at the input's resolution, clamped to [0, 1], cleaned = true.
/// Inverse-polarity inputs are cleaned in original polarity.
imaging::SignatureImage clean(const CleanerModel& model, const imaging::SignatureImage& img);

/// Canvas tensor for the model, intensities mapped to [-1, 1].
nn::Tensor to_model_input(const imaging::SignatureImage& img, int height, int width,
                          imaging::ContentBox* box = nullptr);

void save_cleaner(const CleanerModel& model, const std::filesystem::path& dir);
/// Raises LoadError on missing files, or when the stored config hash does
/// not match the stored config (or `expected`, when given).
CleanerModel load_cleaner(const std::filesystem::path& dir,
                          const std::optional<CleanerTrainConfig>& expected = std::nullopt);

/// Writes cleaned copies under `out_dir` on first request.
class DiskCleaner : public dataset::ImageCleaner {
 public:
  DiskCleaner(const CleanerModel& model, std::filesystem::path out_dir);
  std::string cleaned_path(const std::string& path) override;

 private:
  const CleanerModel& model_;
  std::filesystem::path out_dir_;
  std::map<std::string, std::string> done_;
};

}  // namespace sigverify::cleaner
