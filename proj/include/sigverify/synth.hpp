// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic signature and stamp generators. Real paired stamped/clean data
// cannot exist, so the cleaner and end-to-end experiments run on these.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sigverify/dataset.hpp"
#include "sigverify/imaging.hpp"

namespace sigverify::synth {

/// Cubic Bezier stroke, control points in unit coordinates (x right, y down).
struct Stroke {
  std::array<double, 4> x{};
  std::array<double, 4> y{};
};

/// A writer's glyph: the strokes every one of their signatures follows.
struct WriterStyle {
  std::vector<Stroke> strokes;
  double thickness = 1.5;  // in pixels at a 64-pixel canvas height
  double slant = 0.0;      // shear factor
};

struct RenderConfig {
  int rows = 64;
  int cols = 64;
  /// Standard deviation of per-sample control point noise (unit coords).
  double jitter = 0.02;
  /// Per-sample rotation range in degrees and scale range around 1.
  double rotation_deg = 4.0;
  double scale = 0.06;
  double shift = 0.03;
};

WriterStyle random_writer(std::mt19937_64& rng, int n_strokes = 4);

/// Renders one signature of `style`, with per-sample jitter drawn from rng.
imaging::SignatureImage render_signature(const WriterStyle& style, const RenderConfig& cfg,
                                         std::mt19937_64& rng);

struct StampConfig {
  /// Background under the stamp is multiplied by a factor drawn from this range.
  double factor_min = 0.5;
  double factor_max = 0.65;
  double ring_width = 0.05;  // fraction of the canvas height
  bool text = true;
};

/// Overlays a ring-and-text stamp as a multiplicative gray mask. Ink pixels
/// (intensity 0) stay 0, paper under the stamp darkens.
imaging::SignatureImage overlay_stamp(const imaging::SignatureImage& clean,
                                      const StampConfig& cfg, std::mt19937_64& rng);

struct CorpusConfig {
  int n_users = 20;
  int references = 3;
  int unstamped = 3;
  int stamped = 3;
  std::string user_prefix = "u";
  RenderConfig render;
  StampConfig stamp;
  std::uint64_t seed = 0;
  /// When set, the clean rendering under each stamped target is saved here
  /// with the same relative path.
  std::optional<std::filesystem::path> truth_dir;
};

/// Writes a user_dirs corpus, <root>/<user>/<source>/<n>.png, one synthetic
/// writer per user, and returns its manifest.
dataset::DatasetManifest write_corpus(const std::filesystem::path& root, const CorpusConfig& cfg);

}  // namespace sigverify::synth
