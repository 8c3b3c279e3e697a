// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sigverify/imaging.hpp"

namespace sigverify::imaging {

struct AugmentationConfig {
  /// Rotation angles are drawn from [-rotation_max_deg, rotation_max_deg].
  double rotation_max_deg = 10.0;
  int thicken_kernel_px = 3;
  int distortion_grid = 4;
  double distortion_magnitude = 8.0;
  int target_count_per_user = 80;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rotation about the image centre, background-filled. 0 degrees is an
/// exact copy.
SignatureImage rotate(const SignatureImage& img, double degrees);

/// One dilation pass of the ink with a kernel x kernel square.
SignatureImage thicken(const SignatureImage& img, int kernel);

/// Coarse-grid random displacement: a (grid+1)^2 lattice of offsets drawn
/// uniformly from [-magnitude, magnitude] pixels, bilinearly upsampled to a
/// dense field. magnitude 0 is an exact copy.
SignatureImage distort(const SignatureImage& img, int grid, double magnitude,
                       std::uint64_t seed);

/// Returns the originals followed by augmented copies until at least
/// cfg.target_count_per_user images exist. Each augmented copy applies a
/// chain of one to three distinct transform families in random order and
/// records it in `transforms`. Deterministic for a fixed seed.
std::vector<SignatureImage> augment_user(const std::vector<SignatureImage>& images,
                                         const AugmentationConfig& cfg);

}  // namespace sigverify::imaging
