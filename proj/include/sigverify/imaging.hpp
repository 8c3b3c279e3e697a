// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sigverify/nn/tensor.hpp"

namespace sigverify::imaging {

using PixelMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// original: dark ink on white. inverse: light ink on black.
enum class Polarity { original, inverse };
enum class Source { reference, target_unstamped, target_stamped, unknown };
enum class PolarityHint { original, inverse, detect };

std::string_view to_string(Polarity p);
std::string_view to_string(Source s);
Polarity parse_polarity(std::string_view s);
Source parse_source(std::string_view s);

/// Intensities are stored on a 2^-24 grid inside [0, 1]. On that grid 1 - p
/// is exact, so inversion is a bit-level involution.
inline constexpr double kPixelQuantum = 1.0 / 16777216.0;

/// Clamps to [0, 1] and snaps to the pixel grid.
double quantize_pixel(double v);

struct SignatureImage {
  PixelMatrix pixels;
  Polarity polarity = Polarity::original;
  std::string user_id;
  Source source = Source::unknown;
  bool cleaned = false;
  /// Augmentation steps applied, in order, e.g. "rotate(3.25)".
  std::vector<std::string> transforms;

  int rows() const { return static_cast<int>(pixels.rows()); }
  int cols() const { return static_cast<int>(pixels.cols()); }
  /// Background intensity implied by the polarity flag.
  double background() const { return polarity == Polarity::original ? 1.0 : 0.0; }

  /// Builds an image from arbitrary doubles (clamped and quantized).
  static SignatureImage from_pixels(PixelMatrix pixels,
                                    Polarity polarity = Polarity::original);
  /// Copy of the metadata with new pixel content (clamped and quantized).
  SignatureImage with_pixels(PixelMatrix new_pixels) const;

  /// Throws ValidationError on zero area or out-of-range / off-grid pixels.
  void validate() const;
};

/// Reads a PNG/TIFF/JPEG/BMP raster. Colour input is reduced with BT.601
/// luminance weights, alpha is composited over white. If "<path>.json"
/// exists it may set user_id, source, polarity and cleaned.
SignatureImage load_signature(const std::filesystem::path& path,
                              PolarityHint hint = PolarityHint::original);

/// Writes an 8-bit (or 16-bit with `deep`) grayscale raster.
void save_signature(const SignatureImage& img,
                    const std::filesystem::path& path, bool deep = false);

/// BT.601 luminance of an RGB triple in [0, 1].
double luminance(double r, double g, double b);

SignatureImage invert(const SignatureImage& img);

struct BinarizeMethod {
  enum class Kind { otsu, fixed } kind = Kind::otsu;
  double threshold = 0.5;

  static BinarizeMethod otsu() { return {Kind::otsu, 0.5}; }
  static BinarizeMethod fixed(double t) { return {Kind::fixed, t}; }
};

struct BinarizeResult {
  SignatureImage image;
  /// Threshold on the ink-strength axis (see binarize()).
  double threshold = 0.5;
  /// Otsu found no contrast and the fixed(0.5) fallback was used.
  bool fallback = false;
};

/// Ink strength is darkness (1 - p) for original polarity and brightness (p)
/// for inverse polarity. A pixel is ink iff its strength >= threshold; ink
/// keeps the polarity's ink value (0 original, 1 inverse), everything else
/// becomes background. A constant image under Otsu has no ink.
BinarizeResult binarize(const SignatureImage& img, BinarizeMethod method);

/// Otsu threshold over 256 strength bins. nullopt when fewer than two bins
/// are populated.
std::optional<double> otsu_threshold(const SignatureImage& img);

/// Number of pixels whose ink strength is >= threshold.
std::size_t ink_count(const SignatureImage& img, double threshold = 0.5);

/// Region of a canvas holding the resized content.
struct ContentBox {
  int top = 0, left = 0, height = 0, width = 0;
};

/// Aspect-preserving resize into a height x width canvas, centred, padded
/// with the polarity's background.
SignatureImage fit_to_canvas(const SignatureImage& img, int height, int width,
                             ContentBox* box = nullptr);

/// Crops `box` out of `canvas` and resizes it to rows x cols.
SignatureImage restore_from_canvas(const SignatureImage& canvas,
                                   const ContentBox& box, int rows, int cols);

struct InputSpec {
  int height = 224;
  int width = 224;
  int channels = 1;
  /// Per-channel standardization constants; one entry broadcasts.
  std::vector<double> mean{0.5};
  std::vector<double> stddev{0.5};

  void validate() const;
};

/// Fits the image to spec, replicates channels and standardizes.
/// Returns a (1, channels, height, width) tensor.
nn::Tensor resize_normalize(const SignatureImage& img, const InputSpec& spec);

/// Tensor holding the raw [0,1] pixels, shape (1, 1, rows, cols).
nn::Tensor to_tensor(const SignatureImage& img);
PixelMatrix from_tensor(const nn::Tensor& t, int sample = 0);

/// Peak signal-to-noise ratio for unit peak; +inf for identical images.
double psnr(const SignatureImage& a, const SignatureImage& b);
double mean_abs_diff(const SignatureImage& a, const SignatureImage& b);

}  // namespace sigverify::imaging
