// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/augment.hpp"

#include <array>
#include <random>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "sigverify/error.hpp"
#include "sigverify/rng.hpp"

namespace sigverify::imaging {

namespace {

cv::Mat as_mat(const PixelMatrix& m) {
  return cv::Mat(static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                 CV_64F, const_cast<double*>(m.data()));
}

PixelMatrix to_matrix(const cv::Mat& m) {
  PixelMatrix out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const double* src = m.ptr<double>(r);
    std::copy(src, src + m.cols, out.data() + static_cast<std::ptrdiff_t>(r) * m.cols);
  }
  return out;
}

enum class Family { rotate, thicken, distort };

}  // namespace

void AugmentationConfig::validate() const {
  if (target_count_per_user < 1) {
    throw ValidationError("target_count_per_user must be >= 1");
  }
  if (!(rotation_max_deg >= 0.0)) {
    throw ValidationError("rotation range must be symmetric about 0");
  }
  if (thicken_kernel_px < 1) throw ValidationError("thicken kernel must be >= 1");
  if (distortion_grid < 1) throw ValidationError("distortion grid must be >= 1");
  if (!(distortion_magnitude >= 0.0)) {
    throw ValidationError("distortion magnitude must be >= 0");
  }
}

SignatureImage rotate(const SignatureImage& img, double degrees) {
  if (degrees == 0.0) return img;
  const cv::Point2f centre((img.cols() - 1) / 2.0f, (img.rows() - 1) / 2.0f);
  const cv::Mat rot = cv::getRotationMatrix2D(centre, degrees, 1.0);
  cv::Mat dst;
  cv::warpAffine(as_mat(img.pixels), dst, rot, cv::Size(img.cols(), img.rows()),
                 cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                 cv::Scalar(img.background()));
  return img.with_pixels(to_matrix(dst));
}

SignatureImage thicken(const SignatureImage& img, int kernel) {
  if (kernel < 1) throw ValidationError("thicken kernel must be >= 1");
  const cv::Mat element =
      cv::getStructuringElement(cv::MORPH_RECT, cv::Size(kernel, kernel));
  cv::Mat dst;
  // Dark ink grows under a minimum filter, light ink under a maximum filter.
  if (img.polarity == Polarity::original) {
    cv::erode(as_mat(img.pixels), dst, element, cv::Point(-1, -1), 1,
              cv::BORDER_CONSTANT, cv::Scalar(1.0));
  } else {
    cv::dilate(as_mat(img.pixels), dst, element, cv::Point(-1, -1), 1,
               cv::BORDER_CONSTANT, cv::Scalar(0.0));
  }
  return img.with_pixels(to_matrix(dst));
}

SignatureImage distort(const SignatureImage& img, int grid, double magnitude,
                       std::uint64_t seed) {
  if (grid < 1) throw ValidationError("distortion grid must be >= 1");
  if (magnitude == 0.0) return img;
  std::mt19937_64 rng(seed);
  cv::Mat coarse_x(grid + 1, grid + 1, CV_32F);
  cv::Mat coarse_y(grid + 1, grid + 1, CV_32F);
  for (int r = 0; r <= grid; ++r) {
    for (int c = 0; c <= grid; ++c) {
      coarse_x.at<float>(r, c) = static_cast<float>(uniform_real(rng, -magnitude, magnitude));
      coarse_y.at<float>(r, c) = static_cast<float>(uniform_real(rng, -magnitude, magnitude));
    }
  }
  cv::Mat dense_x, dense_y;
  const cv::Size size(img.cols(), img.rows());
  cv::resize(coarse_x, dense_x, size, 0, 0, cv::INTER_LINEAR);
  cv::resize(coarse_y, dense_y, size, 0, 0, cv::INTER_LINEAR);
  for (int r = 0; r < img.rows(); ++r) {
    float* mx = dense_x.ptr<float>(r);
    float* my = dense_y.ptr<float>(r);
    for (int c = 0; c < img.cols(); ++c) {
      mx[c] += static_cast<float>(c);
      my[c] += static_cast<float>(r);
    }
  }
  cv::Mat dst;
  cv::remap(as_mat(img.pixels), dst, dense_x, dense_y, cv::INTER_LINEAR,
            cv::BORDER_CONSTANT, cv::Scalar(img.background()));
  return img.with_pixels(to_matrix(dst));
}

std::vector<SignatureImage> augment_user(const std::vector<SignatureImage>& images,
                                         const AugmentationConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw ValidationError("augment_user: no input images");
  std::vector<SignatureImage> out = images;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t target = static_cast<std::size_t>(cfg.target_count_per_user);
  for (std::size_t i = 0; out.size() < target; ++i) {
    SignatureImage img = images[i % images.size()];
    std::array<Family, 3> families{Family::rotate, Family::thicken, Family::distort};
    shuffle(families, rng);
    const int len = 1 + static_cast<int>(uniform_index(rng, 3));
    for (int k = 0; k < len; ++k) {
      switch (families[k]) {
        case Family::rotate: {
          const double a = uniform_real(rng, -cfg.rotation_max_deg, cfg.rotation_max_deg);
          img = rotate(img, a);
          img.transforms.push_back(fmt::format("rotate({:.4f})", a));
          break;
        }
        case Family::thicken:
          img = thicken(img, cfg.thicken_kernel_px);
          img.transforms.push_back(fmt::format("thicken({})", cfg.thicken_kernel_px));
          break;
        case Family::distort: {
          const std::uint64_t s = rng();
          img = distort(img, cfg.distortion_grid, cfg.distortion_magnitude, s);
          img.transforms.push_back(fmt::format("distort({},{:.3f},{})",
                                               cfg.distortion_grid,
                                               cfg.distortion_magnitude, s));
          break;
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace sigverify::imaging
