// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "sigverify/augment.hpp"
#include "sigverify/error.hpp"
#include "sigverify/imaging.hpp"

using namespace sigverify;
using namespace sigverify::imaging;

namespace {

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "sigverify_imaging_test";
  std::filesystem::create_directories(d);
  return d;
}

SignatureImage random_image(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PixelMatrix px(rows, cols);
  for (Eigen::Index i = 0; i < px.size(); ++i) px.data()[i] = u(rng);
  return SignatureImage::from_pixels(std::move(px));
}

// A few dark strokes on white.
SignatureImage stroke_image() {
  PixelMatrix px = PixelMatrix::Constant(20, 30, 1.0);
  for (int c = 5; c < 25; ++c) px(10, c) = 0.0;
  for (int r = 4; r < 16; ++r) px(r, 12) = 0.0;
  return SignatureImage::from_pixels(std::move(px));
}

// Brute-force Otsu: for every split of the 256 strength bins, compute the
// between-class variance directly from the pixel list.
double brute_force_otsu(const SignatureImage& img) {
  std::vector<int> bins;
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
    const double s = img.polarity == Polarity::original ? 1.0 - img.pixels.data()[i]
                                                        : img.pixels.data()[i];
    bins.push_back(std::clamp(static_cast<int>(std::floor(s * 256.0)), 0, 255));
  }
  double best = -1.0;
  int best_t = -1;
  for (int t = 1; t < 256; ++t) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b : bins) {
      if (b < t) { n0 += 1; s0 += b; } else { n1 += 1; s1 += b; }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double m0 = s0 / n0, m1 = s1 / n1;
    const double between = n0 * n1 * (m0 - m1) * (m0 - m1);
    if (between > best + 1e-9 * std::abs(best)) {
      best = between;
      best_t = t;
    }
  }
  return best_t / 256.0;
}

// Brute-force 3x3 dilation of the ink mask of a binarized original-polarity image.
std::size_t brute_force_dilated_ink(const SignatureImage& bin) {
  std::size_t n = 0;
  for (int r = 0; r < bin.rows(); ++r)
    for (int c = 0; c < bin.cols(); ++c) {
      bool ink = false;
      for (int dr = -1; dr <= 1 && !ink; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < bin.rows() && cc >= 0 && cc < bin.cols() &&
              bin.pixels(rr, cc) == 0.0) {
            ink = true;
            break;
          }
        }
      n += ink;
    }
  return n;
}

}  // namespace

TEST_CASE("load_signature scales 8-bit values and uses BT.601 luminance") {
  const auto dir = temp_dir();
  cv::Mat bgr(1, 3, CV_8UC3);
  bgr.at<cv::Vec3b>(0, 0) = {255, 255, 255};
  bgr.at<cv::Vec3b>(0, 1) = {0, 0, 0};
  bgr.at<cv::Vec3b>(0, 2) = {0, 0, 255};  // pure red in BGR order
  REQUIRE(cv::imwrite((dir / "rgb.png").string(), bgr));
  auto img = load_signature(dir / "rgb.png");
  CHECK(img.pixels(0, 0) == 1.0);
  CHECK(img.pixels(0, 1) == 0.0);
  CHECK(std::abs(img.pixels(0, 2) - 0.299) < 1e-6);
  CHECK(luminance(1, 0, 0) == doctest::Approx(0.299));
}

TEST_CASE("load_signature errors and sidecar metadata") {
  const auto dir = temp_dir();
  CHECK_THROWS_AS(load_signature(dir / "missing.png"), IoError);
  {
    std::ofstream(dir / "garbage.png") << "not an image";
  }
  CHECK_THROWS_AS(load_signature(dir / "garbage.png"), IoError);

  cv::Mat g(2, 2, CV_8UC1, cv::Scalar(0));
  REQUIRE(cv::imwrite((dir / "meta.png").string(), g));
  std::ofstream(dir / "meta.png.json")
      << R"({"user_id": "u7", "source": "target_stamped", "polarity": "inverse"})";
  auto img = load_signature(dir / "meta.png");
  CHECK(img.user_id == "u7");
  CHECK(img.source == Source::target_stamped);
  CHECK(img.polarity == Polarity::inverse);
}

TEST_CASE("save then load reproduces 8-bit content") {
  std::mt19937_64 rng(2);
  auto img = random_image(7, 9, rng);
  const auto path = temp_dir() / "roundtrip.png";
  save_signature(img, path);
  auto back = load_signature(path);
  CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("invert") {
  SUBCASE("white becomes black and polarity toggles") {
    auto white = SignatureImage::from_pixels(PixelMatrix::Constant(3, 4, 1.0));
    auto black = invert(white);
    CHECK(black.pixels.maxCoeff() == 0.0);
    CHECK(black.polarity == Polarity::inverse);
  }
  SUBCASE("0.3 maps to 0.7") {
    auto img = SignatureImage::from_pixels(PixelMatrix::Constant(1, 1, 0.3));
    CHECK(invert(img).pixels(0, 0) == doctest::Approx(0.7).epsilon(1e-7));
  }
  SUBCASE("involution is bit exact and keeps metadata") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      auto img = random_image(13, 17, rng);
      img.user_id = "u";
      img.source = Source::reference;
      auto twice = invert(invert(img));
      CHECK(twice.pixels == img.pixels);
      CHECK(twice.polarity == img.polarity);
      CHECK(twice.user_id == "u");
      CHECK(twice.source == Source::reference);
    }
  }
}

TEST_CASE("binarize") {
  SUBCASE("fixed threshold") {
    PixelMatrix px(1, 2);
    px << 0.2, 0.8;
    auto res = binarize(SignatureImage::from_pixels(px), BinarizeMethod::fixed(0.5));
    CHECK(res.image.pixels(0, 0) == 0.0);
    CHECK(res.image.pixels(0, 1) == 1.0);
    CHECK_FALSE(res.fallback);
  }
  SUBCASE("constant image under otsu falls back to all background") {
    auto img = SignatureImage::from_pixels(PixelMatrix::Constant(5, 5, 0.4));
    auto res = binarize(img, BinarizeMethod::otsu());
    CHECK(res.fallback);
    CHECK(res.image.pixels.minCoeff() == 1.0);
    CHECK(ink_count(res.image) == 0);
  }
  SUBCASE("bimodal otsu threshold lies between the modes") {
    PixelMatrix px(10, 10);
    px.topRows(5).setConstant(0.1);
    px.bottomRows(5).setConstant(0.9);
    auto img = SignatureImage::from_pixels(px);
    auto t = otsu_threshold(img);
    REQUIRE(t.has_value());
    CHECK(*t > 0.1);
    CHECK(*t < 0.9);
    CHECK(*t == brute_force_otsu(img));
  }
  SUBCASE("otsu agrees with brute force on random images of both polarities") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      auto img = random_image(12, 15, rng);
      if (trial % 2) img = invert(img);
      auto t = otsu_threshold(img);
      REQUIRE(t.has_value());
      CHECK(*t == brute_force_otsu(img));
    }
  }
  SUBCASE("output is two-valued and ink is monotone in t") {
    std::mt19937_64 rng(4);
    for (auto pol : {Polarity::original, Polarity::inverse}) {
      auto img = random_image(16, 16, rng);
      img.polarity = pol;
      std::size_t prev = SIZE_MAX;
      for (double t = 0.0; t <= 1.0; t += 0.05) {
        auto res = binarize(img, BinarizeMethod::fixed(t));
        for (Eigen::Index i = 0; i < res.image.pixels.size(); ++i) {
          const double v = res.image.pixels.data()[i];
          CHECK((v == 0.0 || v == 1.0));
        }
        const std::size_t ink = ink_count(res.image);
        CHECK(ink <= prev);
        prev = ink;
      }
    }
  }
}

TEST_CASE("resize_normalize and canvas fitting") {
  SUBCASE("100x200 into 224x224 keeps aspect") {
    auto img = SignatureImage::from_pixels(PixelMatrix::Constant(100, 200, 0.0));
    ContentBox box;
    auto canvas = fit_to_canvas(img, 224, 224, &box);
    CHECK(box.height == 112);
    CHECK(box.width == 224);
    CHECK(box.top == 56);
    CHECK(canvas.pixels(0, 0) == 1.0);
    CHECK(canvas.pixels(223, 100) == 1.0);
    CHECK(canvas.pixels(112, 100) == 0.0);
    InputSpec spec;
    auto t = resize_normalize(img, spec);
    CHECK(t.shape() == std::array<int, 4>{1, 1, 224, 224});
  }
  SUBCASE("inverse images pad black") {
    auto img = invert(SignatureImage::from_pixels(PixelMatrix::Constant(10, 20, 1.0)));
    auto canvas = fit_to_canvas(img, 20, 20);
    CHECK(canvas.pixels(0, 0) == 0.0);
  }
  SUBCASE("same-size input is unchanged before standardization") {
    std::mt19937_64 rng(8);
    auto img = random_image(24, 32, rng);
    InputSpec spec{24, 32, 1, {0.25}, {0.5}};
    auto t = resize_normalize(img, spec);
    for (int r = 0; r < 24; ++r)
      for (int c = 0; c < 32; ++c)
        CHECK(t.at(0, 0, r, c) == doctest::Approx((img.pixels(r, c) - 0.25) / 0.5));
  }
  SUBCASE("1x1 image fills the target") {
    auto img = SignatureImage::from_pixels(PixelMatrix::Constant(1, 1, 0.25));
    auto canvas = fit_to_canvas(img, 8, 8);
    CHECK(canvas.pixels.minCoeff() == doctest::Approx(0.25));
    CHECK(canvas.pixels.maxCoeff() == doctest::Approx(0.25));
  }
  SUBCASE("output shape always equals the target, with channel replication") {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> dim(1, 60);
    InputSpec spec{32, 48, 3, {0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}};
    for (int trial = 0; trial < 25; ++trial) {
      auto img = random_image(dim(rng), dim(rng), rng);
      auto t = resize_normalize(img, spec);
      CHECK(t.shape() == std::array<int, 4>{1, 3, 32, 48});
      // Replicated channels differ only by the per-channel constants.
      CHECK(t.at(0, 0, 5, 5) * 0.229 + 0.485 ==
            doctest::Approx(t.at(0, 1, 5, 5) * 0.224 + 0.456));
    }
  }
  SUBCASE("restore inverts the canvas placement for same-scale content") {
    std::mt19937_64 rng(12);
    auto img = random_image(10, 20, rng);
    ContentBox box;
    auto canvas = fit_to_canvas(img, 20, 20, &box);
    auto back = restore_from_canvas(canvas, box, 10, 20);
    CHECK(back.pixels == img.pixels);
  }
}

TEST_CASE("augmentation") {
  AugmentationConfig cfg;
  cfg.target_count_per_user = 80;
  cfg.seed = 42;

  SUBCASE("12 originals grow to at least 80") {
    std::vector<SignatureImage> originals(12, stroke_image());
    auto out = augment_user(originals, cfg);
    CHECK(out.size() >= 80);
    std::size_t augmented = 0;
    for (const auto& img : out) augmented += !img.transforms.empty();
    CHECK(augmented >= 68);
    for (std::size_t i = 0; i < 12; ++i) CHECK(out[i].pixels == originals[i].pixels);
  }
  SUBCASE("zero rotation and zero distortion are exact copies") {
    auto img = stroke_image();
    CHECK(rotate(img, 0.0).pixels == img.pixels);
    CHECK(distort(img, 4, 0.0, 1).pixels == img.pixels);
  }
  SUBCASE("thickening grows the ink set, matching a brute-force dilation") {
    auto bin = binarize(stroke_image(), BinarizeMethod::fixed(0.5)).image;
    auto thick = thicken(bin, 3);
    const std::size_t before = ink_count(bin);
    const std::size_t after = ink_count(thick);
    CHECK(after > before);
    CHECK(after == brute_force_dilated_ink(bin));
    for (Eigen::Index i = 0; i < bin.pixels.size(); ++i) {
      if (bin.pixels.data()[i] == 0.0) CHECK(thick.pixels.data()[i] == 0.0);
    }
  }
  SUBCASE("inverse polarity thickens light ink") {
    auto bin = invert(binarize(stroke_image(), BinarizeMethod::fixed(0.5)).image);
    CHECK(ink_count(thicken(bin, 3)) > ink_count(bin));
  }
  SUBCASE("same seed, same output") {
    std::vector<SignatureImage> originals{stroke_image(), invert(invert(stroke_image()))};
    cfg.target_count_per_user = 15;
    auto a = augment_user(originals, cfg);
    auto b = augment_user(originals, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].pixels == b[i].pixels);
      CHECK(a[i].transforms == b[i].transforms);
    }
  }
  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(augment_user({}, cfg), ValidationError);
  }
}
