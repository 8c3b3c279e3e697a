// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/synth.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <opencv2/imgproc.hpp>

#include "sigverify/error.hpp"
#include "sigverify/rng.hpp"

namespace sigverify::synth {

namespace {

constexpr int kSuper = 4;

double normal(std::mt19937_64& rng, double sd) {
  // Box-Muller on the portable uniform helper.
  const double u1 = uniform_real(rng, 0.0, 1.0);
  const double u2 = uniform_real(rng, 0.0, 1.0);
  return sd * std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

imaging::PixelMatrix to_pixels(const cv::Mat& m) {
  imaging::PixelMatrix out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out(r, c) = m.at<float>(r, c);
  return out;
}

}  // namespace

WriterStyle random_writer(std::mt19937_64& rng, int n_strokes) {
  if (n_strokes < 1) throw ValidationError("a writer needs at least one stroke");
  WriterStyle w;
  double pen_x = uniform_real(rng, 0.1, 0.25);
  double pen_y = uniform_real(rng, 0.35, 0.65);
  for (int s = 0; s < n_strokes; ++s) {
    Stroke st;
    st.x[0] = pen_x;
    st.y[0] = pen_y;
    for (int k = 1; k < 4; ++k) {
      st.x[k] = std::clamp(st.x[k - 1] + uniform_real(rng, -0.15, 0.3), 0.08, 0.92);
      st.y[k] = uniform_real(rng, 0.15, 0.85);
    }
    w.strokes.push_back(st);
    // Strokes usually continue from the previous pen position, sometimes lift.
    if (uniform_index(rng, 4) == 0) {
      pen_x = uniform_real(rng, 0.1, 0.8);
      pen_y = uniform_real(rng, 0.2, 0.8);
    } else {
      pen_x = st.x[3];
      pen_y = st.y[3];
    }
  }
  w.thickness = uniform_real(rng, 1.2, 2.2);
  w.slant = uniform_real(rng, -0.25, 0.25);
  return w;
}

imaging::SignatureImage render_signature(const WriterStyle& style, const RenderConfig& cfg,
                                         std::mt19937_64& rng) {
  if (cfg.rows < 8 || cfg.cols < 8) throw ValidationError("render canvas too small");
  const int H = cfg.rows * kSuper, W = cfg.cols * kSuper;
  cv::Mat canvas(H, W, CV_8U, cv::Scalar(255));
  const double angle = uniform_real(rng, -cfg.rotation_deg, cfg.rotation_deg) *
                       std::numbers::pi / 180.0;
  const double scale = 1.0 + uniform_real(rng, -cfg.scale, cfg.scale);
  const double dx = uniform_real(rng, -cfg.shift, cfg.shift);
  const double dy = uniform_real(rng, -cfg.shift, cfg.shift);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const int thickness = std::max(
      1, static_cast<int>(std::lround(style.thickness * kSuper * cfg.rows / 64.0 *
                                      (1.0 + uniform_real(rng, -0.1, 0.1)))));
  auto map = [&](double x, double y) {
    x += style.slant * (0.5 - y);
    x -= 0.5;
    y -= 0.5;
    const double rx = scale * (ca * x - sa * y) + 0.5 + dx;
    const double ry = scale * (sa * x + ca * y) + 0.5 + dy;
    return cv::Point(static_cast<int>(std::lround(rx * W)), static_cast<int>(std::lround(ry * H)));
  };
  for (const auto& st : style.strokes) {
    std::array<double, 4> x = st.x, y = st.y;
    for (int k = 0; k < 4; ++k) {
      x[k] += normal(rng, cfg.jitter);
      y[k] += normal(rng, cfg.jitter);
    }
    std::vector<cv::Point> pts;
    constexpr int kSteps = 40;
    for (int i = 0; i <= kSteps; ++i) {
      const double t = static_cast<double>(i) / kSteps, u = 1.0 - t;
      const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
      pts.push_back(map(b0 * x[0] + b1 * x[1] + b2 * x[2] + b3 * x[3],
                        b0 * y[0] + b1 * y[1] + b2 * y[2] + b3 * y[3]));
    }
    cv::polylines(canvas, pts, false, cv::Scalar(0), thickness, cv::LINE_AA);
  }
  cv::Mat small, f;
  cv::resize(canvas, small, cv::Size(cfg.cols, cfg.rows), 0, 0, cv::INTER_AREA);
  small.convertTo(f, CV_32F, 1.0 / 255.0);
  return imaging::SignatureImage::from_pixels(to_pixels(f));
}

imaging::SignatureImage overlay_stamp(const imaging::SignatureImage& clean,
                                      const StampConfig& cfg, std::mt19937_64& rng) {
  if (!(cfg.factor_min > 0.0 && cfg.factor_min <= cfg.factor_max && cfg.factor_max <= 1.0)) {
    throw ValidationError("stamp factor range must lie in (0, 1]");
  }
  const int rows = clean.rows(), cols = clean.cols();
  const int H = rows * kSuper, W = cols * kSuper;
  cv::Mat mask(H, W, CV_8U, cv::Scalar(0));
  const cv::Point centre(static_cast<int>(uniform_real(rng, 0.3, 0.7) * W),
                         static_cast<int>(uniform_real(rng, 0.3, 0.7) * H));
  const cv::Size axes(static_cast<int>(uniform_real(rng, 0.25, 0.4) * W),
                      static_cast<int>(uniform_real(rng, 0.2, 0.35) * H));
  const double angle = uniform_real(rng, -30.0, 30.0);
  const int ring = std::max(1, static_cast<int>(cfg.ring_width * H));
  cv::ellipse(mask, centre, axes, angle, 0, 360, cv::Scalar(255), ring, cv::LINE_AA);
  if (cfg.text) {
    static const char* kWords[] = {"PAID", "BANK", "COPY", "SEAL", "OK"};
    const std::string word = kWords[uniform_index(rng, std::size(kWords))];
    const double font = 0.012 * H;
    int baseline = 0;
    const cv::Size ts = cv::getTextSize(word, cv::FONT_HERSHEY_SIMPLEX, font, ring, &baseline);
    cv::putText(mask, word, centre - cv::Point(ts.width / 2, -ts.height / 2),
                cv::FONT_HERSHEY_SIMPLEX, font, cv::Scalar(255), std::max(1, ring / 2),
                cv::LINE_AA);
  }
  cv::Mat small;
  cv::resize(mask, small, cv::Size(cols, rows), 0, 0, cv::INTER_AREA);
  const double factor = uniform_real(rng, cfg.factor_min, cfg.factor_max);
  imaging::PixelMatrix px = clean.pixels;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double coverage = small.at<unsigned char>(r, c) / 255.0;
      px(r, c) *= 1.0 - coverage * (1.0 - factor);
    }
  }
  auto out = clean.with_pixels(std::move(px));
  out.source = imaging::Source::target_stamped;
  return out;
}

dataset::DatasetManifest write_corpus(const std::filesystem::path& root, const CorpusConfig& cfg) {
  if (cfg.n_users < 1 || cfg.references < 0 || cfg.unstamped < 0 || cfg.stamped < 0) {
    throw ValidationError("corpus needs at least one user and non-negative image counts");
  }
  std::mt19937_64 rng(cfg.seed);
  for (int u = 0; u < cfg.n_users; ++u) {
    const std::string user = fmt::format("{}{:03d}", cfg.user_prefix, u);
    const WriterStyle style = random_writer(rng);
    auto emit = [&](imaging::Source src, int count) {
      const auto dir = root / user / std::string(imaging::to_string(src));
      std::filesystem::create_directories(dir);
      for (int i = 0; i < count; ++i) {
        auto img = render_signature(style, cfg.render, rng);
        const std::string name = fmt::format("{:02d}.png", i);
        if (src == imaging::Source::target_stamped) {
          if (cfg.truth_dir) {
            const auto tdir = *cfg.truth_dir / user / std::string(imaging::to_string(src));
            std::filesystem::create_directories(tdir);
            imaging::save_signature(img, tdir / name, /*deep=*/true);
          }
          img = overlay_stamp(img, cfg.stamp, rng);
        }
        imaging::save_signature(img, dir / name, /*deep=*/true);
      }
    };
    emit(imaging::Source::reference, cfg.references);
    emit(imaging::Source::target_unstamped, cfg.unstamped);
    emit(imaging::Source::target_stamped, cfg.stamped);
  }
  return dataset::build_manifest(root, dataset::Layout::user_dirs);
}

}  // namespace sigverify::synth
