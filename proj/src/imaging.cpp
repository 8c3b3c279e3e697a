// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sigverify/error.hpp"

namespace sigverify::imaging {

namespace {

cv::Mat as_mat(const PixelMatrix& m) {
  return cv::Mat(static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                 CV_64F, const_cast<double*>(m.data()));
}

PixelMatrix from_mat(const cv::Mat& m) {
  cv::Mat d;
  m.convertTo(d, CV_64F);
  PixelMatrix out(d.rows, d.cols);
  for (int r = 0; r < d.rows; ++r) {
    const double* src = d.ptr<double>(r);
    std::copy(src, src + d.cols, out.data() + static_cast<std::ptrdiff_t>(r) * d.cols);
  }
  return out;
}

double depth_scale(int depth) {
  switch (depth) {
    case CV_8U: return 1.0 / 255.0;
    case CV_16U: return 1.0 / 65535.0;
    case CV_32F:
    case CV_64F: return 1.0;
    default:
      throw IoError("unsupported raster bit depth");
  }
}

double ink_strength(double p, Polarity pol) {
  return pol == Polarity::original ? 1.0 - p : p;
}

int strength_bin(double s) {
  return std::clamp(static_cast<int>(std::floor(s * 256.0)), 0, 255);
}

}  // namespace

std::string_view to_string(Polarity p) {
  return p == Polarity::original ? "original" : "inverse";
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::reference: return "reference";
    case Source::target_unstamped: return "target_unstamped";
    case Source::target_stamped: return "target_stamped";
    case Source::unknown: return "unknown";
  }
  return "unknown";
}

Polarity parse_polarity(std::string_view s) {
  if (s == "original") return Polarity::original;
  if (s == "inverse") return Polarity::inverse;
  throw ValidationError("unknown polarity '" + std::string(s) + "'");
}

Source parse_source(std::string_view s) {
  if (s == "reference") return Source::reference;
  if (s == "target_unstamped") return Source::target_unstamped;
  if (s == "target_stamped") return Source::target_stamped;
  if (s == "unknown" || s.empty()) return Source::unknown;
  throw ValidationError("unknown source '" + std::string(s) + "'");
}

double quantize_pixel(double v) {
  if (!(v > 0.0)) return 0.0;  // also maps NaN to 0
  if (v >= 1.0) return 1.0;
  return std::round(v / kPixelQuantum) * kPixelQuantum;
}

SignatureImage SignatureImage::from_pixels(PixelMatrix pixels,
                                           Polarity polarity) {
  SignatureImage img;
  img.polarity = polarity;
  img.pixels = std::move(pixels);
  img.pixels = img.pixels.unaryExpr(&quantize_pixel);
  return img;
}

SignatureImage SignatureImage::with_pixels(PixelMatrix new_pixels) const {
  SignatureImage img = *this;
  img.pixels = new_pixels.unaryExpr(&quantize_pixel);
  return img;
}

void SignatureImage::validate() const {
  if (pixels.rows() < 1 || pixels.cols() < 1) {
    throw ValidationError("zero-area signature image");
  }
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    const double v = pixels.data()[i];
    if (!(v >= 0.0 && v <= 1.0) || quantize_pixel(v) != v) {
      throw ValidationError("pixel outside the [0,1] grid");
    }
  }
}

double luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

SignatureImage load_signature(const std::filesystem::path& path,
                              PolarityHint hint) {
  if (!std::filesystem::exists(path)) {
    throw IoError("no such file: " + path.string());
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) {
    if (std::filesystem::file_size(path) > 0) {
      throw IoError("cannot decode raster: " + path.string());
    }
    throw IoError("empty file: " + path.string());
  }
  if (raw.rows < 1 || raw.cols < 1) {
    throw ValidationError("zero-area image: " + path.string());
  }
  const double scale = depth_scale(raw.depth());
  const int ch = raw.channels();
  cv::Mat f;
  raw.convertTo(f, CV_64F, scale);
  PixelMatrix px(f.rows, f.cols);
  for (int r = 0; r < f.rows; ++r) {
    const double* row = f.ptr<double>(r);
    for (int c = 0; c < f.cols; ++c) {
      const double* p = row + static_cast<std::ptrdiff_t>(c) * ch;
      double v = 0.0;
      double alpha = 1.0;
      switch (ch) {
        case 1: v = p[0]; break;
        case 2: v = p[0]; alpha = p[1]; break;
        case 3: v = luminance(p[2], p[1], p[0]); break;  // OpenCV is BGR
        case 4: v = luminance(p[2], p[1], p[0]); alpha = p[3]; break;
        default: throw IoError("unsupported channel count in " + path.string());
      }
      px(r, c) = alpha * v + (1.0 - alpha);
    }
  }
  SignatureImage img = SignatureImage::from_pixels(std::move(px));
  switch (hint) {
    case PolarityHint::original: img.polarity = Polarity::original; break;
    case PolarityHint::inverse: img.polarity = Polarity::inverse; break;
    case PolarityHint::detect:
      img.polarity = img.pixels.mean() >= 0.5 ? Polarity::original
                                              : Polarity::inverse;
      break;
  }
  auto sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    std::ifstream is(sidecar);
    nlohmann::json meta;
    try {
      is >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bad sidecar " + sidecar.string() + ": " + e.what());
    }
    if (meta.contains("user_id")) img.user_id = meta["user_id"].get<std::string>();
    if (meta.contains("source")) {
      img.source = parse_source(meta["source"].get<std::string>());
    }
    if (meta.contains("polarity")) {
      img.polarity = parse_polarity(meta["polarity"].get<std::string>());
    }
    if (meta.contains("cleaned")) img.cleaned = meta["cleaned"].get<bool>();
  }
  return img;
}

void save_signature(const SignatureImage& img,
                    const std::filesystem::path& path, bool deep) {
  img.validate();
  const double peak = deep ? 65535.0 : 255.0;
  cv::Mat out(img.rows(), img.cols(), deep ? CV_16U : CV_8U);
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const double v = std::round(img.pixels(r, c) * peak);
      if (deep) {
        out.at<std::uint16_t>(r, c) = static_cast<std::uint16_t>(v);
      } else {
        out.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(v);
      }
    }
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  if (!cv::imwrite(path.string(), out)) {
    throw IoError("cannot write raster: " + path.string());
  }
}

SignatureImage invert(const SignatureImage& img) {
  SignatureImage out = img;
  out.pixels = img.pixels.unaryExpr([](double p) { return 1.0 - p; });
  out.polarity = img.polarity == Polarity::original ? Polarity::inverse
                                                    : Polarity::original;
  return out;
}

std::optional<double> otsu_threshold(const SignatureImage& img) {
  std::array<double, 256> hist{};
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
    hist[strength_bin(ink_strength(img.pixels.data()[i], img.polarity))] += 1.0;
  }
  const double total = static_cast<double>(img.pixels.size());
  if (std::count_if(hist.begin(), hist.end(), [](double h) { return h > 0; }) < 2) {
    return std::nullopt;
  }
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];
  double weight_lo = 0.0;
  double sum_lo = 0.0;
  double best = -1.0;
  int best_t = 1;
  // Split between bins t-1 and t; class "ink" holds bins >= t.
  for (int t = 1; t < 256; ++t) {
    weight_lo += hist[t - 1];
    sum_lo += (t - 1) * hist[t - 1];
    const double weight_hi = total - weight_lo;
    if (weight_lo == 0.0 || weight_hi == 0.0) continue;
    const double mean_lo = sum_lo / weight_lo;
    const double mean_hi = (sum_all - sum_lo) / weight_hi;
    const double between =
        weight_lo * weight_hi * (mean_lo - mean_hi) * (mean_lo - mean_hi);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t / 256.0;
}

BinarizeResult binarize(const SignatureImage& img, BinarizeMethod method) {
  BinarizeResult res;
  res.image = img;
  const double ink_value = img.polarity == Polarity::original ? 0.0 : 1.0;
  const double bg_value = 1.0 - ink_value;
  if (method.kind == BinarizeMethod::Kind::otsu) {
    auto t = otsu_threshold(img);
    if (!t) {
      res.fallback = true;
      res.threshold = 0.5;
      res.image.pixels.setConstant(bg_value);
      return res;
    }
    res.threshold = *t;
  } else {
    res.threshold = method.threshold;
  }
  const double t = res.threshold;
  const Polarity pol = img.polarity;
  res.image.pixels = img.pixels.unaryExpr([&](double p) {
    return ink_strength(p, pol) >= t ? ink_value : bg_value;
  });
  return res;
}

std::size_t ink_count(const SignatureImage& img, double threshold) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
    if (ink_strength(img.pixels.data()[i], img.polarity) >= threshold) ++n;
  }
  return n;
}

SignatureImage fit_to_canvas(const SignatureImage& img, int height, int width,
                             ContentBox* box) {
  if (height < 1 || width < 1) {
    throw ValidationError("target dimensions must be >= 1");
  }
  img.validate();
  const double scale = std::min(static_cast<double>(height) / img.rows(),
                                static_cast<double>(width) / img.cols());
  const int nh = std::clamp(static_cast<int>(std::lround(img.rows() * scale)), 1, height);
  const int nw = std::clamp(static_cast<int>(std::lround(img.cols() * scale)), 1, width);
  PixelMatrix content;
  if (nh == img.rows() && nw == img.cols()) {
    content = img.pixels;
  } else {
    cv::Mat dst;
    const int interp = (nh < img.rows() || nw < img.cols()) ? cv::INTER_AREA
                                                            : cv::INTER_LINEAR;
    cv::resize(as_mat(img.pixels), dst, cv::Size(nw, nh), 0, 0, interp);
    content = from_mat(dst);
  }
  ContentBox b{(height - nh) / 2, (width - nw) / 2, nh, nw};
  PixelMatrix canvas = PixelMatrix::Constant(height, width, img.background());
  canvas.block(b.top, b.left, nh, nw) = content;
  if (box != nullptr) *box = b;
  return img.with_pixels(std::move(canvas));
}

SignatureImage restore_from_canvas(const SignatureImage& canvas,
                                   const ContentBox& box, int rows, int cols) {
  if (box.top < 0 || box.left < 0 || box.top + box.height > canvas.rows() ||
      box.left + box.width > canvas.cols() || box.height < 1 || box.width < 1) {
    throw InternalError("content box outside canvas");
  }
  PixelMatrix crop = canvas.pixels.block(box.top, box.left, box.height, box.width);
  if (box.height == rows && box.width == cols) {
    return canvas.with_pixels(std::move(crop));
  }
  cv::Mat dst;
  const int interp = (rows < box.height || cols < box.width) ? cv::INTER_AREA
                                                             : cv::INTER_LINEAR;
  cv::resize(as_mat(crop), dst, cv::Size(cols, rows), 0, 0, interp);
  return canvas.with_pixels(from_mat(dst));
}

void InputSpec::validate() const {
  if (height < 1 || width < 1) throw ValidationError("input size must be >= 1");
  if (channels != 1 && channels != 3) {
    throw ValidationError("input channels must be 1 or 3");
  }
  auto ok = [&](const std::vector<double>& v) {
    return v.size() == 1 || static_cast<int>(v.size()) == channels;
  };
  if (!ok(mean) || !ok(stddev)) {
    throw ValidationError("standardization constants do not match channels");
  }
  for (double s : stddev) {
    if (!(s > 0.0)) throw ValidationError("standard deviation must be > 0");
  }
}

nn::Tensor resize_normalize(const SignatureImage& img, const InputSpec& spec) {
  spec.validate();
  const SignatureImage canvas = fit_to_canvas(img, spec.height, spec.width);
  nn::Tensor t(1, spec.channels, spec.height, spec.width);
  for (int c = 0; c < spec.channels; ++c) {
    const double m = spec.mean.size() == 1 ? spec.mean[0] : spec.mean[c];
    const double s = spec.stddev.size() == 1 ? spec.stddev[0] : spec.stddev[c];
    for (int r = 0; r < spec.height; ++r) {
      for (int col = 0; col < spec.width; ++col) {
        t.at(0, c, r, col) = (canvas.pixels(r, col) - m) / s;
      }
    }
  }
  return t;
}

nn::Tensor to_tensor(const SignatureImage& img) {
  nn::Tensor t(1, 1, img.rows(), img.cols());
  std::copy(img.pixels.data(), img.pixels.data() + img.pixels.size(), t.data());
  return t;
}

PixelMatrix from_tensor(const nn::Tensor& t, int sample) {
  if (t.c() != 1) throw InternalError("expected a single-channel tensor");
  PixelMatrix m(t.h(), t.w());
  auto s = t.sample(sample);
  std::copy(s.begin(), s.end(), m.data());
  return m;
}

double psnr(const SignatureImage& a, const SignatureImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("psnr: image sizes differ");
  }
  const double mse = (a.pixels - b.pixels).squaredNorm() /
                     static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double mean_abs_diff(const SignatureImage& a, const SignatureImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("mean_abs_diff: image sizes differ");
  }
  return (a.pixels - b.pixels).cwiseAbs().mean();
}

}  // namespace sigverify::imaging
