// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sigverify/csv.hpp"
#include "sigverify/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sigverify::verifier {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Split {
  std::vector<double> match;     // sorted ascending
  std::vector<double> mismatch;  // sorted ascending
};

Split split_sorted(const std::vector<ScoreRecord>& scores) {
  Split s;
  for (const auto& r : scores) {
    (r.label == Label::match ? s.match : s.mismatch).push_back(r.similarity);
  }
  std::sort(s.match.begin(), s.match.end());
  std::sort(s.mismatch.begin(), s.mismatch.end());
  return s;
}

void require_both_classes(const Split& s, const char* op) {
  if (s.match.empty() || s.mismatch.empty()) {
    throw ValidationError(fmt::format("{} needs both match and mismatch scores ({} / {})", op,
                                      s.match.size(), s.mismatch.size()));
  }
}

std::size_t count_at_least(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(sorted.end() -
                                  std::lower_bound(sorted.begin(), sorted.end(), t));
}

std::size_t count_below(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) -
                                  sorted.begin());
}

json threshold_json(double t) {
  if (t == kInf) return "inf";
  if (t == -kInf) return "-inf";
  return t;
}

}  // namespace

ScoreRecord ScoreRecord::make(std::string pair_id, double similarity, Label label) {
  if (!(similarity >= -1.0 - 1e-9 && similarity <= 1.0 + 1e-9)) {
    throw ValidationError(fmt::format("similarity {} for {} is outside [-1, 1]", similarity,
                                      pair_id));
  }
  return {std::move(pair_id), std::clamp(similarity, -1.0, 1.0), label};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("feature dims differ: {} vs {}", a.size(), b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0)) throw DegenerateEmbedding("first vector has zero norm");
  if (!(nb > 0.0)) throw DegenerateEmbedding("second vector has zero norm");
  // sqrt(na) * sqrt(nb) is commutative, so f(a, b) == f(b, a) exactly.
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<ScoreRecord> score_pairs(const std::vector<dataset::PairRecord>& pairs,
                                     const FeatureCache& features) {
  std::vector<ScoreRecord> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto a = features.find(p.ref_path);
    const auto b = features.find(p.target_path);
    if (!a || !b) {
      throw ValidationError(fmt::format("pair {}: no feature for {}", p.pair_id,
                                        !a ? p.ref_path : p.target_path));
    }
    double s;
    try {
      s = cosine_similarity(*a, *b);
    } catch (const DegenerateEmbedding& e) {
      throw DegenerateEmbedding(fmt::format("pair {}: {}", p.pair_id, e.what()));
    }
    out.push_back(ScoreRecord::make(p.pair_id, s, p.label));
  }
  return out;
}

double far_at(const std::vector<ScoreRecord>& scores, double t) {
  std::size_t n = 0, k = 0;
  for (const auto& r : scores) {
    if (r.label != Label::mismatch) continue;
    ++n;
    if (r.similarity >= t) ++k;
  }
  return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
}

double frr_at(const std::vector<ScoreRecord>& scores, double t) {
  std::size_t n = 0, k = 0;
  for (const auto& r : scores) {
    if (r.label != Label::match) continue;
    ++n;
    if (r.similarity < t) ++k;
  }
  return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n);
}

std::vector<RocPoint> compute_roc(const std::vector<ScoreRecord>& scores) {
  const Split s = split_sorted(scores);
  require_both_classes(s, "compute_roc");
  std::vector<double> thresholds;
  thresholds.reserve(scores.size() + 2);
  for (const auto& r : scores) thresholds.push_back(r.similarity);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.insert(thresholds.begin(), kInf);
  thresholds.push_back(-kInf);
  const double np = static_cast<double>(s.match.size());
  const double nn = static_cast<double>(s.mismatch.size());
  std::vector<RocPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    out.push_back({t, static_cast<double>(count_at_least(s.match, t)) / np,
                   static_cast<double>(count_at_least(s.mismatch, t)) / nn});
  }
  return out;
}

double roc_auc(const std::vector<RocPoint>& roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  return area;
}

EerResult compute_eer_global(const std::vector<ScoreRecord>& scores) {
  const Split s = split_sorted(scores);
  require_both_classes(s, "compute_eer_global");
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& r : scores) values.push_back(r.similarity);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> candidates;
  candidates.reserve(values.size() + 1);
  candidates.push_back(-kInf);
  for (std::size_t i = 1; i < values.size(); ++i) {
    candidates.push_back((values[i - 1] + values[i]) / 2.0);
  }
  candidates.push_back(kInf);

  const double np = static_cast<double>(s.match.size());
  const double nn = static_cast<double>(s.mismatch.size());
  EerResult best{0.0, 0.0, 0.0, 0.0};
  double best_gap = kInf;
  for (double t : candidates) {
    const double far = static_cast<double>(count_at_least(s.mismatch, t)) / nn;
    const double frr = static_cast<double>(count_below(s.match, t)) / np;
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(far + frr) / 2.0, t, far, frr};
    }
  }
  return best;
}

double accuracy_at_threshold(const std::vector<ScoreRecord>& scores, double t) {
  if (scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : scores) {
    if ((r.similarity >= t) == (r.label == Label::match)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

void write_scores(const std::vector<ScoreRecord>& scores, const fs::path& path) {
  std::vector<csv::Row> rows;
  rows.reserve(scores.size());
  for (const auto& r : scores) {
    rows.push_back({r.pair_id, fmt::format("{:.17g}", r.similarity),
                    std::string(dataset::to_string(r.label))});
  }
  csv::write(path, {"pair_id", "similarity", "label"}, rows);
}

std::vector<ScoreRecord> read_scores(const fs::path& path) {
  const auto t = csv::read(path);
  const auto ii = t.column("pair_id");
  const auto is = t.column("similarity");
  const auto il = t.column("label");
  std::vector<ScoreRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(row[is], &used);
      if (used != row[is].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("{}:{}: bad similarity '{}'", path.string(),
                                        t.lines[k], row[is]));
    }
    out.push_back(ScoreRecord::make(row[ii], v, dataset::parse_label(row[il])));
  }
  return out;
}

void write_report(const EerResult& eer, const std::vector<RocPoint>& roc,
                  const fs::path& path) {
  json j;
  j["eer"] = eer.eer;
  j["eer_display"] = fmt::format("{:.2f}", eer.eer);
  j["threshold"] = threshold_json(eer.threshold);
  j["far"] = eer.far;
  j["frr"] = eer.frr;
  j["auc"] = roc_auc(roc);
  j["decision_rule"] = "match iff similarity >= threshold";
  json pts = json::array();
  for (const auto& p : roc) pts.push_back({{"t", threshold_json(p.threshold)}, {"tpr", p.tpr}, {"fpr", p.fpr}});
  j["roc"] = std::move(pts);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void render_roc(const std::vector<RocPoint>& roc, const EerResult& eer,
                const std::string& title, const fs::path& path) {
  constexpr int kSize = 480, kMargin = 60, kPlot = kSize - 2 * kMargin;
  cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
  auto to_px = [&](double fpr, double tpr) {
    return cv::Point(kMargin + static_cast<int>(std::lround(fpr * kPlot)),
                     kMargin + kPlot - static_cast<int>(std::lround(tpr * kPlot)));
  };
  const cv::Scalar grid(225, 225, 225), axis(0, 0, 0), curve(180, 80, 20), mark(30, 30, 200);
  for (int i = 0; i <= 10; ++i) {
    const double v = i / 10.0;
    cv::line(canvas, to_px(v, 0), to_px(v, 1), grid, 1);
    cv::line(canvas, to_px(0, v), to_px(1, v), grid, 1);
  }
  cv::line(canvas, to_px(0, 0), to_px(1, 1), cv::Scalar(160, 160, 160), 1, cv::LINE_AA);
  cv::rectangle(canvas, to_px(0, 1), to_px(1, 0), axis, 1);
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    const auto label = fmt::format("{:.1f}", v);
    cv::putText(canvas, label, to_px(v, 0) + cv::Point(-10, 18), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                axis, 1, cv::LINE_AA);
    cv::putText(canvas, label, to_px(0, v) + cv::Point(-30, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                axis, 1, cv::LINE_AA);
  }
  cv::putText(canvas, "False positive rate", cv::Point(kSize / 2 - 70, kSize - 15),
              cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
  cv::Mat rotated(kSize, 30, CV_8UC3, cv::Scalar(255, 255, 255));
  {
    cv::Mat strip(30, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(strip, "True positive rate", cv::Point(kSize / 2 - 65, 20),
                cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
    cv::rotate(strip, rotated, cv::ROTATE_90_COUNTERCLOCKWISE);
    rotated.copyTo(canvas(cv::Rect(0, 0, 30, kSize)));
  }
  cv::putText(canvas, title, cv::Point(kMargin, 35), cv::FONT_HERSHEY_SIMPLEX, 0.55, axis, 1,
              cv::LINE_AA);

  std::vector<cv::Point> pts;
  pts.reserve(roc.size());
  for (const auto& p : roc) pts.push_back(to_px(p.fpr, p.tpr));
  if (pts.size() >= 2) cv::polylines(canvas, pts, false, curve, 2, cv::LINE_AA);
  cv::circle(canvas, to_px(eer.far, 1.0 - eer.frr), 5, mark, 2, cv::LINE_AA);
  cv::putText(canvas, fmt::format("EER {:.3f}", eer.eer),
              to_px(eer.far, 1.0 - eer.frr) + cv::Point(10, 16), cv::FONT_HERSHEY_SIMPLEX, 0.45,
              mark, 1, cv::LINE_AA);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) throw IoError("cannot write " + path.string());
}

}  // namespace sigverify::verifier
