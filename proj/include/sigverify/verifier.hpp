// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Cosine scoring, global-threshold decisions, ROC and global EER.
//
// Decision rule everywhere: predict match iff similarity >= threshold.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sigverify/dataset.hpp"
#include "sigverify/features.hpp"

namespace sigverify::verifier {

using dataset::Label;

struct ScoreRecord {
  std::string pair_id;
  double similarity = 0.0;
  Label label = Label::mismatch;

  /// Clamps similarity into [-1, 1]; values further than 1e-9 outside, or
  /// NaN, raise ValidationError.
  static ScoreRecord make(std::string pair_id, double similarity, Label label);
};

/// <a,b> / (|a| |b|), clamped to [-1, 1]. Symmetric bit-for-bit.
/// Throws ValidationError on a dimension mismatch, DegenerateEmbedding on a
/// zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// One record per pair, in pair order. A missing feature raises
/// ValidationError naming the pair.
std::vector<ScoreRecord> score_pairs(const std::vector<dataset::PairRecord>& pairs,
                                     const FeatureCache& features);

/// Fraction of mismatches with similarity >= t.
double far_at(const std::vector<ScoreRecord>& scores, double t);
/// Fraction of matches with similarity < t.
double frr_at(const std::vector<ScoreRecord>& scores, double t);

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};

/// Thresholds +inf, every distinct score in decreasing order, then -inf.
std::vector<RocPoint> compute_roc(const std::vector<ScoreRecord>& scores);
/// Trapezoidal area under the curve.
double roc_auc(const std::vector<RocPoint>& roc);

struct EerResult {
  double eer;
  double threshold;
  double far;
  double frr;
};

/// Candidate thresholds: -inf, midpoints of consecutive distinct scores, +inf.
/// Picks the candidate minimising |FAR - FRR|, the lowest one on ties, and
/// reports eer = (FAR + FRR) / 2 there.
EerResult compute_eer_global(const std::vector<ScoreRecord>& scores);

double accuracy_at_threshold(const std::vector<ScoreRecord>& scores, double t);

/// CSV pair_id,similarity,label with round-trip precision.
void write_scores(const std::vector<ScoreRecord>& scores, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

/// JSON {eer, eer_display, threshold, far, frr, auc, decision_rule,
/// roc:[{t,tpr,fpr}]}; infinite thresholds are written as "inf"/"-inf".
void write_report(const EerResult& eer, const std::vector<RocPoint>& roc,
                  const std::filesystem::path& path);

/// PNG plot, FPR on x and TPR on y, with the EER operating point marked.
void render_roc(const std::vector<RocPoint>& roc, const EerResult& eer,
                const std::string& title, const std::filesystem::path& path);

}  // namespace sigverify::verifier
