// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Human rater protocol: plan, vote log, majority voting and the report that
// compares human and model accuracy on the same pairs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigverify/dataset.hpp"
#include "sigverify/verifier.hpp"

namespace sigverify::humaneval {

enum class Decision { same, different };
std::string_view to_string(Decision d);
Decision parse_decision(std::string_view s);

struct PlanParams {
  std::size_t n_stamped = 180;
  std::size_t n_unstamped = 180;
  int n_subsets = 6;
  int raters_per_pair = 3;
  /// Fraction of matching pairs drawn from each pool. Unset keeps the
  /// pool's own match ratio (plain uniform sampling).
  std::optional<double> match_fraction;
  std::uint64_t seed = 0;
};

struct HumanEvalPlan {
  /// Planned pairs with ground truth. Never sent to raters as-is.
  std::vector<dataset::PairRecord> pairs;
  /// Neutral ids ("hp-0001", ...) in plan order, used in place of pair_id
  /// towards raters, since generated pair ids can reveal the label.
  std::vector<std::string> public_ids;
  /// Whether each pair came from the stamped pool.
  std::vector<bool> stamped;
  int n_subsets = 0;
  int raters_per_pair = 0;
  std::vector<std::string> raters;
  /// Pair indices per subset; subsets partition `pairs` in equal parts.
  std::vector<std::vector<std::size_t>> subsets;
  /// Subset indices per rater, in rater order.
  std::vector<std::vector<int>> rater_subsets;
  std::uint64_t seed = 0;

  /// Pair indices shown to one rater, in presentation order.
  std::vector<std::size_t> assignment(std::size_t rater_index) const;
  std::optional<std::size_t> rater_index(const std::string& rater) const;
  /// Plan index of a public id.
  std::optional<std::size_t> pair_index(const std::string& public_id) const;
  std::size_t per_rater() const;
  std::size_t total_votes() const { return pairs.size() * static_cast<std::size_t>(raters_per_pair); }

  /// Re-checks the counting invariants; throws ValidationError.
  void validate() const;
  nlohmann::json to_json() const;
  static HumanEvalPlan from_json(const nlohmann::json& j);
};

/// Samples n_stamped pairs from the stamped pool and n_unstamped from the
/// unstamped pool, shuffles them into n_subsets equal subsets and hands each
/// subset to raters_per_pair distinct raters. Infeasible counts raise
/// ValidationError quoting the violated equation.
HumanEvalPlan plan_humaneval(const std::vector<dataset::PairRecord>& stamped_pool,
                             const std::vector<dataset::PairRecord>& unstamped_pool,
                             const std::vector<std::string>& raters, const PlanParams& params);

/// Rater ids "r01".."rNN".
std::vector<std::string> default_raters(int n);

struct HumanVote {
  std::string rater_id;
  /// The pair's public id.
  std::string pair_id;
  Decision decision = Decision::same;
  /// UTC, ISO 8601 with milliseconds.
  std::string timestamp;
};

/// Majority of an odd number of votes. Even or zero counts raise
/// ValidationError.
Decision majority_vote(std::span<const Decision> votes);

struct ModelAccuracy {
  std::string model;
  double eer = 0.0;
  double threshold = 0.0;
  double accuracy = 0.0;
};

struct HumanEvalReport {
  std::size_t n_pairs = 0;
  std::size_t n_votes = 0;
  double majority_accuracy = 0.0;
  double individual_accuracy = 0.0;
  std::vector<ModelAccuracy> models;

  nlohmann::json to_json() const;
};

/// Majority accuracy over pairs, individual accuracy over all votes, and for
/// each model the accuracy at its EER threshold computed on the plan's pairs.
/// Missing votes raise ValidationError listing the (rater, pair) gaps.
HumanEvalReport humaneval_report(
    const HumanEvalPlan& plan, const std::vector<HumanVote>& votes,
    const std::map<std::string, std::vector<verifier::ScoreRecord>>& model_scores);

void write_report(const HumanEvalReport& r, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);

/// Append-only CSV vote log (rater_id,pair_id,decision,timestamp). Each
/// record is flushed and fsync'd before record() returns. Opening replays
/// the log; a torn final line from a crash is ignored.
class VoteLog {
 public:
  explicit VoteLog(std::filesystem::path path);
  ~VoteLog();
  VoteLog(const VoteLog&) = delete;
  VoteLog& operator=(const VoteLog&) = delete;

  /// Throws ConflictError when (rater, pair) already has a vote.
  void record(const HumanVote& v);
  bool has(const std::string& rater, const std::string& pair) const;
  std::vector<HumanVote> votes() const;
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::vector<HumanVote> votes_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

std::vector<HumanVote> read_votes(const std::filesystem::path& path);
std::string votes_csv(const std::vector<HumanVote>& votes);
std::string now_timestamp();

/// Protocol state behind the HTTP service; thread-safe.
class Session {
 public:
  Session(HumanEvalPlan plan, std::filesystem::path vote_log);

  const HumanEvalPlan& plan() const { return plan_; }
  /// {"complete": false, "pair_id", "reference_url", "target_url", "position",
  /// "total"} or {"complete": true, ...}. NotFoundError for unknown raters.
  nlohmann::json next(const std::string& rater) const;
  /// NotFoundError for unknown raters or unassigned pairs, ConflictError for
  /// repeated votes.
  nlohmann::json vote(const std::string& rater, const std::string& pair_id, Decision d);
  nlohmann::json progress() const;
  std::string export_csv() const;
  /// Image file for (pair_id, "reference" | "target").
  std::filesystem::path image_path(const std::string& pair_id, const std::string& side) const;

 private:
  HumanEvalPlan plan_;
  VoteLog log_;
  std::vector<std::vector<std::size_t>> assignments_;
};

/// HTTP front end:
///   GET  /session/{rater}/next      next unvoted pair (no label)
///   POST /session/{rater}/vote      {"pair_id", "decision"}; 409 on repeats
///   GET  /progress                  vote counters
///   GET  /export                    votes CSV
///   GET  /image/{pair_id}/{side}    image bytes
///   GET  /                          static bundle, when configured
class Server {
 public:
  explicit Server(Session& session, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sigverify::humaneval
