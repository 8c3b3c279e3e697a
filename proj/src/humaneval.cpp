// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/humaneval.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "sigverify/csv.hpp"
#include "sigverify/error.hpp"
#include "sigverify/rng.hpp"

namespace sigverify::humaneval {

namespace fs = std::filesystem;
using json = nlohmann::json;
using dataset::Label;
using dataset::PairRecord;

std::string_view to_string(Decision d) { return d == Decision::same ? "same" : "different"; }

Decision parse_decision(std::string_view s) {
  if (s == "same") return Decision::same;
  if (s == "different") return Decision::different;
  throw ValidationError(fmt::format("decision must be 'same' or 'different', got '{}'", s));
}

// ---------------------------------------------------------------------- plan

std::vector<std::size_t> HumanEvalPlan::assignment(std::size_t rater_index) const {
  std::vector<std::size_t> out;
  for (int s : rater_subsets.at(rater_index)) {
    out.insert(out.end(), subsets.at(s).begin(), subsets.at(s).end());
  }
  return out;
}

std::optional<std::size_t> HumanEvalPlan::rater_index(const std::string& rater) const {
  auto it = std::find(raters.begin(), raters.end(), rater);
  if (it == raters.end()) return std::nullopt;
  return static_cast<std::size_t>(it - raters.begin());
}

std::optional<std::size_t> HumanEvalPlan::pair_index(const std::string& public_id) const {
  auto it = std::find(public_ids.begin(), public_ids.end(), public_id);
  if (it == public_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - public_ids.begin());
}

std::size_t HumanEvalPlan::per_rater() const {
  return raters.empty() ? 0 : total_votes() / raters.size();
}

namespace {

void check_counts(std::size_t n_pairs, int n_subsets, int rpp, std::size_t n_raters) {
  if (n_subsets < 1) throw ValidationError("n_subsets must be >= 1");
  if (rpp < 1) throw ValidationError("raters_per_pair must be >= 1");
  if (n_raters == 0) throw ValidationError("at least one rater is required");
  if (n_pairs == 0) throw ValidationError("a plan needs at least one pair");
  if (n_pairs % static_cast<std::size_t>(n_subsets) != 0) {
    throw ValidationError(fmt::format(
        "infeasible plan: |pairs| mod n_subsets = 0 violated ({} mod {} = {})", n_pairs,
        n_subsets, n_pairs % static_cast<std::size_t>(n_subsets)));
  }
  if (static_cast<std::size_t>(rpp) > n_raters) {
    throw ValidationError(fmt::format(
        "infeasible plan: raters_per_pair <= |raters| violated ({} > {})", rpp, n_raters));
  }
  const std::size_t slots = static_cast<std::size_t>(n_subsets) * rpp;
  if (slots % n_raters != 0) {
    throw ValidationError(fmt::format(
        "infeasible plan: |raters| * per_rater = |pairs| * raters_per_pair needs whole subsets "
        "per rater, but n_subsets * raters_per_pair = {} * {} = {} is not divisible by "
        "|raters| = {}",
        n_subsets, rpp, slots, n_raters));
  }
}

std::vector<std::size_t> sample(const std::vector<PairRecord>& pool, std::size_t n,
                                std::optional<double> match_fraction, std::mt19937_64& rng,
                                const char* name) {
  auto draw = [&](std::vector<std::size_t> idx, std::size_t k, const char* what) {
    if (idx.size() < k) {
      throw ValidationError(fmt::format("{} pool has {} {}pairs, {} required", name, idx.size(),
                                        what, k));
    }
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  };
  std::vector<std::size_t> all(pool.size());
  std::iota(all.begin(), all.end(), 0);
  if (!match_fraction) return draw(all, n, "");
  if (*match_fraction < 0.0 || *match_fraction > 1.0) {
    throw ValidationError("match_fraction must be in [0, 1]");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i : all) (pool[i].label == Label::match ? pos : neg).push_back(i);
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * *match_fraction));
  auto out = draw(pos, k, "matching ");
  auto rest = draw(neg, n - k, "non-matching ");
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

void HumanEvalPlan::validate() const {
  check_counts(pairs.size(), n_subsets, raters_per_pair, raters.size());
  if (public_ids.size() != pairs.size() || stamped.size() != pairs.size()) {
    throw ValidationError("plan arrays disagree in length");
  }
  if (std::set<std::string>(raters.begin(), raters.end()).size() != raters.size()) {
    throw ValidationError("rater ids must be unique");
  }
  if (subsets.size() != static_cast<std::size_t>(n_subsets)) {
    throw ValidationError("plan has the wrong number of subsets");
  }
  const std::size_t subset_size = pairs.size() / n_subsets;
  std::vector<int> seen(pairs.size(), 0);
  for (const auto& s : subsets) {
    if (s.size() != subset_size) throw ValidationError("subsets are not of equal size");
    for (std::size_t i : s) {
      if (i >= pairs.size() || seen[i]++) throw ValidationError("subsets do not partition the pairs");
    }
  }
  if (rater_subsets.size() != raters.size()) throw ValidationError("rater assignment missing");
  std::vector<std::set<std::size_t>> raters_of(pairs.size());
  std::vector<std::size_t> votes_of(pairs.size(), 0);
  for (std::size_t r = 0; r < raters.size(); ++r) {
    for (std::size_t i : assignment(r)) {
      raters_of[i].insert(r);
      ++votes_of[i];
    }
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (votes_of[i] != static_cast<std::size_t>(raters_per_pair) ||
        raters_of[i].size() != static_cast<std::size_t>(raters_per_pair)) {
      throw ValidationError(fmt::format("pair {} is assigned to {} raters, expected {}",
                                        public_ids[i], raters_of[i].size(), raters_per_pair));
    }
  }
  const std::size_t load = per_rater();
  for (std::size_t r = 0; r < raters.size(); ++r) {
    if (assignment(r).size() != load) {
      throw ValidationError(fmt::format("rater {} receives {} pairs, expected {}", raters[r],
                                        assignment(r).size(), load));
    }
  }
}

HumanEvalPlan plan_humaneval(const std::vector<PairRecord>& stamped_pool,
                             const std::vector<PairRecord>& unstamped_pool,
                             const std::vector<std::string>& raters, const PlanParams& p) {
  check_counts(p.n_stamped + p.n_unstamped, p.n_subsets, p.raters_per_pair, raters.size());
  std::mt19937_64 rng(p.seed);
  HumanEvalPlan plan;
  plan.n_subsets = p.n_subsets;
  plan.raters_per_pair = p.raters_per_pair;
  plan.raters = raters;
  plan.seed = p.seed;

  std::vector<std::pair<const PairRecord*, bool>> chosen;
  for (std::size_t i : sample(stamped_pool, p.n_stamped, p.match_fraction, rng, "stamped")) {
    chosen.push_back({&stamped_pool[i], true});
  }
  for (std::size_t i : sample(unstamped_pool, p.n_unstamped, p.match_fraction, rng, "unstamped")) {
    chosen.push_back({&unstamped_pool[i], false});
  }
  shuffle(chosen, rng);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (!ids.insert(chosen[i].first->pair_id).second) {
      throw ValidationError("pair id '" + chosen[i].first->pair_id + "' appears in both pools");
    }
    plan.pairs.push_back(*chosen[i].first);
    plan.stamped.push_back(chosen[i].second);
    plan.public_ids.push_back(fmt::format("hp-{:04d}", i + 1));
  }

  const std::size_t per_subset = plan.pairs.size() / p.n_subsets;
  for (int s = 0; s < p.n_subsets; ++s) {
    std::vector<std::size_t> idx(per_subset);
    std::iota(idx.begin(), idx.end(), static_cast<std::size_t>(s) * per_subset);
    plan.subsets.push_back(std::move(idx));
  }

  // Subset s fills rater slots s*rpp .. s*rpp+rpp-1, dealt cyclically over a
  // shuffled rater order; rpp <= |raters| keeps a subset's raters distinct.
  std::vector<std::size_t> order(raters.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  plan.rater_subsets.assign(raters.size(), {});
  for (int s = 0; s < p.n_subsets; ++s) {
    for (int j = 0; j < p.raters_per_pair; ++j) {
      const std::size_t slot = static_cast<std::size_t>(s) * p.raters_per_pair + j;
      plan.rater_subsets[order[slot % raters.size()]].push_back(s);
    }
  }
  plan.validate();
  return plan;
}

std::vector<std::string> default_raters(int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(fmt::format("r{:02d}", i));
  return out;
}

json HumanEvalPlan::to_json() const {
  json ps = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    ps.push_back({{"public_id", public_ids[i]},
                  {"pair_id", p.pair_id},
                  {"ref_path", p.ref_path},
                  {"target_path", p.target_path},
                  {"label", dataset::to_string(p.label)},
                  {"setup", dataset::to_string(p.setup)},
                  {"stamped", static_cast<bool>(stamped[i])}});
  }
  json rs = json::array();
  for (std::size_t r = 0; r < raters.size(); ++r) {
    rs.push_back({{"rater", raters[r]}, {"subsets", rater_subsets[r]}});
  }
  return json{{"n_subsets", n_subsets},
              {"raters_per_pair", raters_per_pair},
              {"seed", seed},
              {"pairs", std::move(ps)},
              {"subsets", subsets},
              {"raters", std::move(rs)}};
}

HumanEvalPlan HumanEvalPlan::from_json(const json& j) {
  HumanEvalPlan plan;
  try {
    plan.n_subsets = j.at("n_subsets");
    plan.raters_per_pair = j.at("raters_per_pair");
    plan.seed = j.value("seed", std::uint64_t{0});
    for (const auto& p : j.at("pairs")) {
      PairRecord r;
      r.pair_id = p.at("pair_id");
      r.ref_path = p.at("ref_path");
      r.target_path = p.at("target_path");
      r.label = dataset::parse_label(p.at("label").get<std::string>());
      r.setup = dataset::parse_setup(p.at("setup").get<std::string>());
      plan.pairs.push_back(std::move(r));
      plan.public_ids.push_back(p.at("public_id"));
      plan.stamped.push_back(p.at("stamped").get<bool>());
    }
    plan.subsets = j.at("subsets").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& r : j.at("raters")) {
      plan.raters.push_back(r.at("rater"));
      plan.rater_subsets.push_back(r.at("subsets").get<std::vector<int>>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad human-eval plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

// -------------------------------------------------------------------- voting

Decision majority_vote(std::span<const Decision> votes) {
  if (votes.empty() || votes.size() % 2 == 0) {
    throw ValidationError(fmt::format("majority vote needs an odd number of votes, got {}",
                                      votes.size()));
  }
  const auto same = std::count(votes.begin(), votes.end(), Decision::same);
  return 2 * static_cast<std::size_t>(same) > votes.size() ? Decision::same : Decision::different;
}

json HumanEvalReport::to_json() const {
  json ms = json::array();
  for (const auto& m : models) {
    ms.push_back({{"model", m.model},
                  {"eer", m.eer},
                  {"threshold", m.threshold},
                  {"accuracy", m.accuracy}});
  }
  return json{{"n_pairs", n_pairs},
              {"n_votes", n_votes},
              {"majority_accuracy", majority_accuracy},
              {"individual_accuracy", individual_accuracy},
              {"models", std::move(ms)}};
}

HumanEvalReport humaneval_report(
    const HumanEvalPlan& plan, const std::vector<HumanVote>& votes,
    const std::map<std::string, std::vector<verifier::ScoreRecord>>& model_scores) {
  plan.validate();
  std::map<std::pair<std::string, std::string>, Decision> by_key;
  for (const auto& v : votes) {
    const auto r = plan.rater_index(v.rater_id);
    const auto i = plan.pair_index(v.pair_id);
    if (!r || !i) {
      throw ValidationError(fmt::format("vote ({}, {}) is not part of the plan", v.rater_id,
                                        v.pair_id));
    }
    if (!by_key.emplace(std::make_pair(v.rater_id, v.pair_id), v.decision).second) {
      throw ValidationError(fmt::format("duplicate vote ({}, {})", v.rater_id, v.pair_id));
    }
  }

  std::vector<std::vector<Decision>> per_pair(plan.pairs.size());
  std::vector<std::string> gaps;
  std::size_t assigned = 0;
  for (std::size_t r = 0; r < plan.raters.size(); ++r) {
    for (std::size_t i : plan.assignment(r)) {
      ++assigned;
      auto it = by_key.find({plan.raters[r], plan.public_ids[i]});
      if (it == by_key.end()) {
        gaps.push_back(fmt::format("({}, {})", plan.raters[r], plan.public_ids[i]));
      } else {
        per_pair[i].push_back(it->second);
      }
    }
  }
  if (!gaps.empty()) {
    const std::size_t shown = std::min<std::size_t>(gaps.size(), 20);
    throw ValidationError(fmt::format(
        "{} votes missing: {}{}", gaps.size(),
        fmt::join(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(shown), ", "),
        gaps.size() > shown ? ", ..." : ""));
  }
  if (by_key.size() != assigned) throw ValidationError("votes for unassigned (rater, pair) combinations");

  HumanEvalReport rep;
  rep.n_pairs = plan.pairs.size();
  rep.n_votes = assigned;
  std::size_t majority_ok = 0, individual_ok = 0;
  for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
    const Decision truth =
        plan.pairs[i].label == Label::match ? Decision::same : Decision::different;
    if (majority_vote(per_pair[i]) == truth) ++majority_ok;
    individual_ok += static_cast<std::size_t>(std::count(per_pair[i].begin(), per_pair[i].end(), truth));
  }
  rep.majority_accuracy = static_cast<double>(majority_ok) / static_cast<double>(rep.n_pairs);
  rep.individual_accuracy = static_cast<double>(individual_ok) / static_cast<double>(rep.n_votes);

  for (const auto& [name, scores] : model_scores) {
    std::map<std::string, const verifier::ScoreRecord*> by_id;
    for (const auto& s : scores) by_id[s.pair_id] = &s;
    std::vector<verifier::ScoreRecord> subset;
    std::vector<std::string> missing;
    for (const auto& p : plan.pairs) {
      auto it = by_id.find(p.pair_id);
      if (it == by_id.end()) {
        missing.push_back(p.pair_id);
      } else {
        subset.push_back(*it->second);
      }
    }
    if (!missing.empty()) {
      throw ValidationError(fmt::format("model {} has no score for {} planned pairs, e.g. {}", name,
                                        missing.size(), missing.front()));
    }
    // The threshold is fitted on the same pairs it is scored on, by design.
    const auto eer = verifier::compute_eer_global(subset);
    rep.models.push_back({name, eer.eer, eer.threshold,
                          verifier::accuracy_at_threshold(subset, eer.threshold)});
  }
  return rep;
}

void write_report(const HumanEvalReport& r, const fs::path& json_path, const fs::path& csv_path) {
  {
    std::ofstream os(json_path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + json_path.string());
    os << r.to_json().dump(2) << '\n';
  }
  std::vector<csv::Row> rows{
      {"human_majority", fmt::format("{:.2f}", 100.0 * r.majority_accuracy)},
      {"human_individual", fmt::format("{:.2f}", 100.0 * r.individual_accuracy)}};
  for (const auto& m : r.models) {
    rows.push_back({"model:" + m.model, fmt::format("{:.2f}", 100.0 * m.accuracy)});
  }
  csv::write(csv_path, {"evaluator", "accuracy_percent"}, rows);
}

// ------------------------------------------------------------------ vote log

namespace {

const csv::Row kVoteHeader{"rater_id", "pair_id", "decision", "timestamp"};

std::vector<HumanVote> parse_votes(std::string_view text, const std::string& origin) {
  std::vector<HumanVote> out;
  if (text.empty()) return out;
  const auto table = csv::parse(text);
  if (table.header != kVoteHeader) throw LoadError(origin + ": not a vote log");
  const auto cr = table.column("rater_id"), cp = table.column("pair_id"),
             cd = table.column("decision"), ct = table.column("timestamp");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    try {
      out.push_back({row.at(cr), row.at(cp), parse_decision(row.at(cd)), row.at(ct)});
    } catch (const std::exception& e) {
      throw LoadError(fmt::format("{}:{}: bad vote record", origin, table.lines[i]));
    }
  }
  return out;
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed on " + path.string() + ": " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

std::string votes_csv(const std::vector<HumanVote>& votes) {
  std::string out = csv::format_row(kVoteHeader) + "\n";
  for (const auto& v : votes) {
    out += csv::format_row({v.rater_id, v.pair_id, std::string(to_string(v.decision)), v.timestamp});
    out += '\n';
  }
  return out;
}

std::vector<HumanVote> read_votes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_votes(ss.str(), path.string());
}

std::string now_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  return fmt::format("{}.{:03d}Z", buf, static_cast<int>(ms));
}

VoteLog::VoteLog(fs::path path) : path_(std::move(path)) {
  std::string text;
  if (fs::exists(path_)) {
    std::ifstream is(path_, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  // Drop a torn trailing record: only newline-terminated lines were acknowledged.
  const auto last_nl = text.rfind('\n');
  const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
  const bool torn = keep != text.size();
  text.resize(keep);
  votes_ = parse_votes(text, path_.string());
  for (std::size_t i = 0; i < votes_.size(); ++i) {
    if (!index_.emplace(std::make_pair(votes_[i].rater_id, votes_[i].pair_id), i).second) {
      throw LoadError(fmt::format("{}: duplicate vote ({}, {})", path_.string(),
                                  votes_[i].rater_id, votes_[i].pair_id));
    }
  }
  if (!path_.parent_path().empty()) fs::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open vote log " + path_.string() + ": " + std::strerror(errno));
  if (torn && ::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
    throw IoError("cannot repair vote log " + path_.string());
  }
  if (keep == 0) {
    if (::ftruncate(fd_, 0) != 0) throw IoError("cannot reset vote log " + path_.string());
    write_all(fd_, csv::format_row(kVoteHeader) + "\n", path_);
    ::fsync(fd_);
  }
}

VoteLog::~VoteLog() {
  if (fd_ >= 0) ::close(fd_);
}

void VoteLog::record(const HumanVote& v) {
  std::lock_guard lock(mu_);
  const auto key = std::make_pair(v.rater_id, v.pair_id);
  if (index_.count(key)) {
    throw ConflictError(fmt::format("vote for ({}, {}) already recorded", v.rater_id, v.pair_id));
  }
  write_all(fd_,
            csv::format_row({v.rater_id, v.pair_id, std::string(to_string(v.decision)), v.timestamp}) +
                "\n",
            path_);
  if (::fsync(fd_) != 0) throw IoError("fsync failed on " + path_.string());
  index_.emplace(key, votes_.size());
  votes_.push_back(v);
}

bool VoteLog::has(const std::string& rater, const std::string& pair) const {
  std::lock_guard lock(mu_);
  return index_.count({rater, pair}) != 0;
}

std::vector<HumanVote> VoteLog::votes() const {
  std::lock_guard lock(mu_);
  return votes_;
}

std::size_t VoteLog::size() const {
  std::lock_guard lock(mu_);
  return votes_.size();
}

// ------------------------------------------------------------------- session

Session::Session(HumanEvalPlan plan, fs::path vote_log)
    : plan_(std::move(plan)), log_(std::move(vote_log)) {
  plan_.validate();
  for (std::size_t r = 0; r < plan_.raters.size(); ++r) assignments_.push_back(plan_.assignment(r));
  for (const auto& v : log_.votes()) {
    const auto r = plan_.rater_index(v.rater_id);
    const auto i = plan_.pair_index(v.pair_id);
    if (!r || !i ||
        std::find(assignments_[*r].begin(), assignments_[*r].end(), *i) == assignments_[*r].end()) {
      throw LoadError(fmt::format("vote log entry ({}, {}) does not belong to this plan",
                                  v.rater_id, v.pair_id));
    }
  }
}

json Session::next(const std::string& rater) const {
  const auto r = plan_.rater_index(rater);
  if (!r) throw NotFoundError("unknown rater '" + rater + "'");
  const auto& items = assignments_[*r];
  std::size_t cast = 0;
  std::optional<std::size_t> pending;
  for (std::size_t i : items) {
    if (log_.has(rater, plan_.public_ids[i])) {
      ++cast;
    } else if (!pending) {
      pending = i;
    }
  }
  json j{{"rater", rater}, {"votes_cast", cast}, {"total", items.size()}};
  if (!pending) {
    j["complete"] = true;
    return j;
  }
  const std::string& id = plan_.public_ids[*pending];
  j["complete"] = false;
  j["pair_id"] = id;
  j["position"] = cast + 1;
  j["reference_url"] = "/image/" + id + "/reference";
  j["target_url"] = "/image/" + id + "/target";
  return j;
}

json Session::vote(const std::string& rater, const std::string& pair_id, Decision d) {
  const auto r = plan_.rater_index(rater);
  if (!r) throw NotFoundError("unknown rater '" + rater + "'");
  const auto i = plan_.pair_index(pair_id);
  const auto& items = assignments_[*r];
  if (!i || std::find(items.begin(), items.end(), *i) == items.end()) {
    throw NotFoundError("pair '" + pair_id + "' is not assigned to rater '" + rater + "'");
  }
  log_.record({rater, pair_id, d, now_timestamp()});
  std::size_t cast = 0;
  for (std::size_t k : items) cast += log_.has(rater, plan_.public_ids[k]) ? 1 : 0;
  return json{{"recorded", true},
              {"rater", rater},
              {"pair_id", pair_id},
              {"votes_cast", cast},
              {"total", items.size()}};
}

json Session::progress() const {
  json raters = json::array();
  std::size_t total_cast = 0;
  for (std::size_t r = 0; r < plan_.raters.size(); ++r) {
    std::size_t cast = 0;
    for (std::size_t i : assignments_[r]) cast += log_.has(plan_.raters[r], plan_.public_ids[i]) ? 1 : 0;
    total_cast += cast;
    raters.push_back({{"rater", plan_.raters[r]},
                      {"votes_cast", cast},
                      {"total", assignments_[r].size()},
                      {"complete", cast == assignments_[r].size()}});
  }
  return json{{"votes_cast", total_cast},
              {"total_votes", plan_.total_votes()},
              {"complete", total_cast == plan_.total_votes()},
              {"raters", std::move(raters)}};
}

std::string Session::export_csv() const { return votes_csv(log_.votes()); }

fs::path Session::image_path(const std::string& pair_id, const std::string& side) const {
  const auto i = plan_.pair_index(pair_id);
  if (!i) throw NotFoundError("unknown pair '" + pair_id + "'");
  if (side == "reference") return plan_.pairs[*i].ref_path;
  if (side == "target") return plan_.pairs[*i].target_path;
  throw NotFoundError("unknown image side '" + side + "'");
}

}  // namespace sigverify::humaneval
