// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <set>
#include <thread>

// Library headers before httplib (see humaneval_server.cpp).
#include "sigverify/csv.hpp"
#include "sigverify/error.hpp"
#include "sigverify/humaneval.hpp"
#include "tempdir.hpp"

#include <httplib.h>

using namespace sigverify;
using namespace sigverify::humaneval;
using dataset::Label;
using dataset::PairRecord;
using sigverify::testing::TempDir;
using json = nlohmann::json;

namespace {

std::vector<PairRecord> make_pool(const std::string& tag, std::size_t n, const std::string& dir = "/nonexistent") {
  std::vector<PairRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    PairRecord p;
    p.pair_id = tag + "-" + std::to_string(i);
    p.ref_path = dir + "/" + tag + "_" + std::to_string(i) + "_ref.png";
    p.target_path = dir + "/" + tag + "_" + std::to_string(i) + "_tgt.png";
    p.label = i % 2 == 0 ? Label::match : Label::mismatch;
    out.push_back(p);
  }
  return out;
}

Decision truth(const PairRecord& p) {
  return p.label == Label::match ? Decision::same : Decision::different;
}

Decision flip(Decision d) { return d == Decision::same ? Decision::different : Decision::same; }

/// Brute-force recount of a plan from its rater assignments alone.
void check_plan_counts(const HumanEvalPlan& plan, std::size_t n_pairs, int rpp) {
  REQUIRE(plan.pairs.size() == n_pairs);
  std::vector<std::set<std::size_t>> raters_of(n_pairs);
  std::size_t votes = 0;
  std::set<std::size_t> loads;
  for (std::size_t r = 0; r < plan.raters.size(); ++r) {
    const auto a = plan.assignment(r);
    loads.insert(a.size());
    for (std::size_t i : a) {
      CHECK(raters_of[i].insert(r).second);
      ++votes;
    }
  }
  for (const auto& s : raters_of) CHECK(s.size() == static_cast<std::size_t>(rpp));
  CHECK(votes == n_pairs * static_cast<std::size_t>(rpp));
  CHECK(loads.size() == 1);
  CHECK(*loads.begin() * plan.raters.size() == votes);
  std::set<std::string> ids(plan.public_ids.begin(), plan.public_ids.end());
  CHECK(ids.size() == n_pairs);
}

}  // namespace

TEST_CASE("default plan: 360 pairs, 6 subsets, 18 raters x 60, 3 votes each") {
  const auto st = make_pool("st", 400), un = make_pool("un", 400);
  const auto plan = plan_humaneval(st, un, default_raters(18), PlanParams{});
  CHECK(plan.pairs.size() == 360);
  CHECK(plan.subsets.size() == 6);
  for (const auto& s : plan.subsets) CHECK(s.size() == 60);
  CHECK(plan.per_rater() == 60);
  CHECK(plan.total_votes() == 1080);
  CHECK(std::count(plan.stamped.begin(), plan.stamped.end(), true) == 180);
  check_plan_counts(plan, 360, 3);
  // Public ids carry no trace of the source pair id.
  for (const auto& id : plan.public_ids) CHECK(id.rfind("hp-", 0) == 0);
}

TEST_CASE("2 subsets, 2 raters per pair, 4 raters: 20 pairs each") {
  const auto st = make_pool("st", 30), un = make_pool("un", 30);
  PlanParams p;
  p.n_stamped = 20;
  p.n_unstamped = 20;
  p.n_subsets = 2;
  p.raters_per_pair = 2;
  const auto plan = plan_humaneval(st, un, default_raters(4), p);
  check_plan_counts(plan, 40, 2);
  for (std::size_t r = 0; r < 4; ++r) CHECK(plan.assignment(r).size() == 20);
}

TEST_CASE("random feasible configurations satisfy the counting invariants") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 300 && checked < 60; ++trial) {
    const int subsets = 1 + static_cast<int>(rng() % 6);
    const int rpp = 1 + static_cast<int>(rng() % 4);
    const std::size_t n_raters = 1 + rng() % 12;
    const std::size_t per_subset = 1 + rng() % 5;
    const std::size_t n = per_subset * static_cast<std::size_t>(subsets);
    if (static_cast<std::size_t>(rpp) > n_raters) continue;
    if ((static_cast<std::size_t>(subsets) * rpp) % n_raters != 0) continue;
    PlanParams p;
    p.n_stamped = n / 2;
    p.n_unstamped = n - n / 2;
    p.n_subsets = subsets;
    p.raters_per_pair = rpp;
    p.seed = rng();
    const auto plan = plan_humaneval(make_pool("a", n), make_pool("b", n), default_raters(static_cast<int>(n_raters)), p);
    check_plan_counts(plan, n, rpp);
    // Same seed, same plan.
    CHECK(plan_humaneval(make_pool("a", n), make_pool("b", n), default_raters(static_cast<int>(n_raters)), p).to_json() ==
          plan.to_json());
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("infeasible plans quote the violated condition") {
  const auto st = make_pool("st", 50), un = make_pool("un", 50);
  PlanParams p;
  p.n_stamped = 10;
  p.n_unstamped = 11;
  p.n_subsets = 2;
  CHECK_THROWS_WITH_AS(plan_humaneval(st, un, default_raters(6), p),
                       doctest::Contains("|pairs| mod n_subsets = 0"), ValidationError);
  p.n_unstamped = 10;
  p.raters_per_pair = 5;
  CHECK_THROWS_WITH_AS(plan_humaneval(st, un, default_raters(4), p),
                       doctest::Contains("raters_per_pair <= |raters|"), ValidationError);
  p.raters_per_pair = 3;
  CHECK_THROWS_WITH_AS(plan_humaneval(st, un, default_raters(4), p),
                       doctest::Contains("|raters| * per_rater = |pairs| * raters_per_pair"),
                       ValidationError);
  p.n_stamped = 60;
  CHECK_THROWS_AS(plan_humaneval(st, un, default_raters(6), p), ValidationError);
}

TEST_CASE("plan json round trip") {
  PlanParams p;
  p.n_stamped = 6;
  p.n_unstamped = 6;
  p.n_subsets = 3;
  p.raters_per_pair = 2;
  p.match_fraction = 0.5;
  p.seed = 5;
  const auto plan = plan_humaneval(make_pool("s", 10), make_pool("u", 10), default_raters(6), p);
  CHECK(std::count_if(plan.pairs.begin(), plan.pairs.end(),
                      [](const auto& q) { return q.label == Label::match; }) == 6);
  const auto back = HumanEvalPlan::from_json(plan.to_json());
  CHECK(back.to_json() == plan.to_json());
  auto broken = plan.to_json();
  broken["raters"][0]["subsets"] = json::array();
  CHECK_THROWS_AS(HumanEvalPlan::from_json(broken), ValidationError);
}

TEST_CASE("majority vote truth table over three raters") {
  const Decision S = Decision::same, D = Decision::different;
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<Decision> v;
    int same = 0;
    for (int b = 0; b < 3; ++b) {
      const bool s = (mask >> b) & 1;
      v.push_back(s ? S : D);
      same += s;
    }
    CHECK(majority_vote(v) == (same >= 2 ? S : D));
  }
  CHECK(majority_vote(std::vector<Decision>{D}) == D);
  CHECK_THROWS_AS(majority_vote(std::vector<Decision>{S, D}), ValidationError);
  CHECK_THROWS_AS(majority_vote(std::vector<Decision>{}), ValidationError);
}

TEST_CASE("report arithmetic against hand counts") {
  PlanParams p;
  p.n_stamped = 6;
  p.n_unstamped = 6;
  p.n_subsets = 2;
  p.raters_per_pair = 3;
  p.seed = 1;
  const auto plan = plan_humaneval(make_pool("s", 12), make_pool("u", 12), default_raters(3), p);
  REQUIRE(plan.total_votes() == 36);

  auto votes_with = [&](auto decide) {
    std::vector<HumanVote> out;
    for (std::size_t r = 0; r < plan.raters.size(); ++r) {
      for (std::size_t i : plan.assignment(r)) {
        out.push_back({plan.raters[r], plan.public_ids[i], decide(r, i), "t"});
      }
    }
    return out;
  };

  SUBCASE("everyone right") {
    const auto rep = humaneval_report(plan, votes_with([&](std::size_t, std::size_t i) { return truth(plan.pairs[i]); }), {});
    CHECK(rep.n_pairs == 12);
    CHECK(rep.n_votes == 36);
    CHECK(rep.majority_accuracy == 1.0);
    CHECK(rep.individual_accuracy == 1.0);
  }
  SUBCASE("one rater always wrong") {
    const auto rep = humaneval_report(
        plan, votes_with([&](std::size_t r, std::size_t i) {
          return r == 0 ? flip(truth(plan.pairs[i])) : truth(plan.pairs[i]);
        }),
        {});
    CHECK(rep.majority_accuracy == 1.0);
    CHECK(rep.individual_accuracy == doctest::Approx(24.0 / 36.0));
  }
  SUBCASE("two raters wrong flips every majority") {
    const auto rep = humaneval_report(
        plan, votes_with([&](std::size_t r, std::size_t i) {
          return r < 2 ? flip(truth(plan.pairs[i])) : truth(plan.pairs[i]);
        }),
        {});
    CHECK(rep.majority_accuracy == 0.0);
    CHECK(rep.individual_accuracy == doctest::Approx(12.0 / 36.0));
  }
  SUBCASE("model accuracy at its own EER threshold") {
    std::vector<verifier::ScoreRecord> scores;
    for (const auto& q : plan.pairs) {
      scores.push_back(verifier::ScoreRecord::make(q.pair_id, q.label == Label::match ? 0.9 : 0.1, q.label));
    }
    const auto rep = humaneval_report(
        plan, votes_with([&](std::size_t, std::size_t i) { return truth(plan.pairs[i]); }), {{"m", scores}});
    REQUIRE(rep.models.size() == 1);
    CHECK(rep.models[0].eer == 0.0);
    CHECK(rep.models[0].accuracy == 1.0);
    scores.pop_back();
    CHECK_THROWS_AS(humaneval_report(plan,
                                     votes_with([&](std::size_t, std::size_t i) { return truth(plan.pairs[i]); }),
                                     {{"m", scores}}),
                    ValidationError);
  }
  SUBCASE("missing votes are listed") {
    auto v = votes_with([&](std::size_t, std::size_t i) { return truth(plan.pairs[i]); });
    const HumanVote gone = v.back();
    v.pop_back();
    const std::string gap = "(" + gone.rater_id + ", " + gone.pair_id + ")";
    CHECK_THROWS_WITH_AS(humaneval_report(plan, v, {}), doctest::Contains(gap.c_str()),
                         ValidationError);
  }
}

TEST_CASE("vote log replays, repairs a torn tail and rejects repeats") {
  TempDir dir("votelog");
  const auto path = dir / "votes.csv";
  {
    VoteLog log(path);
    log.record({"r01", "hp-0001", Decision::same, "t1"});
    log.record({"r02", "hp-0001", Decision::different, "t2"});
    CHECK_THROWS_AS(log.record({"r01", "hp-0001", Decision::different, "t3"}), ConflictError);
    CHECK(log.size() == 2);
  }
  {
    std::ofstream os(path, std::ios::app);
    os << "r03,hp-00";  // crash mid-write
  }
  {
    VoteLog log(path);
    CHECK(log.size() == 2);
    CHECK(log.has("r02", "hp-0001"));
    log.record({"r03", "hp-0002", Decision::same, "t4"});
  }
  const auto v = read_votes(path);
  REQUIRE(v.size() == 3);
  CHECK(v[2].rater_id == "r03");
  CHECK(v[1].decision == Decision::different);
  {
    std::ofstream os(path, std::ios::app);
    os << "r03,hp-0002,same,t5\n";
  }
  CHECK_THROWS_AS(VoteLog{path}, LoadError);
}

namespace {

struct ServiceFixture {
  TempDir dir{"humeval"};
  HumanEvalPlan plan;
  std::unique_ptr<Session> session;
  std::unique_ptr<Server> server;
  std::thread thread;
  int port = 0;

  ServiceFixture(std::size_t n_pairs, int n_raters, int rpp, int subsets) {
    const auto images = dir / "img";
    std::filesystem::create_directories(images);
    auto st = make_pool("s", n_pairs, images.string());
    auto un = make_pool("u", n_pairs, images.string());
    for (const auto* pool : {&st, &un}) {
      for (const auto& p : *pool) {
        std::ofstream(p.ref_path) << "REF:" << p.pair_id;
        std::ofstream(p.target_path) << "TGT:" << p.pair_id;
      }
    }
    PlanParams pp;
    pp.n_stamped = n_pairs / 2;
    pp.n_unstamped = n_pairs - n_pairs / 2;
    pp.n_subsets = subsets;
    pp.raters_per_pair = rpp;
    pp.seed = 3;
    plan = plan_humaneval(st, un, default_raters(n_raters), pp);
    session = std::make_unique<Session>(plan, dir / "votes.csv");
    server = std::make_unique<Server>(*session);
    port = server->bind("127.0.0.1", 0);
    thread = std::thread([this] { server->listen(); });
  }
  ~ServiceFixture() {
    server->stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5);
    c.set_read_timeout(10);
    return c;
  }
};

httplib::Result post_vote(httplib::Client& c, const std::string& rater, const std::string& pair,
                          const std::string& decision) {
  return c.Post("/session/" + rater + "/vote", json{{"pair_id", pair}, {"decision", decision}}.dump(),
                "application/json");
}

}  // namespace

TEST_CASE("http service walks a rater through the protocol") {
  ServiceFixture f(8, 2, 1, 2);
  auto c = f.client();
  const std::string rater = f.plan.raters[0];
  const std::size_t total = f.plan.assignment(0).size();
  REQUIRE(total == 4);

  std::set<std::string> seen;
  for (std::size_t k = 0; k < total; ++k) {
    auto r = c.Get("/session/" + rater + "/next");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto j = json::parse(r->body);
    CHECK(j["complete"] == false);
    CHECK(j["position"] == k + 1);
    // Nothing that would reveal the answer.
    CHECK(r->body.find("label") == std::string::npos);
    CHECK(r->body.find("match") == std::string::npos);
    const std::string id = j["pair_id"];
    CHECK(seen.insert(id).second);

    auto img = c.Get(j["reference_url"].get<std::string>());
    REQUIRE(img);
    CHECK(img->status == 200);
    CHECK(img->get_header_value("Content-Type") == "image/png");
    CHECK(img->body.rfind("REF:", 0) == 0);

    auto v = post_vote(c, rater, id, k % 2 ? "same" : "different");
    REQUIRE(v);
    CHECK(v->status == 200);
    auto again = post_vote(c, rater, id, "same");
    REQUIRE(again);
    CHECK(again->status == 409);
  }
  auto done = c.Get("/session/" + rater + "/next");
  REQUIRE(done);
  CHECK(json::parse(done->body)["complete"] == true);

  // Errors: unknown rater, pair not assigned to this rater, malformed body.
  CHECK(c.Get("/session/nobody/next")->status == 404);
  const std::string other_rater = f.plan.raters[1];
  const auto other = f.plan.public_ids[f.plan.assignment(1)[0]];
  CHECK(post_vote(c, rater, other, "same")->status == 404);
  CHECK(post_vote(c, other_rater, other, "maybe")->status == 400);
  CHECK(c.Post("/session/" + other_rater + "/vote", "{not json", "application/json")->status == 400);
  CHECK(c.Get("/image/hp-9999/reference")->status == 404);
  CHECK(c.Get("/image/" + other + "/sideways")->status == 404);

  auto prog = c.Get("/progress");
  REQUIRE(prog);
  const auto pj = json::parse(prog->body);
  CHECK(pj["votes_cast"] == 4);
  CHECK(pj["total_votes"] == 8);
  CHECK(pj["complete"] == false);

  auto exp = c.Get("/export");
  REQUIRE(exp);
  CHECK(exp->get_header_value("Content-Type").rfind("text/csv", 0) == 0);
  const auto table = csv::parse(exp->body);
  CHECK(table.header == csv::Row{"rater_id", "pair_id", "decision", "timestamp"});
  CHECK(table.rows.size() == 4);
  std::set<std::string> exported;
  for (const auto& row : table.rows) {
    CHECK(row[0] == rater);
    CHECK(exported.insert(row[1]).second);
  }
  CHECK(exported == seen);
}

TEST_CASE("concurrent raters: every vote recorded exactly once") {
  ServiceFixture f(24, 6, 3, 4);
  std::atomic<int> ok{0}, conflicts{0}, other{0};
  std::vector<std::thread> workers;
  // Two clients per rater race on the same assignment.
  for (const auto& rater : f.plan.raters) {
    for (int dup = 0; dup < 2; ++dup) {
      workers.emplace_back([&, rater] {
        auto c = f.client();
        for (int guard = 0; guard < 100; ++guard) {
          auto r = c.Get("/session/" + rater + "/next");
          if (!r || r->status != 200) {
            ++other;
            return;
          }
          const auto j = json::parse(r->body);
          if (j["complete"]) return;
          auto v = post_vote(c, rater, j["pair_id"], "same");
          if (!v) {
            ++other;
          } else if (v->status == 200) {
            ++ok;
          } else if (v->status == 409) {
            ++conflicts;
          } else {
            ++other;
          }
        }
      });
    }
  }
  for (auto& w : workers) w.join();
  CHECK(other == 0);
  CHECK(ok == static_cast<int>(f.plan.total_votes()));
  const auto votes = read_votes(f.dir / "votes.csv");
  CHECK(votes.size() == f.plan.total_votes());
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& v : votes) CHECK(keys.insert({v.rater_id, v.pair_id}).second);
  const auto prog = json::parse(f.client().Get("/progress")->body);
  CHECK(prog["complete"] == true);
  // The report can be built from the exported log.
  CHECK_NOTHROW(humaneval_report(f.plan, votes, {}));
}
