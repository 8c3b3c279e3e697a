// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "sigverify/csv.hpp"
#include "sigverify/dataset.hpp"
#include "sigverify/error.hpp"
#include "tempdir.hpp"

using namespace sigverify;
using namespace sigverify::dataset;
using sigverify::testing::TempDir;

namespace {

/// Manifest with n_per_user[i] images for user "u<i>", no files on disk.
DatasetManifest synthetic_manifest(const std::vector<int>& n_per_user,
                                   Source source = Source::unknown) {
  DatasetManifest m;
  m.dataset_name = "synthetic";
  for (std::size_t u = 0; u < n_per_user.size(); ++u) {
    for (int k = 0; k < n_per_user[u]; ++k) {
      m.entries.push_back({fmt::format("/data/u{:02d}/{:03d}.png", u, k),
                           fmt::format("u{:02d}", u), source, std::nullopt});
    }
  }
  return m;
}

void touch_image(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  imaging::PixelMatrix px = imaging::PixelMatrix::Constant(4, 6, 1.0);
  px(1, 2) = 0.0;
  imaging::save_signature(imaging::SignatureImage::from_pixels(px), p);
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

std::map<std::string, std::string> user_of(const DatasetManifest& m) {
  std::map<std::string, std::string> out;
  for (const auto& e : m.entries) out[e.path] = e.user_id;
  return out;
}

}  // namespace

TEST_CASE("positive pair count equals the brute-force same-user count") {
  const std::vector<int> sizes{5, 1, 3, 7, 2, 4};
  const auto m = synthetic_manifest(sizes);
  const auto users = m.users();
  const auto pairs = generate_pairs(m, users, 42);

  // Oracle: every unordered pair of distinct entries, counted if same user.
  std::size_t expected = 0;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    for (std::size_t j = i + 1; j < m.entries.size(); ++j)
      if (m.entries[i].user_id == m.entries[j].user_id) ++expected;
  REQUIRE(expected == 10 + 0 + 3 + 21 + 1 + 6);

  std::size_t pos = 0, neg = 0;
  const auto owner = user_of(m);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    const bool same = owner.at(p.ref_path) == owner.at(p.target_path);
    CHECK(p.ref_path != p.target_path);
    CHECK(same == (p.label == Label::match));
    (p.label == Label::match ? pos : neg)++;
    auto key = std::minmax(p.ref_path, p.target_path);
    CHECK(seen.insert({key.first, key.second}).second);
  }
  CHECK(pos == expected);
  CHECK(neg == pos);
}

TEST_CASE("pairs only use test users") {
  const auto m = synthetic_manifest({3, 3, 3, 3});
  const std::vector<std::string> test{"u01", "u03"};
  const auto owner = user_of(m);
  for (const auto& p : generate_pairs(m, test, 9)) {
    CHECK((owner.at(p.ref_path) == "u01" || owner.at(p.ref_path) == "u03"));
    CHECK((owner.at(p.target_path) == "u01" || owner.at(p.target_path) == "u03"));
  }
}

TEST_CASE("two users with two signatures each") {
  const auto m = synthetic_manifest({2, 2});
  const auto pairs = generate_pairs(m, m.users(), 5);
  REQUIRE(pairs.size() == 4);
  const auto owner = user_of(m);
  std::set<std::pair<std::string, std::string>> cross;
  for (const auto& a : m.entries)
    for (const auto& b : m.entries)
      if (a.user_id < b.user_id) cross.insert({a.path, b.path});
  REQUIRE(cross.size() == 4);
  int negatives = 0;
  for (const auto& p : pairs) {
    if (p.label == Label::mismatch) {
      ++negatives;
      auto key = std::minmax(p.ref_path, p.target_path);
      CHECK(cross.count({key.first, key.second}) == 1);
    }
  }
  CHECK(negatives == 2);
}

TEST_CASE("pair generation is deterministic under the seed") {
  const auto m = synthetic_manifest({4, 4, 4, 4, 4});
  const auto a = generate_pairs(m, m.users(), 17);
  const auto b = generate_pairs(m, m.users(), 17);
  const auto c = generate_pairs(m, m.users(), 18);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].pair_id == b[i].pair_id);
    CHECK(a[i].ref_path == b[i].ref_path);
    CHECK(a[i].target_path == b[i].target_path);
    differs |= a[i].target_path != c[i].target_path || a[i].ref_path != c[i].ref_path;
  }
  CHECK(differs);
}

TEST_CASE("pair generation errors") {
  CHECK_THROWS_AS(generate_pairs(synthetic_manifest({1, 1, 1}), {"u00", "u01", "u02"}, 1),
                  ValidationError);
  CHECK_THROWS_AS(generate_pairs(synthetic_manifest({3, 3}), {}, 1), ValidationError);
  // One user: positives exist but there are no cross-user pairs.
  CHECK_THROWS_AS(generate_pairs(synthetic_manifest({3}), {"u00"}, 1), ValidationError);
}

TEST_CASE("verification user split is disjoint over many seeds") {
  const auto m = synthetic_manifest(std::vector<int>(20, 2));
  const auto all = m.users();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto s = split_verification_users(m, 14, seed);
    REQUIRE(s.train.size() == 14);
    REQUIRE(s.test.size() == 6);
    std::set<std::string> train(s.train.begin(), s.train.end());
    std::set<std::string> uni = train;
    for (const auto& u : s.test) {
      REQUIRE(train.count(u) == 0);
      uni.insert(u);
    }
    REQUIRE(uni == std::set<std::string>(all.begin(), all.end()));
  }
}

TEST_CASE("five users with two training users") {
  const auto m = synthetic_manifest({2, 2, 2, 2, 2});
  const auto s = split_verification_users(m, 2, 3);
  CHECK(s.train.size() == 2);
  CHECK(s.test.size() == 3);
  CHECK(s.val.empty());
}

TEST_CASE("verification split errors") {
  const auto m = synthetic_manifest({2, 2, 2});
  CHECK_THROWS_AS(split_verification_users(m, 0, 1), ValidationError);
  CHECK_THROWS_AS(split_verification_users(m, 3, 1), ValidationError);
  CHECK_THROWS_AS(split_verification_users(m, 7, 1), ValidationError);
  CHECK_THROWS_AS(split_verification_users(m, -1, 1), ValidationError);
}

TEST_CASE("representation split of 100 images is 70/15/15") {
  const auto m = synthetic_manifest({20, 20, 20, 20, 20});
  const auto s = split_representation(m, {0.7, 0.15, 0.15}, 11);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 15);
  CHECK(s.test.size() == 15);
  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 100);

  const auto again = split_representation(m, {0.7, 0.15, 0.15}, 11);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);

  const auto by_user = split_representation(m, {0.6, 0.2, 0.2}, 11, SplitUnit::user);
  CHECK(by_user.train.size() == 3);
  CHECK(by_user.val.size() == 1);
  CHECK(by_user.test.size() == 1);
}

TEST_CASE("representation split errors") {
  CHECK_THROWS_AS(split_representation(synthetic_manifest({3, 3}), {0.7, 0.15, 0.15}, 1),
                  ValidationError);
  CHECK_THROWS_AS(split_representation(synthetic_manifest({3, 3, 3}), {0.7, 0.2, 0.2}, 1),
                  ValidationError);
  CHECK_THROWS_AS(split_representation(synthetic_manifest({3, 3, 3}), {1.2, -0.1, -0.1}, 1),
                  ValidationError);
}

TEST_CASE("split files round-trip") {
  TempDir dir("split");
  const auto m = synthetic_manifest({2, 2, 2, 2});
  const auto s = split_verification_users(m, 2, 99);
  write_split(s, dir / "split.json");
  const auto r = read_split(dir / "split.json");
  CHECK(r.seed == 99);
  CHECK(r.unit == SplitUnit::user);
  CHECK(r.n_train_users == std::optional<std::size_t>(2));
  CHECK(r.train == s.train);
  CHECK(r.test == s.test);

  write_text(dir / "bad.json", "{\"seed\": 1}");
  CHECK_THROWS_AS(read_split(dir / "bad.json"), ValidationError);
  CHECK_THROWS_AS(read_split(dir / "missing.json"), IoError);
}

TEST_CASE("manifest from user directories") {
  TempDir dir("manifest");
  touch_image(dir / "alice/reference/a1.png");
  touch_image(dir / "alice/target_stamped/a2.png");
  touch_image(dir / "bob/b1.png");
  touch_image(dir / "bob/b2.tif");
  write_text(dir / "bob/notes.txt", "ignored");
  const auto m = build_manifest(dir.path(), Layout::user_dirs);
  REQUIRE(m.entries.size() == 4);
  CHECK(m.users() == std::vector<std::string>{"alice", "bob"});
  const auto* a1 = m.find((dir / "alice/reference/a1.png").string());
  REQUIRE(a1 != nullptr);
  CHECK(a1->source == Source::reference);
  CHECK(a1->has_stamp == std::optional<bool>(false));
  const auto* a2 = m.find((dir / "alice/target_stamped/a2.png").string());
  REQUIRE(a2 != nullptr);
  CHECK(a2->has_stamp == std::optional<bool>(true));
  CHECK(m.find((dir / "bob/b1.png").string())->source == Source::unknown);

  write_manifest(m, dir / "manifest.csv");
  const auto r = read_manifest(dir / "manifest.csv");
  REQUIRE(r.entries.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.entries[i].path == m.entries[i].path);
    CHECK(r.entries[i].user_id == m.entries[i].user_id);
    CHECK(r.entries[i].source == m.entries[i].source);
    CHECK(r.entries[i].has_stamp == m.entries[i].has_stamp);
  }

  const auto img = load_entry(*a2);
  CHECK(img.user_id == "alice");
  CHECK(img.source == Source::target_stamped);
}

TEST_CASE("manifest errors") {
  TempDir dir("manifest_err");
  CHECK_THROWS_AS(build_manifest(dir / "nope", Layout::user_dirs), IoError);
  std::filesystem::create_directories(dir / "empty_user");
  CHECK_THROWS_AS(build_manifest(dir.path(), Layout::user_dirs), ValidationError);
  CHECK_THROWS_AS(build_manifest(dir.path(), Layout::annotation), IoError);
  CHECK_THROWS_AS(parse_layout("flat"), ValidationError);

  write_text(dir / "dup.csv", "path,user_id,source,has_stamp\n/x.png,a,unknown,\n/x.png,b,unknown,\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.csv"), ValidationError);
  write_text(dir / "flag.csv", "path,user_id,source,has_stamp\n/x.png,a,unknown,maybe\n");
  CHECK_THROWS_AS(read_manifest(dir / "flag.csv"), ValidationError);
}

TEST_CASE("tobacco-style annotation with exclusions") {
  TempDir dir("tobacco");
  touch_image(dir / "crops/doc1_sig1.png");
  touch_image(dir / "crops/doc1_sig2.png");
  touch_image(dir / "crops/doc2_sig1.png");
  touch_image(dir / "crops/doc3_sig1.png");
  touch_image(dir / "crops/doc4_sig1.png");
  write_text(dir / "annotations.txt",
             "# crop, writer\n"
             "crops/doc1_sig1.png, w001\n"
             "crops/doc1_sig2.png, w001\n"
             "crops/doc2_sig1.png  w002\n"
             "\n"
             "crops/doc3_sig1.png, w002\n"
             "crops/doc4_sig1.png, w003\n");
  write_text(dir / "exclusions.txt", "crops/doc4_sig1.png\n");
  const auto m = build_manifest(dir.path(), Layout::tobacco800);
  CHECK(m.dataset_name == "tobacco800");
  REQUIRE(m.entries.size() == 4);
  CHECK(m.users() == std::vector<std::string>{"w001", "w002"});
  CHECK(m.find((dir / "crops/doc4_sig1.png").string()) == nullptr);

  const auto pairs = generate_pairs(m, m.users(), 1);
  CHECK(pairs.size() == 4);
  CHECK(pairs.front().setup == Setup::tobacco);
  CHECK(pairs.front().pair_id == "tobacco-000001");

  SUBCASE("unparsable line names its line number") {
    write_text(dir / "annotations.txt", "crops/doc1_sig1.png, w001\njust-one-field\n");
    try {
      build_manifest(dir.path(), Layout::annotation);
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("missing annotated file") {
    write_text(dir / "annotations.txt", "crops/none.png w9\n");
    CHECK_THROWS_AS(build_manifest(dir.path(), Layout::annotation), ValidationError);
  }
}

namespace {

struct RecordingCleaner : ImageCleaner {
  std::vector<std::string> calls;
  std::string cleaned_path(const std::string& path) override {
    calls.push_back(path);
    return path + ".clean.png";
  }
};

/// Three users, each with 2 references, 2 unstamped and 2 stamped targets.
DatasetManifest three_source_manifest() {
  DatasetManifest m;
  for (int u = 0; u < 3; ++u) {
    for (int k = 0; k < 2; ++k) {
      m.entries.push_back({fmt::format("/d/u{}/ref{}.png", u, k), fmt::format("u{}", u),
                           Source::reference, false});
      m.entries.push_back({fmt::format("/d/u{}/tu{}.png", u, k), fmt::format("u{}", u),
                           Source::target_unstamped, false});
      m.entries.push_back({fmt::format("/d/u{}/ts{}.png", u, k), fmt::format("u{}", u),
                           Source::target_stamped, true});
    }
  }
  return m;
}

}  // namespace

TEST_CASE("reference pairs and setup routing") {
  const auto m = three_source_manifest();
  const auto unstamped = generate_reference_pairs(m, m.users(), Source::target_unstamped, 3);
  const auto stamped = generate_reference_pairs(m, m.users(), Source::target_stamped, 3);
  // 3 users x 2 refs x 2 targets positives, as many negatives.
  CHECK(unstamped.size() == 24);
  CHECK(stamped.size() == 24);
  std::vector<PairRecord> all = unstamped;
  all.insert(all.end(), stamped.begin(), stamped.end());
  for (const auto& p : all) CHECK(m.find(p.ref_path)->source == Source::reference);

  RecordingCleaner cleaner;

  const auto s1 = assemble_setup(all, Setup::S1, m, nullptr);
  CHECK(s1.size() == 24);
  for (const auto& p : s1) CHECK(m.find(p.target_path)->source == Source::target_unstamped);

  const auto s3 = assemble_setup(all, Setup::S3, m, nullptr);
  CHECK(s3.size() == 24);
  for (const auto& p : s3) CHECK(m.find(p.target_path)->source == Source::target_stamped);

  const auto s4 = assemble_setup(all, Setup::S4, m, &cleaner);
  CHECK(cleaner.calls.size() == 24);
  for (std::size_t i = 0; i < s4.size(); ++i) {
    CHECK(s4[i].ref_path == s3[i].ref_path);
    CHECK(s4[i].target_path == s3[i].target_path + ".clean.png");
    CHECK(s4[i].label == s3[i].label);
    CHECK(s4[i].setup == Setup::S4);
  }

  cleaner.calls.clear();
  const auto s5 = assemble_setup(all, Setup::S5, m, &cleaner);
  CHECK(cleaner.calls.size() == 48);
  for (std::size_t i = 0; i < s5.size(); ++i) {
    CHECK(s5[i].ref_path == s3[i].ref_path + ".clean.png");
    CHECK(s5[i].target_path == s3[i].target_path + ".clean.png");
  }

  const auto s2 = assemble_setup(all, Setup::S2, m, &cleaner);
  for (std::size_t i = 0; i < s2.size(); ++i) {
    CHECK(s2[i].ref_path == s1[i].ref_path + ".clean.png");
    CHECK(s2[i].target_path == s1[i].target_path + ".clean.png");
  }

  CHECK_THROWS_AS(assemble_setup(all, Setup::S4, m, nullptr), ValidationError);
  CHECK_THROWS_AS(assemble_setup(unstamped, Setup::S3, m, nullptr), ValidationError);
  CHECK_THROWS_AS(assemble_setup(all, Setup::tobacco, m, nullptr), ValidationError);
}

TEST_CASE("pair files round-trip") {
  TempDir dir("pairs");
  const auto m = synthetic_manifest({3, 2, 2});
  auto pairs = generate_pairs(m, m.users(), 4, Setup::S1);
  pairs[0].ref_path = "/with,comma/\"quoted\".png";
  write_pairs(pairs, dir / "pairs.csv");
  const auto r = read_pairs(dir / "pairs.csv");
  REQUIRE(r.size() == pairs.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r[i].pair_id == pairs[i].pair_id);
    CHECK(r[i].ref_path == pairs[i].ref_path);
    CHECK(r[i].target_path == pairs[i].target_path);
    CHECK(r[i].label == pairs[i].label);
    CHECK(r[i].setup == Setup::S1);
  }
  write_text(dir / "bad.csv", "pair_id,ref_path,target_path,label,setup\nx,a,b,same,S1\n");
  CHECK_THROWS_AS(read_pairs(dir / "bad.csv"), ValidationError);
}

TEST_CASE("csv parser") {
  const auto t = csv::parse("a,b\n1,\"x,\"\"y\"\"\"\n\"multi\nline\",2\n");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,\"y\"");
  CHECK(t.rows[1][0] == "multi\nline");
  CHECK(t.lines[1] == 3);
  CHECK_THROWS_AS(csv::parse("a,b\n1,2,3\n"), ValidationError);
  CHECK_THROWS_AS(t.column("c"), ValidationError);
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a\"b") == "\"a\"\"b\"");
}
