// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sigverify/csv.hpp"
#include "sigverify/error.hpp"
#include "sigverify/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sigverify::dataset {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" ||
         ext == ".tiff" || ext == ".bmp";
}

std::optional<bool> stamp_flag_for(Source s) {
  switch (s) {
    case Source::target_stamped: return true;
    case Source::reference:
    case Source::target_unstamped: return false;
    case Source::unknown: return std::nullopt;
  }
  return std::nullopt;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

DatasetManifest scan_user_dirs(const fs::path& root) {
  DatasetManifest m;
  std::vector<fs::path> user_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) user_dirs.push_back(e.path());
  }
  std::sort(user_dirs.begin(), user_dirs.end());
  for (const auto& dir : user_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ManifestEntry entry;
      entry.path = f.lexically_normal().string();
      entry.user_id = dir.filename().string();
      for (const auto& part : f.lexically_relative(dir).parent_path()) {
        try {
          entry.source = imaging::parse_source(part.string());
        } catch (const ValidationError&) {
        }
      }
      entry.has_stamp = stamp_flag_for(entry.source);
      m.entries.push_back(std::move(entry));
    }
  }
  return m;
}

std::set<std::string> read_exclusions(const fs::path& root) {
  std::set<std::string> out;
  std::ifstream is(root / "exclusions.txt");
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    out.insert(fs::path(line).lexically_normal().string());
  }
  return out;
}

DatasetManifest scan_annotations(const fs::path& root) {
  const fs::path ann = root / "annotations.txt";
  std::ifstream is(ann);
  if (!is) throw IoError("missing annotation file " + ann.string());
  const auto excluded = read_exclusions(root);
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = split_fields(t);
    if (fields.size() < 2 || fields.size() > 3) {
      throw ValidationError(fmt::format("{}:{}: unparsable annotation line '{}'",
                                        ann.string(), lineno, t));
    }
    const std::string rel = fs::path(fields[0]).lexically_normal().string();
    if (excluded.count(rel)) continue;
    ManifestEntry e;
    e.path = (root / rel).lexically_normal().string();
    e.user_id = fields[1];
    if (fields.size() == 3) {
      try {
        e.source = imaging::parse_source(fields[2]);
      } catch (const ValidationError&) {
        throw ValidationError(fmt::format("{}:{}: unparsable annotation line '{}'",
                                          ann.string(), lineno, t));
      }
    }
    e.has_stamp = stamp_flag_for(e.source);
    if (!fs::exists(e.path)) {
      throw ValidationError(fmt::format("{}:{}: annotated image not found: {}",
                                        ann.string(), lineno, e.path));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::size_t count_for_ratio(double r, std::size_t n) {
  return static_cast<std::size_t>(std::llround(r * static_cast<double>(n)));
}

std::string pair_id(Setup tag, std::size_t index) {
  return fmt::format("{}-{:06d}", to_string(tag), index);
}

}  // namespace

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.user_id.empty()) {
      throw ValidationError("manifest entry with empty user_id: " + e.path);
    }
    if (!seen.insert(e.path).second) {
      throw ValidationError("duplicate image path in manifest: " + e.path);
    }
  }
}

std::vector<std::string> DatasetManifest::users() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.user_id);
  return {s.begin(), s.end()};
}

std::map<std::string, std::vector<std::size_t>> DatasetManifest::by_user() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < entries.size(); ++i) out[entries[i].user_id].push_back(i);
  return out;
}

const ManifestEntry* DatasetManifest::find(std::string_view path) const {
  for (const auto& e : entries) {
    if (e.path == path) return &e;
  }
  return nullptr;
}

Layout parse_layout(std::string_view s) {
  if (s == "user_dirs") return Layout::user_dirs;
  if (s == "annotation") return Layout::annotation;
  if (s == "tobacco800") return Layout::tobacco800;
  throw ValidationError("unknown layout '" + std::string(s) + "'");
}

DatasetManifest build_manifest(const fs::path& root, Layout layout,
                               std::string dataset_name) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  DatasetManifest m = layout == Layout::user_dirs ? scan_user_dirs(root)
                                                  : scan_annotations(root);
  if (m.entries.empty()) {
    throw ValidationError("no signature images found under " + root.string());
  }
  if (dataset_name.empty()) {
    dataset_name = layout == Layout::tobacco800 ? "tobacco800"
                                                : root.filename().string();
  }
  m.dataset_name = std::move(dataset_name);
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::vector<csv::Row> rows;
  rows.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    rows.push_back({e.path, e.user_id, std::string(imaging::to_string(e.source)),
                    e.has_stamp ? (*e.has_stamp ? "true" : "false") : ""});
  }
  csv::write(path, {"path", "user_id", "source", "has_stamp"}, rows);
}

DatasetManifest read_manifest(const fs::path& path) {
  const auto t = csv::read(path);
  const auto ip = t.column("path");
  const auto iu = t.column("user_id");
  const auto is = t.column("source");
  const auto ih = t.column("has_stamp");
  DatasetManifest m;
  m.dataset_name = path.stem().string();
  const fs::path base = path.parent_path();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ManifestEntry e;
    fs::path p(row[ip]);
    e.path = (p.is_relative() && !base.empty() ? base / p : p).lexically_normal().string();
    e.user_id = row[iu];
    e.source = imaging::parse_source(row[is]);
    if (row[ih] == "true") {
      e.has_stamp = true;
    } else if (row[ih] == "false") {
      e.has_stamp = false;
    } else if (!row[ih].empty()) {
      throw ValidationError(fmt::format("{}:{}: has_stamp must be true, false or empty",
                                        path.string(), t.lines[r]));
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

imaging::SignatureImage load_entry(const ManifestEntry& e, imaging::PolarityHint hint) {
  auto img = imaging::load_signature(e.path, hint);
  img.user_id = e.user_id;
  if (e.source != Source::unknown) img.source = e.source;
  return img;
}

SplitSpec split_representation(const DatasetManifest& m, std::array<double, 3> ratios,
                               std::uint64_t seed, SplitUnit unit) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError(fmt::format("split ratios sum to {}, expected 1", sum));
  }
  for (double r : ratios) {
    if (r < 0.0) throw ValidationError("split ratios must be non-negative");
  }
  if (m.users().size() < 3) {
    throw ValidationError("representation split needs at least 3 users");
  }
  std::vector<std::string> items;
  if (unit == SplitUnit::image) {
    for (const auto& e : m.entries) items.push_back(e.path);
    std::sort(items.begin(), items.end());
  } else {
    items = m.users();
  }
  std::mt19937_64 rng(seed);
  shuffle(items, rng);
  const std::size_t n = items.size();
  const std::size_t n_train = std::min(n, count_for_ratio(ratios[0], n));
  const std::size_t n_val = std::min(n - n_train, count_for_ratio(ratios[1], n));
  SplitSpec s;
  s.unit = unit;
  s.seed = seed;
  s.ratios = ratios;
  s.train.assign(items.begin(), items.begin() + n_train);
  s.val.assign(items.begin() + n_train, items.begin() + n_train + n_val);
  s.test.assign(items.begin() + n_train + n_val, items.end());
  return s;
}

SplitSpec split_verification_users(const DatasetManifest& m, long long n_train_users,
                                   std::uint64_t seed) {
  if (n_train_users <= 0) {
    throw ValidationError("n_train_users must be positive");
  }
  auto users = m.users();
  if (static_cast<std::size_t>(n_train_users) >= users.size()) {
    throw ValidationError(fmt::format("n_train_users ({}) must be below the user count ({})",
                                      n_train_users, users.size()));
  }
  std::mt19937_64 rng(seed);
  shuffle(users, rng);
  SplitSpec s;
  s.unit = SplitUnit::user;
  s.seed = seed;
  s.n_train_users = static_cast<std::size_t>(n_train_users);
  s.train.assign(users.begin(), users.begin() + n_train_users);
  s.test.assign(users.begin() + n_train_users, users.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void write_split(const SplitSpec& s, const fs::path& path) {
  json j;
  j["seed"] = s.seed;
  j["unit"] = s.unit == SplitUnit::image ? "image" : "user";
  if (s.ratios) j["ratios"] = *s.ratios;
  if (s.n_train_users) j["counts"] = {{"train_users", *s.n_train_users}};
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

SplitSpec read_split(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  json j;
  try {
    is >> j;
    SplitSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.unit = j.value("unit", "user") == "image" ? SplitUnit::image : SplitUnit::user;
    if (j.contains("ratios")) s.ratios = j["ratios"].get<std::array<double, 3>>();
    if (j.contains("counts")) s.n_train_users = j["counts"].at("train_users").get<std::size_t>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.value("val", std::vector<std::string>{});
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError("bad split file " + path.string() + ": " + e.what());
  }
}

std::string_view to_string(Label l) { return l == Label::match ? "match" : "mismatch"; }

std::string_view to_string(Setup s) {
  switch (s) {
    case Setup::S1: return "S1";
    case Setup::S2: return "S2";
    case Setup::S3: return "S3";
    case Setup::S4: return "S4";
    case Setup::S5: return "S5";
    case Setup::tobacco: return "tobacco";
  }
  return "tobacco";
}

Label parse_label(std::string_view s) {
  if (s == "match") return Label::match;
  if (s == "mismatch") return Label::mismatch;
  throw ValidationError("unknown label '" + std::string(s) + "'");
}

Setup parse_setup(std::string_view s) {
  for (Setup v : {Setup::S1, Setup::S2, Setup::S3, Setup::S4, Setup::S5, Setup::tobacco}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown setup '" + std::string(s) + "'");
}

Source target_source_for(Setup s) {
  switch (s) {
    case Setup::S1:
    case Setup::S2: return Source::target_unstamped;
    case Setup::S3:
    case Setup::S4:
    case Setup::S5: return Source::target_stamped;
    case Setup::tobacco: return Source::unknown;
  }
  return Source::unknown;
}

bool cleans_reference(Setup s) { return s == Setup::S2 || s == Setup::S5; }
bool cleans_target(Setup s) { return s == Setup::S2 || s == Setup::S4 || s == Setup::S5; }

std::vector<PairRecord> generate_pairs(const DatasetManifest& m,
                                       const std::vector<std::string>& test_users,
                                       std::uint64_t neg_seed, Setup tag) {
  if (test_users.empty()) throw ValidationError("generate_pairs: no test users");
  const std::set<std::string> wanted(test_users.begin(), test_users.end());
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (wanted.count(m.entries[i].user_id)) pool.push_back(i);
  }
  std::vector<PairRecord> out;
  for (const auto& [user, idx] : m.by_user()) {
    if (!wanted.count(user)) continue;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        out.push_back({"", m.entries[idx[a]].path, m.entries[idx[b]].path,
                       Label::match, tag});
      }
    }
  }
  if (out.empty()) {
    throw ValidationError("generate_pairs: no test user has two or more signatures");
  }
  std::vector<std::pair<std::size_t, std::size_t>> cross;
  for (std::size_t a = 0; a < pool.size(); ++a) {
    for (std::size_t b = a + 1; b < pool.size(); ++b) {
      if (m.entries[pool[a]].user_id != m.entries[pool[b]].user_id) {
        cross.emplace_back(pool[a], pool[b]);
      }
    }
  }
  const std::size_t n_pos = out.size();
  if (cross.size() < n_pos) {
    throw ValidationError(fmt::format("only {} cross-user pairs for {} positives",
                                      cross.size(), n_pos));
  }
  std::mt19937_64 rng(neg_seed);
  for (std::size_t k = 0; k < n_pos; ++k) {
    const std::size_t j = k + uniform_index(rng, cross.size() - k);
    std::swap(cross[k], cross[j]);
    out.push_back({"", m.entries[cross[k].first].path, m.entries[cross[k].second].path,
                   Label::mismatch, tag});
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].pair_id = pair_id(tag, i + 1);
  return out;
}

std::vector<PairRecord> generate_reference_pairs(const DatasetManifest& m,
                                                 const std::vector<std::string>& test_users,
                                                 Source target_source, std::uint64_t neg_seed,
                                                 std::optional<std::size_t> n_negatives) {
  if (test_users.empty()) throw ValidationError("generate_reference_pairs: no test users");
  const std::set<std::string> wanted(test_users.begin(), test_users.end());
  std::vector<std::size_t> refs, targets;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (!wanted.count(e.user_id)) continue;
    if (e.source == Source::reference) refs.push_back(i);
    if (e.source == target_source) targets.push_back(i);
  }
  const Setup tag = target_source == Source::target_stamped ? Setup::S3 : Setup::S1;
  std::vector<PairRecord> out;
  std::vector<std::pair<std::size_t, std::size_t>> cross;
  for (std::size_t r : refs) {
    for (std::size_t t : targets) {
      if (m.entries[r].user_id == m.entries[t].user_id) {
        out.push_back({"", m.entries[r].path, m.entries[t].path, Label::match, tag});
      } else {
        cross.emplace_back(r, t);
      }
    }
  }
  if (out.empty()) {
    throw ValidationError("generate_reference_pairs: no same-user reference/target pairs");
  }
  const std::size_t n_neg = n_negatives.value_or(out.size());
  if (cross.size() < n_neg) {
    throw ValidationError(fmt::format("only {} cross-user pairs for {} negatives",
                                      cross.size(), n_neg));
  }
  std::mt19937_64 rng(neg_seed);
  for (std::size_t k = 0; k < n_neg; ++k) {
    const std::size_t j = k + uniform_index(rng, cross.size() - k);
    std::swap(cross[k], cross[j]);
    out.push_back({"", m.entries[cross[k].first].path, m.entries[cross[k].second].path,
                   Label::mismatch, tag});
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].pair_id = pair_id(tag, i + 1);
  return out;
}

std::vector<PairRecord> assemble_setup(const std::vector<PairRecord>& pairs, Setup setup,
                                       const DatasetManifest& m, ImageCleaner* cleaner) {
  if (setup == Setup::tobacco) {
    throw ValidationError("assemble_setup expects one of S1..S5");
  }
  const bool clean_ref = cleans_reference(setup);
  const bool clean_target = cleans_target(setup);
  if ((clean_ref || clean_target) && cleaner == nullptr) {
    throw ValidationError(fmt::format("setup {} requires a cleaner", to_string(setup)));
  }
  const Source want = target_source_for(setup);
  std::vector<PairRecord> out;
  for (const auto& p : pairs) {
    const ManifestEntry* target = m.find(p.target_path);
    if (target == nullptr || target->source != want) continue;
    PairRecord q = p;
    q.setup = setup;
    if (clean_ref) q.ref_path = cleaner->cleaned_path(p.ref_path);
    if (clean_target) q.target_path = cleaner->cleaned_path(p.target_path);
    out.push_back(std::move(q));
  }
  if (out.empty()) {
    throw ValidationError(fmt::format("setup {} needs {} targets; none found in the pairs",
                                      to_string(setup), imaging::to_string(want)));
  }
  return out;
}

void write_pairs(const std::vector<PairRecord>& pairs, const fs::path& path) {
  std::vector<csv::Row> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) {
    rows.push_back({p.pair_id, p.ref_path, p.target_path, std::string(to_string(p.label)),
                    std::string(to_string(p.setup))});
  }
  csv::write(path, {"pair_id", "ref_path", "target_path", "label", "setup"}, rows);
}

std::vector<PairRecord> read_pairs(const fs::path& path) {
  const auto t = csv::read(path);
  const auto ii = t.column("pair_id");
  const auto ir = t.column("ref_path");
  const auto it = t.column("target_path");
  const auto il = t.column("label");
  const auto is = t.column("setup");
  std::vector<PairRecord> out;
  for (const auto& row : t.rows) {
    out.push_back({row[ii], row[ir], row[it], parse_label(row[il]), parse_setup(row[is])});
  }
  return out;
}

}  // namespace sigverify::dataset
