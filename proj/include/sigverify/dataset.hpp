// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Dataset manifests, writer-independent splits and verification pairs.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sigverify/imaging.hpp"

namespace sigverify::dataset {

using imaging::Source;

struct ManifestEntry {
  std::string path;
  std::string user_id;
  Source source = Source::unknown;
  std::optional<bool> has_stamp;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<ManifestEntry> entries;

  /// Rejects duplicate paths and empty user ids.
  void validate() const;
  /// Sorted distinct user ids.
  std::vector<std::string> users() const;
  /// Entry indices per user, in manifest order.
  std::map<std::string, std::vector<std::size_t>> by_user() const;
  const ManifestEntry* find(std::string_view path) const;
};

/// user_dirs: <root>/<user>/[<source>/]<image>; a directory level named after
///            a source ("reference", "target_stamped", ...) sets the source.
/// annotation: <root>/annotations.txt with "<relative path> <user>" lines
///            (whitespace or comma separated, '#' comments); optional
///            <root>/exclusions.txt lists relative paths to drop.
/// tobacco800: the annotation format over the cleaned Tobacco-800 signature
///            crops, with the exclusion list of mislabeled/unidentified crops.
enum class Layout { user_dirs, annotation, tobacco800 };
Layout parse_layout(std::string_view s);

DatasetManifest build_manifest(const std::filesystem::path& root, Layout layout,
                               std::string dataset_name = {});

/// CSV with header path,user_id,source,has_stamp.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads an entry's image with the manifest's metadata applied.
imaging::SignatureImage load_entry(const ManifestEntry& e,
                                   imaging::PolarityHint hint = imaging::PolarityHint::original);

enum class SplitUnit { image, user };

/// Either a representation split (three ratio-sized parts) or a verification
/// split (n_train_users train users, the rest test users, val empty). Items
/// are image paths for SplitUnit::image and user ids for SplitUnit::user.
struct SplitSpec {
  SplitUnit unit = SplitUnit::image;
  std::uint64_t seed = 0;
  std::optional<std::array<double, 3>> ratios;
  std::optional<std::size_t> n_train_users;
  std::vector<std::string> train, val, test;
};

/// Random 70/15/15-style split; deterministic under seed. With
/// SplitUnit::image the manifest's images are split (users may appear in
/// several parts); with SplitUnit::user whole users are.
SplitSpec split_representation(const DatasetManifest& m,
                               std::array<double, 3> ratios, std::uint64_t seed,
                               SplitUnit unit = SplitUnit::image);

/// Writer-disjoint train/test user split. Requires 0 < n_train_users < #users.
SplitSpec split_verification_users(const DatasetManifest& m, long long n_train_users,
                                   std::uint64_t seed);

void write_split(const SplitSpec& s, const std::filesystem::path& path);
SplitSpec read_split(const std::filesystem::path& path);

enum class Label { match, mismatch };
enum class Setup { S1, S2, S3, S4, S5, tobacco };

std::string_view to_string(Label l);
std::string_view to_string(Setup s);
Label parse_label(std::string_view s);
Setup parse_setup(std::string_view s);
/// Target source a setup draws its pairs from (tobacco: unknown).
Source target_source_for(Setup s);
bool cleans_reference(Setup s);
bool cleans_target(Setup s);

struct PairRecord {
  std::string pair_id;
  std::string ref_path;
  std::string target_path;
  Label label = Label::mismatch;
  Setup setup = Setup::tobacco;
};

/// All unordered same-user pairs among the test users' images
/// (sum over users of C(n_u, 2)) plus an equal number of cross-user pairs
/// sampled uniformly without replacement over all test users.
std::vector<PairRecord> generate_pairs(const DatasetManifest& m,
                                       const std::vector<std::string>& test_users,
                                       std::uint64_t neg_seed,
                                       Setup tag = Setup::tobacco);

/// Reference-vs-target pairs: every same-user (reference, target) combination
/// with the given target source, plus `n_negatives` (default: as many as
/// positives) cross-user combinations sampled without replacement.
std::vector<PairRecord> generate_reference_pairs(
    const DatasetManifest& m, const std::vector<std::string>& test_users,
    Source target_source, std::uint64_t neg_seed,
    std::optional<std::size_t> n_negatives = std::nullopt);

/// Maps an image path to the path of its cleaned variant, producing the
/// variant on first use.
class ImageCleaner {
 public:
  virtual ~ImageCleaner() = default;
  virtual std::string cleaned_path(const std::string& path) = 0;
};

/// Routes pairs into one of the five verification setups:
///   S1 reference / unstamped target      S2 both cleaned (unstamped target)
///   S3 reference / stamped target        S4 cleaned stamped target
///   S5 both cleaned (stamped target)
/// Pairs whose target does not have the setup's target source are dropped.
std::vector<PairRecord> assemble_setup(const std::vector<PairRecord>& pairs, Setup setup,
                                       const DatasetManifest& m, ImageCleaner* cleaner);

/// CSV with header pair_id,ref_path,target_path,label,setup.
void write_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path);
std::vector<PairRecord> read_pairs(const std::filesystem::path& path);

}  // namespace sigverify::dataset
