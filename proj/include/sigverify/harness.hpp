// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment grid: verification setups x backbone models -> EER table.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigverify/backbone.hpp"
#include "sigverify/dataset.hpp"
#include "sigverify/verifier.hpp"

namespace sigverify::harness {

struct GridModel {
  /// Column name in the result table.
  std::string name;
  /// Backbone checkpoint directory (used by the CLI to load the model).
  std::filesystem::path checkpoint;
};

struct ExperimentGrid {
  std::vector<dataset::Setup> setups;
  std::vector<GridModel> models;
  /// Negative-sampling seeds; each cell is evaluated once per seed.
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir;

  /// Inputs read by the CLI; empty when the caller supplies them directly.
  std::filesystem::path manifest;
  std::filesystem::path split;
  std::optional<std::filesystem::path> cleaner;

  void validate() const;
  nlohmann::json to_json() const;
  /// Relative paths are resolved against `base`.
  static ExperimentGrid from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

struct CellResult {
  dataset::Setup setup = dataset::Setup::S1;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t n_pairs = 0;
  std::size_t n_matches = 0;
  verifier::EerResult eer{};
  double auc = 0.0;
  std::filesystem::path roc_json;
  std::filesystem::path roc_png;
  std::filesystem::path scores_csv;
};

struct GridReport {
  std::vector<CellResult> cells;
  /// Setups as rows, models as columns, mean EER over seeds.
  std::filesystem::path table_csv;
  std::filesystem::path cells_csv;

  const CellResult* find(dataset::Setup s, const std::string& model, std::uint64_t seed) const;
};

/// Pairs for one setup: reference-vs-target pairs routed through the cleaner
/// for S1..S5, all-pairs generation for tobacco.
std::vector<dataset::PairRecord> setup_pairs(dataset::Setup setup, const dataset::DatasetManifest& m,
                                             const std::vector<std::string>& test_users,
                                             std::uint64_t seed, dataset::ImageCleaner* cleaner);

/// Evaluates every (setup, model, seed) cell and writes per-cell scores,
/// ROC JSON and ROC PNG under grid.output_dir plus the summary tables.
/// A grid model absent from `backbones` raises ValidationError naming the
/// cells that cannot be evaluated.
GridReport run_grid(const ExperimentGrid& grid, const dataset::DatasetManifest& m,
                    const std::vector<std::string>& test_users, dataset::ImageCleaner* cleaner,
                    const std::map<std::string, const backbone::BackboneModel*>& backbones);

}  // namespace sigverify::harness
