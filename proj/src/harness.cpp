// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/harness.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "sigverify/csv.hpp"
#include "sigverify/error.hpp"

namespace sigverify::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;
using dataset::Setup;

void ExperimentGrid::validate() const {
  if (setups.empty()) throw ValidationError("experiment grid needs at least one setup");
  if (models.empty()) throw ValidationError("experiment grid needs at least one model");
  if (seeds.empty()) throw ValidationError("experiment grid needs at least one seed");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (m.name.empty()) throw ValidationError("grid model without a name");
    if (!names.insert(m.name).second) {
      throw ValidationError("duplicate grid model name '" + m.name + "'");
    }
  }
  std::set<Setup> seen;
  for (Setup s : setups) {
    if (!seen.insert(s).second) {
      throw ValidationError(fmt::format("duplicate setup {}", dataset::to_string(s)));
    }
  }
}

json ExperimentGrid::to_json() const {
  json j;
  j["setups"] = json::array();
  for (Setup s : setups) j["setups"].push_back(dataset::to_string(s));
  j["models"] = json::array();
  for (const auto& m : models) {
    j["models"].push_back({{"name", m.name}, {"checkpoint", m.checkpoint.string()}});
  }
  j["seeds"] = seeds;
  j["output_dir"] = output_dir.string();
  if (!manifest.empty()) j["manifest"] = manifest.string();
  if (!split.empty()) j["split"] = split.string();
  if (cleaner) j["cleaner"] = cleaner->string();
  return j;
}

ExperimentGrid ExperimentGrid::from_json(const json& j, const fs::path& base) {
  static const std::set<std::string> kKeys{"setups", "models",   "seeds", "output_dir",
                                           "manifest", "split", "cleaner"};
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw ValidationError("unknown grid key '" + k + "'");
  }
  auto resolve = [&](const std::string& p) -> fs::path {
    fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
  };
  ExperimentGrid g;
  try {
    for (const auto& s : j.at("setups")) g.setups.push_back(dataset::parse_setup(s.get<std::string>()));
    for (const auto& m : j.at("models")) {
      GridModel gm;
      gm.name = m.at("name").get<std::string>();
      if (m.contains("checkpoint")) gm.checkpoint = resolve(m["checkpoint"].get<std::string>());
      g.models.push_back(std::move(gm));
    }
    if (j.contains("seeds")) g.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    g.output_dir = resolve(j.value("output_dir", std::string("results")));
    if (j.contains("manifest")) g.manifest = resolve(j["manifest"].get<std::string>());
    if (j.contains("split")) g.split = resolve(j["split"].get<std::string>());
    if (j.contains("cleaner")) g.cleaner = resolve(j["cleaner"].get<std::string>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad experiment grid: ") + e.what());
  }
  g.validate();
  return g;
}

const CellResult* GridReport::find(Setup s, const std::string& model, std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.setup == s && c.model == model && c.seed == seed) return &c;
  }
  return nullptr;
}

std::vector<dataset::PairRecord> setup_pairs(Setup setup, const dataset::DatasetManifest& m,
                                             const std::vector<std::string>& test_users,
                                             std::uint64_t seed, dataset::ImageCleaner* cleaner) {
  if (setup == Setup::tobacco) return dataset::generate_pairs(m, test_users, seed, Setup::tobacco);
  auto pairs =
      dataset::generate_reference_pairs(m, test_users, dataset::target_source_for(setup), seed);
  return dataset::assemble_setup(pairs, setup, m, cleaner);
}

namespace {

void ensure_features(const backbone::BackboneModel& model, FeatureCache& cache,
                     const std::vector<dataset::PairRecord>& pairs) {
  for (const auto& p : pairs) {
    for (const std::string* path : {&p.ref_path, &p.target_path}) {
      if (cache.contains(*path)) continue;
      const auto img = imaging::load_signature(*path);
      try {
        cache.put(*path, backbone::extract_features(model, backbone::preprocess(model, img)));
      } catch (const DegenerateEmbedding& e) {
        throw DegenerateEmbedding(*path + " under model " + model.model_id + ": " + e.what());
      }
    }
  }
}

std::string fmt_eer(double v) { return fmt::format("{:.4f}", v); }

}  // namespace

GridReport run_grid(const ExperimentGrid& grid, const dataset::DatasetManifest& m,
                    const std::vector<std::string>& test_users, dataset::ImageCleaner* cleaner,
                    const std::map<std::string, const backbone::BackboneModel*>& backbones) {
  grid.validate();
  std::vector<std::string> missing;
  for (const auto& gm : grid.models) {
    auto it = backbones.find(gm.name);
    if (it == backbones.end() || it->second == nullptr) {
      for (Setup s : grid.setups) missing.push_back(fmt::format("({}, {})", dataset::to_string(s), gm.name));
    }
  }
  if (!missing.empty()) {
    throw ValidationError(fmt::format("missing model for cells: {}", fmt::join(missing, ", ")));
  }

  fs::create_directories(grid.output_dir);
  std::map<std::string, FeatureCache> caches;
  for (const auto& gm : grid.models) {
    const auto* model = backbones.at(gm.name);
    caches.emplace(gm.name, FeatureCache(model->model_id, model->feature_dim));
  }

  GridReport report;
  for (Setup setup : grid.setups) {
    for (std::uint64_t seed : grid.seeds) {
      const auto pairs = setup_pairs(setup, m, test_users, seed, cleaner);
      for (const auto& gm : grid.models) {
        const auto& model = *backbones.at(gm.name);
        auto& cache = caches.at(gm.name);
        ensure_features(model, cache, pairs);
        const auto scores = verifier::score_pairs(pairs, cache);
        const auto eer = verifier::compute_eer_global(scores);
        const auto roc = verifier::compute_roc(scores);

        CellResult cell;
        cell.setup = setup;
        cell.model = gm.name;
        cell.seed = seed;
        cell.n_pairs = pairs.size();
        cell.n_matches = static_cast<std::size_t>(
            std::count_if(pairs.begin(), pairs.end(),
                          [](const auto& p) { return p.label == dataset::Label::match; }));
        cell.eer = eer;
        cell.auc = verifier::roc_auc(roc);
        const std::string stem =
            fmt::format("{}_{}_seed{}", dataset::to_string(setup), gm.name, seed);
        cell.scores_csv = grid.output_dir / (stem + "_scores.csv");
        cell.roc_json = grid.output_dir / (stem + "_roc.json");
        cell.roc_png = grid.output_dir / (stem + "_roc.png");
        verifier::write_scores(scores, cell.scores_csv);
        verifier::write_report(eer, roc, cell.roc_json);
        verifier::render_roc(roc, eer,
                             fmt::format("{} / {}  EER {:.3f}", dataset::to_string(setup), gm.name,
                                         eer.eer),
                             cell.roc_png);
        report.cells.push_back(std::move(cell));
      }
    }
  }

  // Summary table: setups as rows, models as columns.
  csv::Row header{"setup"};
  for (const auto& gm : grid.models) header.push_back(gm.name);
  std::vector<csv::Row> rows;
  for (Setup setup : grid.setups) {
    csv::Row row{std::string(dataset::to_string(setup))};
    for (const auto& gm : grid.models) {
      double sum = 0.0;
      for (std::uint64_t seed : grid.seeds) sum += report.find(setup, gm.name, seed)->eer.eer;
      row.push_back(fmt_eer(sum / static_cast<double>(grid.seeds.size())));
    }
    rows.push_back(std::move(row));
  }
  report.table_csv = grid.output_dir / "eer_table.csv";
  csv::write(report.table_csv, header, rows);

  std::vector<csv::Row> cell_rows;
  for (const auto& c : report.cells) {
    cell_rows.push_back({std::string(dataset::to_string(c.setup)), c.model, std::to_string(c.seed),
                         std::to_string(c.n_pairs), std::to_string(c.n_matches),
                         fmt::format("{:.17g}", c.eer.eer), fmt::format("{:.17g}", c.eer.threshold),
                         fmt::format("{:.17g}", c.eer.far), fmt::format("{:.17g}", c.eer.frr),
                         fmt::format("{:.17g}", c.auc), c.roc_json.filename().string(),
                         c.roc_png.filename().string()});
  }
  report.cells_csv = grid.output_dir / "cells.csv";
  csv::write(report.cells_csv,
             {"setup", "model", "seed", "n_pairs", "n_matches", "eer", "threshold", "far", "frr",
              "auc", "roc_json", "roc_png"},
             cell_rows);
  return report;
}

}  // namespace sigverify::harness
