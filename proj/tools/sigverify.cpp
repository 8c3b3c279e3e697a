// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Command line front end. Every subcommand reads its inputs from files and
// writes its outputs to files, so runs can be chained and repeated.

#include <glob.h>
#include <signal.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "sigverify/backbone.hpp"
#include "sigverify/cleaner.hpp"
#include "sigverify/dataset.hpp"
#include "sigverify/error.hpp"
#include "sigverify/harness.hpp"
#include "sigverify/humaneval.hpp"
#include "sigverify/synth.hpp"
#include "sigverify/verifier.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sigverify;

namespace {

constexpr const char* kDataRootEnv = "SIGVERIFY_DATA_ROOT";

std::optional<fs::path> data_root() {
  const char* v = std::getenv(kDataRootEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

/// Relative inputs that do not exist are looked up under the data root.
fs::path input_path(const fs::path& p) {
  if (p.empty() || p.is_absolute() || fs::exists(p)) return p;
  if (auto root = data_root(); root && fs::exists(*root / p)) return *root / p;
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  try {
    return json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

/// A config file holds one object per concern ("train", "backbone",
/// "cleaner", "grid"). A file without any of those keys is taken as the
/// requested section itself.
json config_section(const std::string& file, const std::string& key) {
  if (file.empty()) return json::object();
  const json j = read_json(input_path(file));
  static const std::set<std::string> kSections{"train", "backbone", "cleaner", "grid"};
  bool sectioned = false;
  for (const auto& [k, v] : j.items()) sectioned = sectioned || kSections.count(k);
  if (!sectioned) return j;
  return j.contains(key) ? j[key] : json::object();
}

void info(const std::string& msg) { std::cerr << msg << '\n'; }

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::set<std::string> kExt{".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp"};
  return kExt.count(ext) != 0;
}

std::vector<fs::path> images_under(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ValidationError("no images under " + dir.string());
  return out;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<fs::path> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  ::globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw IoError("glob failed for " + pattern);
  if (fs::is_directory(pattern)) return images_under(pattern);
  std::erase_if(out, [](const fs::path& p) { return !fs::is_regular_file(p); });
  if (out.empty()) throw ValidationError("no files match " + pattern);
  return out;
}

std::vector<imaging::SignatureImage> load_all(const std::vector<fs::path>& paths) {
  std::vector<imaging::SignatureImage> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(imaging::load_signature(p));
  return out;
}

dataset::DatasetManifest load_manifest(const std::string& path) {
  fs::path p = path;
  if (p.empty()) {
    auto root = data_root();
    if (!root) throw ValidationError(std::string("no --manifest given and ") + kDataRootEnv + " is unset");
    p = *root / "manifest.csv";
  }
  return dataset::read_manifest(input_path(p));
}

// ------------------------------------------------------------------ commands

struct Synth {
  std::string out;
  synth::CorpusConfig cfg;
  int size = 64;
  std::string truth;
};

void run_synth(const Synth& o) {
  synth::CorpusConfig cfg = o.cfg;
  cfg.render.rows = cfg.render.cols = o.size;
  if (!o.truth.empty()) cfg.truth_dir = o.truth;
  const auto m = synth::write_corpus(o.out, cfg);
  info(fmt::format("wrote {} images for {} users under {}", m.entries.size(), m.users().size(), o.out));
}

struct MakeManifest {
  std::string root, layout = "user_dirs", name, out = "manifest.csv";
};

void run_make_manifest(const MakeManifest& o) {
  fs::path root = o.root;
  if (root.empty()) {
    auto r = data_root();
    if (!r) throw ValidationError(std::string("no --root given and ") + kDataRootEnv + " is unset");
    root = *r;
  }
  const auto m = dataset::build_manifest(root, dataset::parse_layout(o.layout), o.name);
  dataset::write_manifest(m, o.out);
  info(fmt::format("{}: {} images, {} users", o.out, m.entries.size(), m.users().size()));
}

struct MakeSplits {
  std::string manifest, kind = "verification", unit = "image", out = "split.json";
  std::vector<double> ratios{0.70, 0.15, 0.15};
  long long train_users = 0;
  std::uint64_t seed = 0;
};

void run_make_splits(const MakeSplits& o) {
  const auto m = load_manifest(o.manifest);
  dataset::SplitSpec s;
  if (o.kind == "verification") {
    if (o.train_users <= 0) throw ValidationError("--train-users is required for a verification split");
    s = dataset::split_verification_users(m, o.train_users, o.seed);
  } else if (o.kind == "representation") {
    if (o.ratios.size() != 3) throw ValidationError("--ratios takes three values");
    const auto unit = o.unit == "user" ? dataset::SplitUnit::user : dataset::SplitUnit::image;
    s = dataset::split_representation(m, {o.ratios[0], o.ratios[1], o.ratios[2]}, o.seed, unit);
  } else {
    throw ValidationError("unknown split kind '" + o.kind + "'");
  }
  dataset::write_split(s, o.out);
  info(fmt::format("{}: train {}, val {}, test {}", o.out, s.train.size(), s.val.size(), s.test.size()));
}

/// Test users of a verification split, or every user when no split is given.
std::vector<std::string> test_users(const dataset::DatasetManifest& m, const std::string& split) {
  if (split.empty()) return m.users();
  const auto s = dataset::read_split(input_path(split));
  if (s.unit != dataset::SplitUnit::user) {
    throw ValidationError(split + " is not a user split; pairs need test users");
  }
  return s.test;
}

std::optional<cleaner::CleanerModel> maybe_cleaner(const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return cleaner::load_cleaner(input_path(dir));
}

struct MakePairs {
  std::string manifest, split, setup = "S1", cleaner, cleaned_dir = "cleaned", out = "pairs.csv";
  std::uint64_t seed = 0;
  long long negatives = -1;
};

void run_make_pairs(const MakePairs& o) {
  const auto m = load_manifest(o.manifest);
  const auto users = test_users(m, o.split);
  const auto setup = dataset::parse_setup(o.setup);
  auto model = maybe_cleaner(o.cleaner);
  std::optional<cleaner::DiskCleaner> disk;
  if (model) disk.emplace(*model, o.cleaned_dir);
  std::vector<dataset::PairRecord> pairs;
  if (setup == dataset::Setup::tobacco || o.negatives < 0) {
    pairs = harness::setup_pairs(setup, m, users, o.seed, disk ? &*disk : nullptr);
  } else {
    auto raw = dataset::generate_reference_pairs(m, users, dataset::target_source_for(setup), o.seed,
                                                 static_cast<std::size_t>(o.negatives));
    pairs = dataset::assemble_setup(raw, setup, m, disk ? &*disk : nullptr);
  }
  dataset::write_pairs(pairs, o.out);
  const auto pos = std::count_if(pairs.begin(), pairs.end(),
                                 [](const auto& p) { return p.label == dataset::Label::match; });
  info(fmt::format("{}: {} pairs ({} matching)", o.out, pairs.size(), pos));
}

struct TrainCleaner {
  std::string stamped, clean, config, out = "cleaner";
  int epochs = -1;
};

void run_train_cleaner(const TrainCleaner& o) {
  json j = config_section(o.config, "cleaner");
  auto cfg = cleaner::CleanerTrainConfig::from_json(j);
  if (o.epochs >= 0) cfg.epochs = o.epochs;
  cfg.checkpoint_dir = o.out;
  const auto stamped = load_all(images_under(input_path(o.stamped)));
  const auto clean_set = load_all(images_under(input_path(o.clean)));
  info(fmt::format("training cleaner on {} stamped / {} clean images, {} epochs", stamped.size(),
                   clean_set.size(), cfg.epochs));
  const auto model = cleaner::train_cleaner(stamped, clean_set, cfg);
  cleaner::save_cleaner(model, o.out);
  for (const auto& e : model.history) {
    info(fmt::format("epoch {:3d}  objective {:.4f}  cyc {:.4f}  gen {:.4f}  disc {:.4f}", e.epoch,
                     e.objective, e.cyc, e.gen_loss, e.disc_loss));
  }
  if (model.diverged) {
    throw InternalError(fmt::format("training diverged after epoch {}; last good state saved to {}",
                                    model.epoch, o.out));
  }
}

struct Clean {
  std::string model, in, out = "cleaned";
  bool deep = false;
};

void run_clean(const Clean& o) {
  const auto model = cleaner::load_cleaner(input_path(o.model));
  const auto files = expand_glob(o.in);
  fs::create_directories(o.out);
  std::set<std::string> names;
  for (const auto& f : files) {
    const std::string name = f.stem().string() + ".png";
    if (!names.insert(name).second) throw ValidationError("two inputs map to output " + name);
    imaging::save_signature(cleaner::clean(model, imaging::load_signature(f)), fs::path(o.out) / name, o.deep);
  }
  info(fmt::format("cleaned {} images into {}", files.size(), o.out));
}

struct TrainBackbone {
  std::string manifest, split, verification_split, config, pretrained, out = "backbone";
  std::string arch, variant;
  double val_fraction = 0.15;
};

void run_train_backbone(const TrainBackbone& o) {
  const auto m = load_manifest(o.manifest);
  auto spec = backbone::BackboneSpec::from_json(config_section(o.config, "backbone"));
  if (!o.arch.empty()) spec.arch = backbone::parse_arch(o.arch);
  if (!o.variant.empty()) spec.variant = backbone::parse_variant(o.variant);
  json tj = config_section(o.config, "train");
  if (!tj.contains("batch_size")) tj["batch_size"] = backbone::default_batch_size(spec.arch);
  const auto cfg = backbone::TrainConfig::from_json(tj);

  std::vector<std::string> held_out;
  if (!o.verification_split.empty()) held_out = test_users(m, o.verification_split);

  // An image split gives train/val paths directly; a user split trains on
  // its train users and holds out the last images of each for validation.
  const auto split = dataset::read_split(input_path(o.split));
  std::vector<imaging::SignatureImage> train, val;
  if (split.unit == dataset::SplitUnit::image) {
    auto entry = [&](const std::string& p) -> const dataset::ManifestEntry& {
      const auto* e = m.find(p);
      if (e == nullptr) throw ValidationError("split image not in manifest: " + p);
      return *e;
    };
    for (const auto& p : split.train) train.push_back(dataset::load_entry(entry(p)));
    for (const auto& p : split.val) val.push_back(dataset::load_entry(entry(p)));
  } else {
    if (held_out.empty()) held_out = split.test;
    if (o.val_fraction <= 0.0 || o.val_fraction >= 1.0) throw ValidationError("--val-fraction must be in (0, 1)");
    const auto by_user = m.by_user();
    for (const auto& u : split.train) {
      const auto& idx = by_user.at(u);
      if (idx.size() < 2) throw ValidationError("writer " + u + " has fewer than two images");
      const auto n_val = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(o.val_fraction * static_cast<double>(idx.size()))), 1,
          idx.size() - 1);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        auto img = dataset::load_entry(m.entries[idx[k]]);
        (k + n_val >= idx.size() ? val : train).push_back(std::move(img));
      }
    }
  }
  std::set<std::string> users;
  for (const auto& img : train) users.insert(img.user_id);
  spec.n_classes = static_cast<int>(users.size());

  std::optional<fs::path> pre;
  if (!o.pretrained.empty()) pre = input_path(o.pretrained);
  auto model = backbone::build_backbone(spec, pre);
  info(fmt::format("fine-tuning {} on {} users ({} train / {} val images)", model.model_id, users.size(),
                   train.size(), val.size()));
  backbone::finetune(model, train, val, cfg, held_out);
  for (const auto& r : model.history) {
    info(fmt::format("epoch {:3d}  train {:.4f}  val {:.4f}  acc {:.3f}", r.epoch, r.train_loss, r.val_loss,
                     r.val_accuracy));
  }
  backbone::save_backbone(model, o.out);
  info(fmt::format("best epoch {}; saved {}", model.best_epoch, o.out));
}

struct Extract {
  std::string model, pairs, out = "features.bin", scores;
};

void run_extract(const Extract& o) {
  const auto model = backbone::load_backbone(input_path(o.model));
  const auto pairs = dataset::read_pairs(input_path(o.pairs));
  std::vector<std::string> paths;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    for (const auto* s : {&p.ref_path, &p.target_path}) {
      if (seen.insert(*s).second) paths.push_back(*s);
    }
  }
  const auto cache = backbone::extract_to_cache(model, paths);
  cache.write(o.out);
  info(fmt::format("{}: {} vectors of dim {}", o.out, cache.size(), cache.dim()));
  if (!o.scores.empty()) {
    const auto scores = verifier::score_pairs(pairs, cache);
    verifier::write_scores(scores, o.scores);
    const auto eer = verifier::compute_eer_global(scores);
    info(fmt::format("{}: EER {:.4f} at threshold {:.4f}", o.scores, eer.eer, eer.threshold));
  }
}

struct Evaluate {
  std::string grid, manifest, split, out;
};

void run_evaluate(const Evaluate& o) {
  const fs::path grid_path = input_path(o.grid);
  auto grid = harness::ExperimentGrid::from_json(config_section(grid_path.string(), "grid"),
                                                 grid_path.parent_path());
  if (!o.out.empty()) grid.output_dir = o.out;
  const auto m = load_manifest(!o.manifest.empty() ? o.manifest : grid.manifest.string());
  const auto users = test_users(m, !o.split.empty() ? o.split : grid.split.string());

  std::optional<cleaner::CleanerModel> cm;
  std::optional<cleaner::DiskCleaner> disk;
  if (grid.cleaner) {
    cm = cleaner::load_cleaner(*grid.cleaner);
    disk.emplace(*cm, grid.output_dir / "cleaned");
  }
  std::vector<backbone::BackboneModel> models;
  models.reserve(grid.models.size());
  std::map<std::string, const backbone::BackboneModel*> by_name;
  for (const auto& gm : grid.models) {
    if (gm.checkpoint.empty()) continue;
    models.push_back(backbone::load_backbone(gm.checkpoint));
    by_name[gm.name] = &models.back();
  }
  const auto rep = harness::run_grid(grid, m, users, disk ? &*disk : nullptr, by_name);
  for (const auto& c : rep.cells) {
    info(fmt::format("{:8s} {:20s} seed {:3d}  pairs {:6d}  EER {:.4f}  AUC {:.4f}",
                     dataset::to_string(c.setup), c.model, c.seed, c.n_pairs, c.eer.eer, c.auc));
  }
  info("table: " + rep.table_csv.string());
}

struct HePlan {
  std::string stamped, unstamped, out = "plan.json";
  std::vector<std::string> rater_ids;
  int raters = 18;
  humaneval::PlanParams params;
  double match_fraction = -1.0;
};

void run_he_plan(const HePlan& o) {
  auto p = o.params;
  if (o.match_fraction >= 0.0) p.match_fraction = o.match_fraction;
  const auto raters = o.rater_ids.empty() ? humaneval::default_raters(o.raters) : o.rater_ids;
  const auto plan = humaneval::plan_humaneval(dataset::read_pairs(input_path(o.stamped)),
                                              dataset::read_pairs(input_path(o.unstamped)), raters, p);
  write_json(plan.to_json(), o.out);
  info(fmt::format("{}: {} pairs, {} raters x {} pairs, {} votes", o.out, plan.pairs.size(),
                   plan.raters.size(), plan.per_rater(), plan.total_votes()));
}

struct HeServe {
  std::string plan, votes = "votes.csv", host = "127.0.0.1", static_dir;
  int port = 8080;
};

void run_he_serve(const HeServe& o) {
  humaneval::Session session(humaneval::HumanEvalPlan::from_json(read_json(input_path(o.plan))), o.votes);
  std::optional<fs::path> static_dir;
  if (!o.static_dir.empty()) static_dir = o.static_dir;
  humaneval::Server server(session, static_dir);

  // Block the stop signals here so the listener threads never see them,
  // then wait for one on this thread.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const int port = server.bind(o.host, o.port);
  std::thread listener([&] { server.listen(); });
  std::cout << fmt::format("serving on http://{}:{}/ ({} votes logged)", o.host, port,
                           session.progress()["votes_cast"].get<std::size_t>())
            << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  listener.join();
}

struct HeReport {
  std::string plan, votes = "votes.csv", out_json = "humaneval_report.json", out_csv = "humaneval_report.csv";
  std::vector<std::string> models;
};

void run_he_report(const HeReport& o) {
  const auto plan = humaneval::HumanEvalPlan::from_json(read_json(input_path(o.plan)));
  std::map<std::string, std::vector<verifier::ScoreRecord>> scores;
  for (const auto& spec : o.models) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ValidationError("--model takes NAME=SCORES.csv, got '" + spec + "'");
    scores[spec.substr(0, eq)] = verifier::read_scores(input_path(spec.substr(eq + 1)));
  }
  const auto rep = humaneval::humaneval_report(plan, humaneval::read_votes(input_path(o.votes)), scores);
  humaneval::write_report(rep, o.out_json, o.out_csv);
  info(fmt::format("majority {:.2f}%  individual {:.2f}%", 100 * rep.majority_accuracy,
                   100 * rep.individual_accuracy));
  for (const auto& m : rep.models) info(fmt::format("{}: {:.2f}% (EER {:.4f})", m.model, 100 * m.accuracy, m.eer));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Writer-independent offline signature verification"};
  app.require_subcommand(1);
  app.footer(std::string("Relative input paths fall back to $") + kDataRootEnv + ".");

  Synth synth_o;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic user_dirs corpus");
  c_synth->add_option("--out", synth_o.out, "Output root")->required();
  c_synth->add_option("--users", synth_o.cfg.n_users, "Number of writers");
  c_synth->add_option("--references", synth_o.cfg.references, "Reference images per writer");
  c_synth->add_option("--unstamped", synth_o.cfg.unstamped, "Unstamped targets per writer");
  c_synth->add_option("--stamped", synth_o.cfg.stamped, "Stamped targets per writer");
  c_synth->add_option("--size", synth_o.size, "Canvas side in pixels");
  c_synth->add_option("--seed", synth_o.cfg.seed);
  c_synth->add_option("--truth", synth_o.truth, "Directory for the clean renderings under stamps");

  MakeManifest mm;
  auto* c_mm = app.add_subcommand("make-manifest", "Index a dataset directory");
  c_mm->add_option("--root", mm.root, std::string("Dataset root (default $") + kDataRootEnv + ")");
  c_mm->add_option("--layout", mm.layout)->check(CLI::IsMember({"user_dirs", "annotation", "tobacco800"}));
  c_mm->add_option("--name", mm.name, "Dataset name");
  c_mm->add_option("--out", mm.out);

  MakeSplits ms;
  auto* c_ms = app.add_subcommand("make-splits", "Split images or writers");
  c_ms->add_option("--manifest", ms.manifest);
  c_ms->add_option("--kind", ms.kind)->check(CLI::IsMember({"verification", "representation"}));
  c_ms->add_option("--unit", ms.unit, "representation split unit")->check(CLI::IsMember({"image", "user"}));
  c_ms->add_option("--ratios", ms.ratios, "train val test ratios")->expected(3)->delimiter(',');
  c_ms->add_option("--train-users", ms.train_users, "Writers in the training part of a verification split");
  c_ms->add_option("--seed", ms.seed);
  c_ms->add_option("--out", ms.out);

  MakePairs mp;
  auto* c_mp = app.add_subcommand("make-pairs", "Generate verification pairs for one setup");
  c_mp->add_option("--manifest", mp.manifest);
  c_mp->add_option("--split", mp.split, "Verification split; its test users are paired");
  c_mp->add_option("--setup", mp.setup)->check(CLI::IsMember({"S1", "S2", "S3", "S4", "S5", "tobacco"}));
  c_mp->add_option("--seed", mp.seed, "Negative sampling seed");
  c_mp->add_option("--negatives", mp.negatives, "Non-matching pairs (default: as many as matching)");
  c_mp->add_option("--cleaner", mp.cleaner, "Cleaner checkpoint, needed by S2, S4 and S5");
  c_mp->add_option("--cleaned-dir", mp.cleaned_dir, "Where cleaned images are written");
  c_mp->add_option("--out", mp.out);

  TrainCleaner tc;
  auto* c_tc = app.add_subcommand("train-cleaner", "Train the stamp cleaner");
  c_tc->add_option("--stamped", tc.stamped, "Directory of stamped signatures")->required();
  c_tc->add_option("--clean", tc.clean, "Directory of clean signatures")->required();
  c_tc->add_option("--config", tc.config, "Config file (\"cleaner\" section)");
  c_tc->add_option("--epochs", tc.epochs, "Override the configured epochs");
  c_tc->add_option("--out", tc.out, "Checkpoint directory");

  Clean cl;
  auto* c_cl = app.add_subcommand("clean", "Remove stamps from images");
  c_cl->add_option("--model", cl.model, "Cleaner checkpoint")->required();
  c_cl->add_option("--in", cl.in, "Input glob or directory")->required();
  c_cl->add_option("--out", cl.out);
  c_cl->add_flag("--deep", cl.deep, "Write 16-bit images");

  TrainBackbone tb;
  auto* c_tb = app.add_subcommand("train-backbone", "Fine-tune a backbone on writer labels");
  c_tb->add_option("--manifest", tb.manifest);
  c_tb->add_option("--split", tb.split, "Image split, or a user split")->required();
  c_tb->add_option("--verification-split", tb.verification_split, "Split whose test writers must stay unseen");
  c_tb->add_option("--config", tb.config, "Config file (\"backbone\" and \"train\" sections)");
  c_tb->add_option("--arch", tb.arch)->check(CLI::IsMember({"tiny", "vgg_like", "resnet_like"}));
  c_tb->add_option("--variant", tb.variant)->check(CLI::IsMember({"raw", "cleaned", "inverse"}));
  c_tb->add_option("--pretrained", tb.pretrained, "Weights file to start from");
  c_tb->add_option("--val-fraction", tb.val_fraction, "Held-out share per writer for user splits");
  c_tb->add_option("--out", tb.out, "Checkpoint directory");

  Extract ex;
  auto* c_ex = app.add_subcommand("extract", "Cache features for the images of a pair list");
  c_ex->add_option("--model", ex.model, "Backbone checkpoint")->required();
  c_ex->add_option("--pairs", ex.pairs, "Pairs CSV")->required();
  c_ex->add_option("--out", ex.out, "Feature cache file");
  c_ex->add_option("--scores", ex.scores, "Also score the pairs into this CSV");

  Evaluate ev;
  auto* c_ev = app.add_subcommand("evaluate", "Run an experiment grid");
  c_ev->add_option("--grid", ev.grid, "Grid file")->required();
  c_ev->add_option("--manifest", ev.manifest, "Override the grid's manifest");
  c_ev->add_option("--split", ev.split, "Override the grid's split");
  c_ev->add_option("--out", ev.out, "Override the grid's output directory");

  auto* c_he = app.add_subcommand("humaneval", "Human rater protocol");
  c_he->require_subcommand(1);
  HePlan hp;
  auto* c_hp = c_he->add_subcommand("plan", "Sample pairs and assign raters");
  c_hp->add_option("--stamped-pairs", hp.stamped, "Pool of reference/stamped pairs")->required();
  c_hp->add_option("--unstamped-pairs", hp.unstamped, "Pool of reference/unstamped pairs")->required();
  c_hp->add_option("--raters", hp.raters, "Number of raters (ids r01...)");
  c_hp->add_option("--rater-ids", hp.rater_ids, "Explicit rater ids")->delimiter(',');
  c_hp->add_option("--n-stamped", hp.params.n_stamped);
  c_hp->add_option("--n-unstamped", hp.params.n_unstamped);
  c_hp->add_option("--subsets", hp.params.n_subsets);
  c_hp->add_option("--raters-per-pair", hp.params.raters_per_pair);
  c_hp->add_option("--match-fraction", hp.match_fraction, "Matching share per pool (default: pool ratio)");
  c_hp->add_option("--seed", hp.params.seed);
  c_hp->add_option("--out", hp.out);

  HeServe hs;
  auto* c_hs = c_he->add_subcommand("serve", "Serve the rating API");
  c_hs->add_option("--plan", hs.plan)->required();
  c_hs->add_option("--votes", hs.votes, "Append-only vote log");
  c_hs->add_option("--host", hs.host);
  c_hs->add_option("--port", hs.port, "0 picks a free port");
  c_hs->add_option("--static", hs.static_dir, "Directory served at /");

  HeReport hr;
  auto* c_hr = c_he->add_subcommand("report", "Compare human and model accuracy");
  c_hr->add_option("--plan", hr.plan)->required();
  c_hr->add_option("--votes", hr.votes);
  c_hr->add_option("--model", hr.models, "NAME=SCORES.csv, repeatable");
  c_hr->add_option("--out-json", hr.out_json);
  c_hr->add_option("--out-csv", hr.out_csv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_synth) run_synth(synth_o);
    else if (*c_mm) run_make_manifest(mm);
    else if (*c_ms) run_make_splits(ms);
    else if (*c_mp) run_make_pairs(mp);
    else if (*c_tc) run_train_cleaner(tc);
    else if (*c_cl) run_clean(cl);
    else if (*c_tb) run_train_backbone(tb);
    else if (*c_ex) run_extract(ex);
    else if (*c_ev) run_evaluate(ev);
    else if (*c_hp) run_he_plan(hp);
    else if (*c_hs) run_he_serve(hs);
    else if (*c_hr) run_he_report(hr);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
