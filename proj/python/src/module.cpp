// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

// Python bindings: scoring, EER/ROC, manifests and pairs, images as numpy
// arrays, and the trained models for feature extraction and cleaning.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sigverify/backbone.hpp"
#include "sigverify/cleaner.hpp"
#include "sigverify/dataset.hpp"
#include "sigverify/error.hpp"
#include "sigverify/humaneval.hpp"
#include "sigverify/imaging.hpp"
#include "sigverify/verifier.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace sigverify;

namespace {

std::vector<verifier::ScoreRecord> to_scores(const std::vector<double>& similarity,
                                             const std::vector<bool>& match) {
  if (similarity.size() != match.size()) {
    throw ValidationError("similarity and label arrays differ in length");
  }
  std::vector<verifier::ScoreRecord> out;
  out.reserve(similarity.size());
  for (std::size_t i = 0; i < similarity.size(); ++i) {
    out.push_back(verifier::ScoreRecord::make(std::to_string(i), similarity[i],
                                              match[i] ? dataset::Label::match : dataset::Label::mismatch));
  }
  return out;
}

py::dict pair_dict(const dataset::PairRecord& p) {
  py::dict d;
  d["pair_id"] = p.pair_id;
  d["ref_path"] = p.ref_path;
  d["target_path"] = p.target_path;
  d["label"] = std::string(dataset::to_string(p.label));
  d["setup"] = std::string(dataset::to_string(p.setup));
  return d;
}

imaging::SignatureImage image_from(const imaging::PixelMatrix& px, const std::string& polarity) {
  return imaging::SignatureImage::from_pixels(px, imaging::parse_polarity(polarity));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Writer-independent offline signature verification";

  auto base = py::register_exception<Error>(m, "SigverifyError");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<LoadError>(m, "LoadError", base.ptr());
  py::register_exception<DegenerateEmbedding>(m, "DegenerateEmbedding", base.ptr());

  // ---------------------------------------------------------------- scoring
  m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
    return verifier::cosine_similarity(a, b);
  }, py::arg("a"), py::arg("b"));

  m.def("compute_eer", [](const std::vector<double>& similarity, const std::vector<bool>& match) {
    const auto e = verifier::compute_eer_global(to_scores(similarity, match));
    py::dict d;
    d["eer"] = e.eer;
    d["threshold"] = e.threshold;
    d["far"] = e.far;
    d["frr"] = e.frr;
    return d;
  }, py::arg("similarity"), py::arg("match"),
        "Global EER over scores; match[i] is True for same-writer pairs.");

  m.def("compute_roc", [](const std::vector<double>& similarity, const std::vector<bool>& match) {
    std::vector<std::tuple<double, double, double>> out;
    for (const auto& p : verifier::compute_roc(to_scores(similarity, match))) {
      out.emplace_back(p.threshold, p.tpr, p.fpr);
    }
    return out;
  }, py::arg("similarity"), py::arg("match"), "List of (threshold, tpr, fpr), thresholds decreasing.");

  m.def("roc_auc", [](const std::vector<double>& similarity, const std::vector<bool>& match) {
    return verifier::roc_auc(verifier::compute_roc(to_scores(similarity, match)));
  }, py::arg("similarity"), py::arg("match"));

  // ---------------------------------------------------------------- dataset
  m.def("build_manifest", [](const fs::path& root, const std::string& layout, const fs::path& out) {
    const auto man = dataset::build_manifest(root, dataset::parse_layout(layout));
    dataset::write_manifest(man, out);
    return man.entries.size();
  }, py::arg("root"), py::arg("layout") = "user_dirs", py::arg("out"),
        "Indexes a dataset directory into a manifest CSV; returns the image count.");

  m.def("manifest_users", [](const fs::path& manifest) {
    return dataset::read_manifest(manifest).users();
  }, py::arg("manifest"));

  m.def("generate_pairs", [](const fs::path& manifest, const std::vector<std::string>& test_users,
                             std::uint64_t seed) {
    py::list out;
    for (const auto& p : dataset::generate_pairs(dataset::read_manifest(manifest), test_users, seed)) {
      out.append(pair_dict(p));
    }
    return out;
  }, py::arg("manifest"), py::arg("test_users"), py::arg("seed") = 0);

  m.def("split_verification_users", [](const fs::path& manifest, long long n_train, std::uint64_t seed) {
    const auto s = dataset::split_verification_users(dataset::read_manifest(manifest), n_train, seed);
    return py::make_tuple(s.train, s.test);
  }, py::arg("manifest"), py::arg("n_train_users"), py::arg("seed") = 0,
        "Returns (train_users, test_users).");

  m.def("read_pairs", [](const fs::path& path) {
    py::list out;
    for (const auto& p : dataset::read_pairs(path)) out.append(pair_dict(p));
    return out;
  }, py::arg("path"));

  // ---------------------------------------------------------------- imaging
  m.def("load_signature", [](const fs::path& path) { return imaging::load_signature(path).pixels; },
        py::arg("path"), "Grayscale intensities in [0, 1] as a 2-D float64 array.");

  m.def("psnr", [](const imaging::PixelMatrix& a, const imaging::PixelMatrix& b) {
    return imaging::psnr(image_from(a, "original"), image_from(b, "original"));
  }, py::arg("a"), py::arg("b"));

  // ----------------------------------------------------------------- models
  py::class_<backbone::BackboneModel>(m, "Backbone")
      .def_static("load", &backbone::load_backbone, py::arg("dir"))
      .def_property_readonly("model_id", [](const backbone::BackboneModel& b) { return b.model_id; })
      .def_property_readonly("feature_dim", [](const backbone::BackboneModel& b) { return b.feature_dim; })
      .def_property_readonly("feature_layer", [](const backbone::BackboneModel& b) { return b.feature_layer; })
      .def("features", [](const backbone::BackboneModel& b, const imaging::PixelMatrix& px,
                          const std::string& polarity) {
        const auto v = backbone::extract_features(b, backbone::preprocess(b, image_from(px, polarity)));
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      }, py::arg("pixels"), py::arg("polarity") = "original")
      .def("features_of", [](const backbone::BackboneModel& b, const fs::path& path) {
        const auto v = backbone::extract_features(b, backbone::preprocess(b, imaging::load_signature(path)));
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      }, py::arg("path"));

  py::class_<cleaner::CleanerModel>(m, "Cleaner")
      .def_static("load", [](const fs::path& dir) { return cleaner::load_cleaner(dir); }, py::arg("dir"))
      .def_property_readonly("epoch", [](const cleaner::CleanerModel& c) { return c.epoch; })
      .def("clean", [](const cleaner::CleanerModel& c, const imaging::PixelMatrix& px, const std::string& polarity) {
        return cleaner::clean(c, image_from(px, polarity)).pixels;
      }, py::arg("pixels"), py::arg("polarity") = "original");

  // -------------------------------------------------------------- humaneval
  m.def("majority_vote", [](const std::vector<std::string>& votes) {
    std::vector<humaneval::Decision> d;
    for (const auto& v : votes) d.push_back(humaneval::parse_decision(v));
    return std::string(humaneval::to_string(humaneval::majority_vote(d)));
  }, py::arg("votes"), "Majority of an odd number of 'same'/'different' votes.");

  m.def("default_raters", &humaneval::default_raters, py::arg("n"));

  m.attr("__version__") = "0.1.0";
}
