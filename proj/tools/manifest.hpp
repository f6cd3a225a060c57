#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldcd/detector.hpp"
#include "ldcd/nab_score.hpp"

namespace ldcd::cli {

/// A named detector. n and m are taken as fractions of each series' length
/// unless set explicitly in `base`.
struct DetectorSpec {
  std::string name;
  DetectorConfig base;
  double train_frac = kProbationFraction;
  double calib_frac = kProbationFraction;

  DetectorConfig for_length(std::size_t length) const {
    DetectorConfig c = base;
    if (c.n == 0) c.n = std::max<std::size_t>(1, probation_length(length, train_frac));
    if (c.m == 0) c.m = std::max<std::size_t>(1, probation_length(length, calib_frac));
    return c.resolved(length);
  }

  std::string default_name() const {
    return std::string(to_string(base.method)) + "_k" + std::to_string(base.k) + "_l" +
           std::to_string(base.l) + (base.pruning ? "_pruned" : "");
  }

  void validate() const {
    base.validate();
    if (!(train_frac > 0.0 && train_frac < 1.0) || !(calib_frac > 0.0 && calib_frac < 1.0))
      throw std::invalid_argument("train/calib fractions must be in (0, 1)");
    if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..")
      throw std::invalid_argument("detector name must be a plain directory name");
  }
};

struct RunManifest {
  std::filesystem::path corpus_dir;
  std::filesystem::path labels_path;
  std::filesystem::path output_dir;
  std::vector<DetectorSpec> detectors;
  std::vector<std::string> profiles{"LowFN", "LowFP", "Standard"};
  std::size_t parallelism = 1;
  /// Score at this threshold instead of optimizing one per profile.
  std::optional<double> threshold;

  void validate() const {
    if (detectors.empty()) throw std::invalid_argument("manifest: at least one detector required");
    if (profiles.empty()) throw std::invalid_argument("manifest: at least one profile required");
    for (const auto& p : profiles) profile_by_name(p);
    for (const auto& d : detectors) d.validate();
    if (parallelism == 0) throw std::invalid_argument("manifest: parallelism must be >= 1");
    if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0))
      throw std::invalid_argument("manifest: threshold must be in [0, 1]");
  }
};

inline DetectorSpec detector_from_json(const nlohmann::json& j) {
  DetectorSpec d;
  auto& c = d.base;
  c.k = j.value("k", c.k);
  c.l = j.value("l", j.value("embed_dim", c.l));
  c.n = j.value("n", c.n);
  c.m = j.value("m", c.m);
  c.method = parse_method(j.value("method", std::string(to_string(c.method))));
  c.pruning = j.value("pruning", c.pruning);
  c.prune_threshold = j.value("prune_threshold", c.prune_threshold);
  c.prune_duration = j.value("prune_duration", c.prune_duration);
  c.neutral_score = j.value("neutral_score", c.neutral_score);
  c.ridge_eps = j.value("ridge_eps", c.ridge_eps);
  c.refit_every = j.value("refit_every", c.refit_every);
  d.train_frac = j.value("train_frac", d.train_frac);
  d.calib_frac = j.value("calib_frac", d.calib_frac);
  d.name = j.value("name", d.default_name());
  return d;
}

inline nlohmann::json detector_to_json(const DetectorSpec& d) {
  const auto& c = d.base;
  return {{"name", d.name},
          {"k", c.k},
          {"l", c.l},
          {"n", c.n},
          {"m", c.m},
          {"method", std::string(to_string(c.method))},
          {"pruning", c.pruning},
          {"prune_threshold", c.prune_threshold},
          {"prune_duration", c.prune_duration},
          {"neutral_score", c.neutral_score},
          {"ridge_eps", c.ridge_eps},
          {"refit_every", c.refit_every},
          {"train_frac", d.train_frac},
          {"calib_frac", d.calib_frac}};
}

/// Fields present in the manifest replace the corresponding values in `m`.
inline void apply_manifest(const std::filesystem::path& path, RunManifest& m) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  try {
    if (j.contains("corpus_dir")) m.corpus_dir = j["corpus_dir"].get<std::string>();
    if (j.contains("labels_path")) m.labels_path = j["labels_path"].get<std::string>();
    if (j.contains("output_dir")) m.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("detectors")) {
      m.detectors.clear();
      for (const auto& d : j["detectors"]) m.detectors.push_back(detector_from_json(d));
    }
    if (j.contains("profiles")) m.profiles = j["profiles"].get<std::vector<std::string>>();
    if (j.contains("parallelism")) m.parallelism = j["parallelism"].get<std::size_t>();
    if (j.contains("threshold")) m.threshold = j["threshold"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace ldcd::cli
