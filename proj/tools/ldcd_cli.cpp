// Command-line benchmark runner: synthesize corpora, run detectors over a
// corpus, and score the results with the NAB methodology.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ldcd/corpus.hpp"
#include "ldcd/detector.hpp"
#include "ldcd/nab_score.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitInvalid = 2;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ldcd::CorpusError("cannot write " + path.string());
  out << text;
}

// --------------------------------------------------------------------------
// synth

struct SynthOptions {
  fs::path manifest;
  fs::path out;
  std::string preset = "quasi-periodic";
  std::size_t count = 20;
  std::uint64_t seed = 1;
  std::size_t length = 2000;
};

int run_synth(const SynthOptions& opt) {
  std::vector<ldcd::SyntheticSpec> specs;
  if (!opt.manifest.empty()) {
    std::ifstream in(opt.manifest);
    if (!in) throw std::invalid_argument("cannot open " + opt.manifest.string());
    json j;
    try {
      in >> j;
      specs = (j.is_object() ? j.at("datasets") : j).get<std::vector<ldcd::SyntheticSpec>>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("synthetic manifest: " + std::string(e.what()));
    }
  } else if (opt.preset == "quasi-periodic") {
    specs = ldcd::quasi_periodic_corpus(opt.count, opt.seed, opt.length);
  } else {
    throw std::invalid_argument("unknown preset " + opt.preset);
  }
  for (const auto& s : specs) s.validate();

  json labels = json::object();
  for (const auto& spec : specs) {
    const auto series = ldcd::generate_synthetic(spec);
    const std::string file = spec.name + ".csv";
    std::ostringstream csv;
    ldcd::write_series(csv, series);
    write_file(opt.out / file, csv.str());
    json stamps = json::array();
    for (auto i : series.labels) stamps.push_back(series.timestamps[i]);
    labels[file] = stamps;
  }
  write_file(opt.out / "labels.json", labels.dump(2) + "\n");
  write_file(opt.out / "manifest.json", json{{"datasets", specs}}.dump(2) + "\n");
  std::cout << "wrote " << specs.size() << " series to " << opt.out.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// detect

struct DatasetOutcome {
  std::string dataset;
  std::optional<std::string> error;
};

std::vector<DatasetOutcome> detect_corpus(const ldcd::cli::DetectorSpec& det,
                                          const std::vector<std::string>& datasets,
                                          const fs::path& corpus, const fs::path& out_dir,
                                          std::size_t threads) {
  std::vector<DatasetOutcome> outcomes(datasets.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < datasets.size(); i = next++) {
      outcomes[i].dataset = datasets[i];
      try {
        const auto series = ldcd::load_series(corpus / datasets[i], datasets[i]);
        const auto scored = ldcd::detect_stream(series, det.for_length(series.size()));
        std::vector<double> values, abnormality;
        values.reserve(scored.size());
        abnormality.reserve(scored.size());
        for (const auto& p : scored) {
          values.push_back(series.values[p.t]);
          abnormality.push_back(p.abnormality);
        }
        std::ostringstream csv;
        ldcd::write_scores(csv, series.timestamps, values, abnormality);
        write_file(out_dir / det.name / datasets[i], csv.str());
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, datasets.size()));
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return outcomes;
}

int run_detect(const ldcd::cli::RunManifest& m) {
  m.validate();
  if (m.corpus_dir.empty()) throw std::invalid_argument("detect: --corpus is required");
  if (m.output_dir.empty()) throw std::invalid_argument("detect: --out is required");
  if (!fs::is_directory(m.corpus_dir))
    throw std::invalid_argument("corpus directory not found: " + m.corpus_dir.string());

  const auto datasets = ldcd::list_datasets(m.corpus_dir);
  if (datasets.empty()) std::cerr << "warning: no CSV datasets under " << m.corpus_dir.string() << "\n";

  json report = {{"corpus_dir", m.corpus_dir.generic_string()}, {"detectors", json::array()}};
  bool partial = false;
  for (const auto& det : m.detectors) {
    const auto outcomes = detect_corpus(det, datasets, m.corpus_dir, m.output_dir, m.parallelism);
    json failed = json::array();
    std::size_t ok = 0;
    for (const auto& o : outcomes) {
      if (o.error) {
        failed.push_back({{"dataset", o.dataset}, {"error", *o.error}});
        std::cerr << "warning: " << det.name << ": " << o.dataset << ": " << *o.error << "\n";
      } else {
        ++ok;
      }
    }
    partial = partial || !failed.empty();
    report["detectors"].push_back(
        {{"detector", ldcd::cli::detector_to_json(det)}, {"processed", ok}, {"failed", failed}});
    std::cout << det.name << ": " << ok << "/" << datasets.size() << " datasets\n";
  }
  write_file(m.output_dir / "detect_report.json", report.dump(2) + "\n");
  return partial ? kExitPartial : kExitOk;
}

// --------------------------------------------------------------------------
// score

struct DetectorReport {
  std::string name;
  std::size_t datasets = 0;
  std::vector<std::pair<std::string, std::string>> skipped;
  std::vector<ldcd::CorpusScore> scores;
  std::vector<bool> defined;
};

std::string format_table(const std::vector<DetectorReport>& reports,
                         const std::vector<ldcd::ApplicationProfile>& profiles) {
  std::size_t width = 8;
  for (const auto& r : reports) width = std::max(width, r.name.size() + 2);
  std::ostringstream out;
  char buf[64];
  out << "Detector" << std::string(width - 8, ' ');
  for (const auto& p : profiles) {
    std::snprintf(buf, sizeof buf, "%10s", p.name.c_str());
    out << buf;
  }
  out << '\n';
  for (const auto& r : reports) {
    out << r.name << std::string(width - r.name.size(), ' ');
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      if (r.defined[i])
        std::snprintf(buf, sizeof buf, "%10.1f", r.scores[i].normalized);
      else
        std::snprintf(buf, sizeof buf, "%10s", "n/a");
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

int run_score(const ldcd::cli::RunManifest& m, bool detectors_from_manifest) {
  if (m.corpus_dir.empty()) throw std::invalid_argument("score: --corpus is required");
  if (m.output_dir.empty()) throw std::invalid_argument("score: --results is required");
  if (m.profiles.empty()) throw std::invalid_argument("score: at least one profile required");
  if (m.threshold && !(*m.threshold >= 0.0 && *m.threshold <= 1.0))
    throw std::invalid_argument("score: --threshold must be in [0, 1]");
  if (!fs::is_directory(m.corpus_dir))
    throw std::invalid_argument("corpus directory not found: " + m.corpus_dir.string());

  std::vector<ldcd::ApplicationProfile> profiles;
  for (const auto& p : m.profiles) profiles.push_back(ldcd::profile_by_name(p));

  std::vector<std::string> detector_names;
  if (detectors_from_manifest) {
    for (const auto& d : m.detectors) detector_names.push_back(d.name);
  } else if (fs::is_directory(m.output_dir)) {
    for (const auto& e : fs::directory_iterator(m.output_dir))
      if (e.is_directory()) detector_names.push_back(e.path().filename().string());
    std::sort(detector_names.begin(), detector_names.end());
  }

  const auto datasets = ldcd::list_datasets(m.corpus_dir);
  if (datasets.empty()) std::cerr << "warning: no CSV datasets under " << m.corpus_dir.string() << "\n";

  std::optional<ldcd::LabelMap> label_map;
  if (!m.labels_path.empty()) label_map = ldcd::load_label_map(m.labels_path);

  bool partial = false;
  std::vector<DetectorReport> reports;
  for (const auto& name : detector_names) {
    DetectorReport rep;
    rep.name = name;
    std::vector<ldcd::LabeledScores> corpus;
    for (const auto& ds : datasets) {
      const fs::path score_path = m.output_dir / name / ds;
      try {
        if (!fs::exists(score_path)) throw ldcd::CorpusError("missing score file");
        const auto series = ldcd::load_series(m.corpus_dir / ds, ds);
        const auto scores = ldcd::read_scores(score_path);
        if (scores.abnormality.size() != series.size())
          throw ldcd::CorpusError("score file has " + std::to_string(scores.abnormality.size()) +
                                  " rows, series has " + std::to_string(series.size()));
        std::vector<std::size_t> labels = series.labels;
        if (label_map) {
          const auto it = label_map->find(ds);
          if (it == label_map->end()) throw ldcd::CorpusError("dataset missing from labels file");
          labels = ldcd::resolve_labels(it->second, series.timestamps);
        }
        corpus.push_back({scores.abnormality, ldcd::build_windows(labels, series.size()),
                          ldcd::probation_length(series.size())});
      } catch (const std::exception& e) {
        rep.skipped.emplace_back(ds, e.what());
      }
    }
    rep.datasets = corpus.size();
    partial = partial || !rep.skipped.empty();
    for (const auto& prof : profiles) {
      if (corpus.empty()) {
        rep.scores.push_back({prof.name});
        rep.defined.push_back(false);
        continue;
      }
      try {
        rep.scores.push_back(m.threshold ? ldcd::score_corpus_at(corpus, prof, *m.threshold)
                                         : ldcd::score_corpus(corpus, prof));
        rep.defined.push_back(true);
      } catch (const std::domain_error&) {
        ldcd::CorpusScore s;
        s.profile = prof.name;
        s.threshold = m.threshold ? *m.threshold : ldcd::optimize_threshold(corpus, prof).threshold;
        rep.scores.push_back(s);
        rep.defined.push_back(false);
      }
    }
    reports.push_back(std::move(rep));
  }

  json out = {{"corpus_dir", m.corpus_dir.generic_string()},
              {"threshold_mode", m.threshold ? "fixed" : "optimized"},
              {"profiles", json::array()},
              {"detectors", json::array()}};
  for (const auto& p : profiles)
    out["profiles"].push_back({{"name", p.name}, {"a_tp", p.a_tp}, {"a_fp", p.a_fp},
                               {"a_tn", p.a_tn}, {"a_fn", p.a_fn}});
  for (const auto& r : reports) {
    json scores = json::object();
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      const auto& s = r.scores[i];
      scores[s.profile] = {{"threshold", s.threshold},
                           {"raw", s.raw},
                           {"perfect", s.perfect},
                           {"null", s.null},
                           {"normalized", r.defined[i] ? json(s.normalized) : json(nullptr)}};
    }
    json skipped = json::array();
    for (const auto& [ds, why] : r.skipped) skipped.push_back({{"dataset", ds}, {"reason", why}});
    out["detectors"].push_back(
        {{"name", r.name}, {"datasets", r.datasets}, {"skipped", skipped}, {"scores", scores}});
  }

  const std::string table = format_table(reports, profiles);
  write_file(m.output_dir / "report.json", out.dump(2) + "\n");
  write_file(m.output_dir / "report.txt", table);
  std::cout << table;
  for (const auto& r : reports)
    for (const auto& [ds, why] : r.skipped)
      std::cerr << "skipped " << r.name << "/" << ds << ": " << why << "\n";
  return partial ? kExitPartial : kExitOk;
}

// --------------------------------------------------------------------------

struct DetectorFlags {
  std::size_t k = 27;
  std::size_t l = 19;
  double train_frac = ldcd::kProbationFraction;
  double calib_frac = ldcd::kProbationFraction;
  std::string method = "ldcd";
  std::string pruning = "on";
  std::size_t refit_every = 1;
  std::string name;

  ldcd::cli::DetectorSpec spec() const {
    ldcd::cli::DetectorSpec d;
    d.base.k = k;
    d.base.l = l;
    d.base.method = ldcd::parse_method(method);
    if (pruning != "on" && pruning != "off") throw std::invalid_argument("--pruning must be on or off");
    d.base.pruning = pruning == "on";
    d.base.refit_every = refit_every;
    d.train_frac = train_frac;
    d.calib_frac = calib_frac;
    d.name = name.empty() ? d.default_name() : name;
    return d;
  }
};

void add_detector_flags(CLI::App* cmd, DetectorFlags& f) {
  cmd->add_option("--k", f.k, "Number of nearest neighbours")->capture_default_str();
  cmd->add_option("--embed-dim", f.l, "Embedding dimension l")->capture_default_str();
  cmd->add_option("--train-frac", f.train_frac, "Training window as a fraction of series length")
      ->capture_default_str();
  cmd->add_option("--calib-frac", f.calib_frac, "Calibration queue as a fraction of series length")
      ->capture_default_str();
  cmd->add_option("--method", f.method, "Score normalization")
      ->check(CLI::IsMember({"ldcd", "dynr"}))
      ->capture_default_str();
  cmd->add_option("--pruning", f.pruning, "Alarm pruning")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  cmd->add_option("--refit-every", f.refit_every, "Refit the metric every r steps")
      ->capture_default_str();
  cmd->add_option("--name", f.name, "Detector name (output subdirectory)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal k-NN anomaly detection benchmark runner"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic corpus");
  synth_cmd->add_option("--manifest", synth.manifest, "JSON list of synthetic series specs");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--preset", synth.preset, "Built-in corpus when no manifest is given")
      ->capture_default_str();
  synth_cmd->add_option("--count", synth.count, "Series in the preset corpus")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Preset corpus seed")->capture_default_str();
  synth_cmd->add_option("--length", synth.length, "Preset series length")->capture_default_str();

  DetectorFlags det_flags;
  ldcd::cli::RunManifest run;
  fs::path detect_manifest;
  auto* detect_cmd = app.add_subcommand("detect", "Run a detector over every CSV in a corpus");
  detect_cmd->add_option("--corpus", run.corpus_dir, "Corpus directory");
  detect_cmd->add_option("--out", run.output_dir, "Results directory");
  detect_cmd->add_option("--threads", run.parallelism, "Worker threads")->capture_default_str();
  detect_cmd->add_option("--manifest", detect_manifest, "Run manifest (overrides flags)");
  add_detector_flags(detect_cmd, det_flags);

  ldcd::cli::RunManifest score_run;
  fs::path score_manifest;
  std::vector<std::string> profiles;
  auto* score_cmd = app.add_subcommand("score", "Score detector outputs with NAB profiles");
  score_cmd->add_option("--corpus", score_run.corpus_dir, "Corpus directory");
  score_cmd->add_option("--labels", score_run.labels_path,
                        "Labels JSON (dataset -> timestamps); inline labels otherwise");
  score_cmd->add_option("--results", score_run.output_dir, "Results directory written by detect");
  score_cmd->add_option("--profile", profiles, "Application profiles (default: all three)")
      ->delimiter(',');
  score_cmd->add_option("--threshold", score_run.threshold,
                        "Fixed detection threshold (default: optimized per profile)");
  score_cmd->add_option("--manifest", score_manifest, "Run manifest (overrides flags)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*detect_cmd) {
      run.detectors = {det_flags.spec()};
      if (!detect_manifest.empty()) ldcd::cli::apply_manifest(detect_manifest, run);
      return run_detect(run);
    }
    if (*score_cmd) {
      if (!profiles.empty()) score_run.profiles = profiles;
      bool from_manifest = false;
      if (!score_manifest.empty()) {
        ldcd::cli::apply_manifest(score_manifest, score_run);
        from_manifest = !score_run.detectors.empty();
      }
      return run_score(score_run, from_manifest);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  }
  return kExitOk;
}
