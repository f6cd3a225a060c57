#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ldcd/corpus.hpp"
#include "ldcd/nab_score.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LDCD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ldcd_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

json spec_list(std::size_t count, std::size_t length) {
  json specs = json::array();
  for (std::size_t i = 0; i < count; ++i)
    specs.push_back({{"name", "s" + std::to_string(i)},
                     {"length", length},
                     {"period", 20.0 + static_cast<double>(i)},
                     {"noise_sd", 0.1},
                     {"seed", i},
                     {"anomalies", {{{"index", length * 3 / 4}, {"kind", "spike"}, {"magnitude", 4.0}}}}});
  return specs;
}

// A corpus of `count` short series with one labeled spike each.
fs::path make_corpus(const std::string& name, std::size_t count, std::size_t length = 400) {
  const auto dir = fresh(name);
  write_text(dir / "spec.json", spec_list(count, length).dump());
  EXPECT_EQ(run("synth --manifest " + q(dir / "spec.json") + " --out " + q(dir / "corpus")), 0);
  return dir;
}

// Hand-written score files: ones at the given rows, zeros elsewhere.
void write_score_files(const fs::path& corpus, const fs::path& results, const std::string& det,
                       const std::function<std::vector<double>(const ldcd::TimeSeries&)>& pick) {
  for (const auto& ds : ldcd::list_datasets(corpus)) {
    const auto s = ldcd::load_series(corpus / ds, ds);
    const auto a = pick(s);
    fs::create_directories((results / det / ds).parent_path());
    std::ofstream out(results / det / ds);
    ldcd::write_scores(out, s.timestamps, s.values, a);
  }
}

std::vector<std::size_t> labels_of(const fs::path& corpus, const ldcd::TimeSeries& s) {
  const auto map = ldcd::load_label_map(corpus / "labels.json");
  return ldcd::resolve_labels(map.at(s.name), s.timestamps);
}

double normalized(const json& report, const std::string& det, const std::string& profile) {
  for (const auto& d : report["detectors"])
    if (d["name"] == det) return d["scores"][profile]["normalized"].get<double>();
  ADD_FAILURE() << "detector " << det << " not in report";
  return 0.0;
}

}  // namespace

TEST(CliSynth, WritesManifestCorpusDeterministically) {
  const auto dir = make_corpus("synth", 10);
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "corpus"))
    if (e.path().extension() == ".csv") ++csvs;
  EXPECT_EQ(csvs, 10u);
  const auto labels = json::parse(slurp(dir / "corpus" / "labels.json"));
  EXPECT_EQ(labels.size(), 10u);
  EXPECT_EQ(labels["s0.csv"], json::array({"300"}));

  ASSERT_EQ(run("synth --manifest " + q(dir / "spec.json") + " --out " + q(dir / "again")), 0);
  for (const auto& e : fs::directory_iterator(dir / "corpus"))
    EXPECT_EQ(slurp(e.path()), slurp(dir / "again" / e.path().filename())) << e.path();
}

TEST(CliSynth, AnomalyInProbationIsInvalid) {
  const auto dir = fresh("synth_bad");
  auto specs = spec_list(1, 400);
  specs[0]["anomalies"][0]["index"] = 10;
  write_text(dir / "spec.json", specs.dump());
  EXPECT_EQ(run("synth --manifest " + q(dir / "spec.json") + " --out " + q(dir / "c")), 2);
}

TEST(CliSynth, PresetCorpus) {
  const auto dir = fresh("preset");
  ASSERT_EQ(run("synth --out " + q(dir) + " --count 3 --seed 7 --length 500"), 0);
  EXPECT_EQ(ldcd::list_datasets(dir).size(), 3u);
}

TEST(CliArgs, UnknownOptionsAndValuesAreInvalid) {
  EXPECT_EQ(run("detect --bogus"), 2);
  EXPECT_EQ(run("detect --corpus /tmp --out /tmp/x --pruning maybe"), 2);
  EXPECT_EQ(run("detect --corpus /nonexistent_dir --out /tmp/x"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST(CliDetect, EmptyCorpusSucceeds) {
  const auto dir = fresh("empty");
  fs::create_directories(dir / "corpus");
  EXPECT_EQ(run("detect --corpus " + q(dir / "corpus") + " --out " + q(dir / "out")), 0);
}

TEST(CliDetect, TwoDetectorsFromManifest) {
  const auto dir = make_corpus("detect", 1);
  const json manifest = {
      {"corpus_dir", (dir / "corpus").string()},
      {"output_dir", (dir / "out").string()},
      {"detectors",
       {{{"name", "a"}, {"k", 5}, {"l", 4}}, {{"name", "b"}, {"k", 5}, {"l", 4}, {"method", "dynr"}}}}};
  write_text(dir / "run.json", manifest.dump());
  ASSERT_EQ(run("detect --manifest " + q(dir / "run.json")), 0);
  ASSERT_TRUE(fs::exists(dir / "out" / "a" / "s0.csv"));
  ASSERT_TRUE(fs::exists(dir / "out" / "b" / "s0.csv"));
  const auto a = ldcd::read_scores(dir / "out" / "a" / "s0.csv");
  EXPECT_EQ(a.abnormality.size(), 400u);
  for (double v : a.abnormality) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const std::string first = slurp(dir / "out" / "a" / "s0.csv");
  ASSERT_EQ(run("detect --manifest " + q(dir / "run.json")), 0);
  EXPECT_EQ(slurp(dir / "out" / "a" / "s0.csv"), first);
  const auto report = json::parse(slurp(dir / "out" / "detect_report.json"));
  EXPECT_EQ(report["detectors"].size(), 2u);
}

TEST(CliScore, OracleSilentAndFalsePositiveOnly) {
  const auto dir = make_corpus("score", 3);
  const auto corpus = dir / "corpus";
  const auto results = dir / "results";
  write_score_files(corpus, results, "oracle", [&](const ldcd::TimeSeries& s) {
    const auto windows = ldcd::build_windows(labels_of(corpus, s), s.size());
    return ldcd::oracle_detections(s.size(), windows, ldcd::probation_length(s.size()));
  });
  write_score_files(corpus, results, "silent",
                    [](const ldcd::TimeSeries& s) { return std::vector<double>(s.size(), 0.0); });
  write_score_files(corpus, results, "fp_only", [&](const ldcd::TimeSeries& s) {
    std::vector<double> a(s.size(), 0.0);
    a[ldcd::probation_length(s.size()) + 5] = 1.0;
    return a;
  });
  ASSERT_EQ(run("score --corpus " + q(corpus) + " --labels " + q(corpus / "labels.json") +
                " --results " + q(results)),
            0);
  const auto report = json::parse(slurp(results / "report.json"));
  for (const char* p : {"LowFN", "LowFP", "Standard"}) {
    EXPECT_NEAR(normalized(report, "oracle", p), 100.0, 1e-9);
    EXPECT_NEAR(normalized(report, "silent", p), 0.0, 1e-9);
  }
  // Threshold 1.0 silences the false positives, so the optimized score is 0.
  EXPECT_NEAR(normalized(report, "fp_only", "Standard"), 0.0, 1e-9);

  const auto raw = [&](const std::string& det) {
    for (const auto& d : report["detectors"])
      if (d["name"] == det) return d["scores"]["Standard"]["null"].get<double>();
    return 0.0;
  };
  EXPECT_EQ(raw("silent"), -3.0);

  ASSERT_EQ(run("score --corpus " + q(corpus) + " --labels " + q(corpus / "labels.json") +
                " --results " + q(results) + " --threshold 0.5"),
            0);
  const auto fixed = json::parse(slurp(results / "report.json"));
  EXPECT_EQ(fixed["threshold_mode"], "fixed");
  EXPECT_LT(normalized(fixed, "fp_only", "Standard"), 0.0);
  EXPECT_NEAR(normalized(fixed, "oracle", "Standard"), 100.0, 1e-9);

  const std::string table = slurp(results / "report.txt");
  EXPECT_NE(table.find("LowFN"), std::string::npos);
  EXPECT_LT(table.find("LowFN"), table.find("LowFP"));
  EXPECT_LT(table.find("LowFP"), table.find("Standard"));
}

TEST(CliScore, MissingScoreFileIsPartial) {
  const auto dir = make_corpus("partial", 2);
  const auto corpus = dir / "corpus";
  write_score_files(corpus, dir / "results", "silent",
                    [](const ldcd::TimeSeries& s) { return std::vector<double>(s.size(), 0.0); });
  fs::remove(dir / "results" / "silent" / "s1.csv");
  EXPECT_EQ(run("score --corpus " + q(corpus) + " --results " + q(dir / "results")), 1);
  const auto report = json::parse(slurp(dir / "results" / "report.json"));
  EXPECT_EQ(report["detectors"][0]["skipped"].size(), 1u);
  EXPECT_EQ(report["detectors"][0]["datasets"], 1);
}

TEST(CliScore, EndToEndDeterministic) {
  const auto dir = make_corpus("e2e", 3, 600);
  const auto corpus = dir / "corpus";
  const std::string detect = "detect --corpus " + q(corpus) + " --out " + q(dir / "out") +
                             " --k 5 --embed-dim 4 --name det";
  const std::string score = "score --corpus " + q(corpus) + " --labels " + q(corpus / "labels.json") +
                            " --results " + q(dir / "out") + " --profile Standard,LowFP";
  ASSERT_EQ(run(detect), 0);
  ASSERT_EQ(run(score), 0);
  const std::string first = slurp(dir / "out" / "report.json");
  ASSERT_EQ(run(detect + " --threads 3"), 0);
  ASSERT_EQ(run(score), 0);
  EXPECT_EQ(slurp(dir / "out" / "report.json"), first);
  const auto report = json::parse(first);
  EXPECT_EQ(report["profiles"].size(), 2u);
  EXPECT_GT(normalized(report, "det", "Standard"), 50.0);
}
