#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "ldcd/rng.hpp"
#include "ldcd/series.hpp"

namespace ldcd {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input; `line` is 1-based (0 when not tied to a line).
class ParseError : public CorpusError {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : CorpusError(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

/// Shortest decimal that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// CSV with a header row; rows keep their 1-based source line.
struct CsvTable {
  std::vector<std::string> header;
  struct Row {
    std::size_t line;
    std::vector<std::string> fields;
  };
  std::vector<Row> rows;

  std::ptrdiff_t column(std::initializer_list<std::string_view> names) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      for (auto n : names)
        if (header[i] == n) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
};

inline CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (!have_header) {
      for (auto f : fields) {
        std::string h(f);
        std::transform(h.begin(), h.end(), h.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        table.header.push_back(std::move(h));
      }
      have_header = true;
      continue;
    }
    if (fields.size() < table.header.size())
      throw ParseError(source, lineno,
                       "expected " + std::to_string(table.header.size()) + " fields, got " +
                           std::to_string(fields.size()));
    table.rows.push_back({lineno, {fields.begin(), fields.end()}});
  }
  if (!have_header) throw ParseError(source, 0, "missing header");
  return table;
}

/// Numeric when both keys parse as numbers, lexicographic otherwise.
inline bool timestamp_less(const std::string& a, const std::string& b) {
  double x = 0.0, y = 0.0;
  if (parse_double(a, x) && parse_double(b, y)) return x < y;
  return a < b;
}

}  // namespace detail

/// Parses a NAB (`timestamp,value`) or Yahoo S5 (`timestamp,value,is_anomaly`)
/// CSV. Extra columns are ignored. Rows stay in file order; timestamps must be
/// strictly increasing.
inline TimeSeries parse_series(std::istream& in, const std::string& name) {
  const auto table = detail::read_csv(in, name);
  const auto ts_col = table.column({"timestamp", "timestamps"});
  const auto val_col = table.column({"value"});
  const auto lab_col = table.column({"is_anomaly", "anomaly"});
  if (ts_col < 0 || val_col < 0)
    throw ParseError(name, 1, "header must contain timestamp and value columns");

  TimeSeries s;
  s.name = name;
  s.timestamps.reserve(table.rows.size());
  s.values.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    const auto& ts = row.fields[static_cast<std::size_t>(ts_col)];
    double v = 0.0;
    if (ts.empty()) throw ParseError(name, row.line, "empty timestamp");
    if (!detail::parse_double(row.fields[static_cast<std::size_t>(val_col)], v))
      throw ParseError(name, row.line,
                       "bad value '" + row.fields[static_cast<std::size_t>(val_col)] + "'");
    if (!s.timestamps.empty() && !detail::timestamp_less(s.timestamps.back(), ts))
      throw ParseError(name, row.line,
                       "timestamps not increasing: '" + ts + "' after '" + s.timestamps.back() + "'");
    if (lab_col >= 0) {
      const auto& lab = row.fields[static_cast<std::size_t>(lab_col)];
      if (lab == "1") s.labels.push_back(s.values.size());
      else if (lab != "0") throw ParseError(name, row.line, "bad anomaly flag '" + lab + "'");
    }
    s.timestamps.push_back(ts);
    s.values.push_back(v);
  }
  return s;
}

inline TimeSeries load_series(const std::filesystem::path& path, const std::string& name = {}) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  return parse_series(in, name.empty() ? path.filename().string() : name);
}

/// Writes `timestamp,value` (plus `is_anomaly` when requested).
inline void write_series(std::ostream& out, const TimeSeries& s, bool with_labels = false) {
  out << (with_labels ? "timestamp,value,is_anomaly\n" : "timestamp,value\n");
  std::size_t next_label = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << s.timestamps[i] << ',' << detail::format_double(s.values[i]);
    if (with_labels) {
      const bool is = next_label < s.labels.size() && s.labels[next_label] == i;
      if (is) ++next_label;
      out << ',' << (is ? '1' : '0');
    }
    out << '\n';
  }
}

using LabelMap = std::map<std::string, std::vector<std::string>>;

/// Reads a combined-labels JSON object: dataset path -> anomaly timestamps.
inline LabelMap load_label_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!j.is_object()) throw ParseError(path.string(), 0, "labels file must be a JSON object");
  LabelMap out;
  for (const auto& [key, stamps] : j.items()) {
    if (!stamps.is_array()) throw ParseError(path.string(), 0, "labels for " + key + " must be an array");
    auto& v = out[key];
    for (const auto& s : stamps) v.push_back(s.is_string() ? s.get<std::string>() : s.dump());
  }
  return out;
}

/// Drops an all-zero fractional-seconds suffix ("10:50:00.000000" -> "10:50:00").
inline std::string canonical_timestamp(std::string_view s) {
  const auto dot = s.rfind('.');
  if (dot == std::string_view::npos || s.find(':') == std::string_view::npos || dot < s.rfind(':'))
    return std::string(s);
  const auto frac = s.substr(dot + 1);
  if (frac.empty() || frac.find_first_not_of('0') != std::string_view::npos) return std::string(s);
  return std::string(s.substr(0, dot));
}

/// Maps anomaly timestamps to row indices by exact match (after
/// canonical_timestamp on both sides).
inline std::vector<std::size_t> resolve_labels(std::span<const std::string> stamps,
                                               std::span<const std::string> timestamps) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < timestamps.size(); ++i)
    index.emplace(canonical_timestamp(timestamps[i]), i);
  std::vector<std::size_t> out;
  std::string unmatched;
  for (const auto& s : stamps) {
    auto it = index.find(canonical_timestamp(s));
    if (it == index.end()) {
      unmatched += (unmatched.empty() ? "" : ", ") + s;
      continue;
    }
    out.push_back(it->second);
  }
  if (!unmatched.empty()) throw CorpusError("unmatched label timestamps: " + unmatched);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<std::size_t> load_labels(const std::filesystem::path& path,
                                            const std::string& dataset_name,
                                            std::span<const std::string> timestamps) {
  const auto map = load_label_map(path);
  const auto it = map.find(dataset_name);
  if (it == map.end()) throw CorpusError("no labels for dataset " + dataset_name);
  return resolve_labels(it->second, timestamps);
}

/// Relative paths of all CSV files under `root`, sorted, with '/' separators.
inline std::vector<std::string> list_datasets(const std::filesystem::path& root) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(root)) throw CorpusError("not a directory: " + root.string());
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    out.push_back(std::filesystem::relative(e.path(), root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Per-point score files

struct ScoreFile {
  std::vector<std::string> timestamps;
  std::vector<double> values;
  std::vector<double> abnormality;
};

inline void write_scores(std::ostream& out, std::span<const std::string> timestamps,
                         std::span<const double> values, std::span<const double> abnormality) {
  out << "timestamp,value,abnormality\n";
  for (std::size_t i = 0; i < abnormality.size(); ++i)
    out << timestamps[i] << ',' << detail::format_double(values[i]) << ','
        << detail::format_double(abnormality[i]) << '\n';
}

inline ScoreFile read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  const auto table = detail::read_csv(in, path.string());
  const auto ts = table.column({"timestamp"});
  const auto val = table.column({"value"});
  const auto ab = table.column({"abnormality"});
  if (ts < 0 || val < 0 || ab < 0)
    throw ParseError(path.string(), 1, "expected header timestamp,value,abnormality");
  ScoreFile f;
  for (const auto& row : table.rows) {
    double v = 0.0, a = 0.0;
    if (!detail::parse_double(row.fields[static_cast<std::size_t>(val)], v) ||
        !detail::parse_double(row.fields[static_cast<std::size_t>(ab)], a))
      throw ParseError(path.string(), row.line, "bad number");
    f.timestamps.push_back(row.fields[static_cast<std::size_t>(ts)]);
    f.values.push_back(v);
    f.abnormality.push_back(a);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Synthetic streams

enum class AnomalyKind { Spike, LevelShift };

struct InjectedAnomaly {
  std::size_t index = 0;
  AnomalyKind kind = AnomalyKind::Spike;
  double magnitude = 0.0;
};

struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t length = 1000;
  double period = 50.0;
  double noise_sd = 0.0;
  double trend = 0.0;
  std::vector<InjectedAnomaly> anomalies;
  std::uint64_t seed = 0;

  /// Anomalies must lie after the probationary region and inside the series.
  void validate() const {
    if (length == 0) throw std::invalid_argument(name + ": length must be positive");
    if (!(period > 0.0)) throw std::invalid_argument(name + ": period must be positive");
    if (!(noise_sd >= 0.0)) throw std::invalid_argument(name + ": noise_sd must be >= 0");
    const std::size_t probation = probation_length(length);
    for (const auto& a : anomalies) {
      if (a.index < probation)
        throw std::invalid_argument(name + ": anomaly at " + std::to_string(a.index) +
                                    " lies inside the probationary period");
      if (a.index >= length)
        throw std::invalid_argument(name + ": anomaly at " + std::to_string(a.index) +
                                    " is past the end of the series");
    }
  }
};

/// trend*t + sin(2 pi t / period) + N(0, noise_sd^2), plus injected anomalies.
/// Timestamps are the row numbers. Deterministic for a given spec.
inline TimeSeries generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  TimeSeries s;
  s.name = spec.name;
  s.values.resize(spec.length);
  s.timestamps.resize(spec.length);
  for (std::size_t t = 0; t < spec.length; ++t) {
    const double td = static_cast<double>(t);
    const double noise = rng.normal();
    s.values[t] = spec.trend * td + std::sin(2.0 * std::numbers::pi * td / spec.period) +
                  spec.noise_sd * noise;
    s.timestamps[t] = std::to_string(t);
  }
  for (const auto& a : spec.anomalies) {
    if (a.kind == AnomalyKind::Spike) {
      s.values[a.index] += a.magnitude;
    } else {
      for (std::size_t t = a.index; t < spec.length; ++t) s.values[t] += a.magnitude;
    }
    s.labels.push_back(a.index);
  }
  std::sort(s.labels.begin(), s.labels.end());
  s.labels.erase(std::unique(s.labels.begin(), s.labels.end()), s.labels.end());
  return s;
}

/// A corpus of noisy sinusoids with random period, noise and trend, each with
/// one to three spikes or level shifts after the probationary period.
inline std::vector<SyntheticSpec> quasi_periodic_corpus(std::size_t count, std::uint64_t seed,
                                                        std::size_t length = 2000) {
  std::vector<SyntheticSpec> out;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticSpec s;
    s.name = "synthetic_" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    s.length = length;
    s.period = rng.uniform(20.0, 120.0);
    s.noise_sd = rng.uniform(0.05, 0.2);
    s.trend = rng.uniform(-2.0, 2.0) / static_cast<double>(length);
    s.seed = rng.next();
    const std::size_t n_anom = static_cast<std::size_t>(rng.integer(1, 3));
    // anomalies well clear of the probation and warm-up region and of each other
    const std::size_t lo = length * 2 / 5;
    const std::size_t hi = length - length / 20;
    const std::size_t slot = (hi - lo) / n_anom;
    for (std::size_t a = 0; a < n_anom; ++a) {
      InjectedAnomaly an;
      an.index = lo + a * slot + static_cast<std::size_t>(rng.integer(0, slot / 2));
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      if (rng.uniform() < 0.6) {
        an.kind = AnomalyKind::Spike;
        an.magnitude = sign * rng.uniform(1.5, 3.0);
      } else {
        an.kind = AnomalyKind::LevelShift;
        an.magnitude = sign * rng.uniform(1.0, 2.0);
      }
      s.anomalies.push_back(an);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// JSON (synthetic corpus manifests)

NLOHMANN_JSON_SERIALIZE_ENUM(AnomalyKind, {{AnomalyKind::Spike, "spike"},
                                           {AnomalyKind::LevelShift, "level_shift"}})

inline void to_json(nlohmann::json& j, const InjectedAnomaly& a) {
  j = {{"index", a.index}, {"kind", a.kind}, {"magnitude", a.magnitude}};
}

inline void from_json(const nlohmann::json& j, InjectedAnomaly& a) {
  a.index = j.at("index").get<std::size_t>();
  a.kind = j.value("kind", AnomalyKind::Spike);
  a.magnitude = j.at("magnitude").get<double>();
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"name", s.name},   {"length", s.length},       {"period", s.period},
       {"noise_sd", s.noise_sd}, {"trend", s.trend}, {"seed", s.seed},
       {"anomalies", s.anomalies}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.name = j.at("name").get<std::string>();
  s.length = j.at("length").get<std::size_t>();
  s.period = j.value("period", 50.0);
  s.noise_sd = j.value("noise_sd", 0.0);
  s.trend = j.value("trend", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  s.anomalies = j.value("anomalies", std::vector<InjectedAnomaly>{});
}

}  // namespace ldcd
