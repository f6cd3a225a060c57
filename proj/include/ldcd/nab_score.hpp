#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ldcd {

/// Detection rewards (A_TP, A_FP, A_TN, A_FN).
struct ApplicationProfile {
  std::string name;
  double a_tp = 1.0;
  double a_fp = -0.11;
  double a_tn = 1.0;
  double a_fn = -1.0;
};

inline ApplicationProfile standard_profile() { return {"Standard", 1.0, -0.11, 1.0, -1.0}; }
inline ApplicationProfile low_fp_profile() { return {"LowFP", 1.0, -0.22, 1.0, -1.0}; }
inline ApplicationProfile low_fn_profile() { return {"LowFN", 1.0, -0.11, 1.0, -2.0}; }

/// Report column order.
inline std::vector<ApplicationProfile> builtin_profiles() {
  return {low_fn_profile(), low_fp_profile(), standard_profile()};
}

/// Accepts "Standard", "LowFP", "LowFN" and snake_case spellings, any case.
inline ApplicationProfile profile_by_name(std::string_view name) {
  std::string key;
  for (char c : name)
    if (c != '_' && c != '-') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "standard") return standard_profile();
  if (key == "lowfp") return low_fp_profile();
  if (key == "lowfn") return low_fn_profile();
  throw std::invalid_argument("unknown application profile: " + std::string(name));
}

/// Closed row interval around a labeled anomaly.
struct AnomalyWindow {
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t center = 0;

  std::size_t width() const noexcept { return std::max<std::size_t>(1, right - left); }
  bool contains(std::size_t t) const noexcept { return left <= t && t <= right; }

  friend bool operator==(const AnomalyWindow&, const AnomalyWindow&) = default;
};

inline constexpr double kWindowFraction = 0.10;

/// One window per label, total width about `fraction` of the series split
/// evenly between labels. Windows are centered on their label with the odd
/// extra row on the right, clipped to the series, and overlapping windows are
/// merged keeping the earlier center.
inline std::vector<AnomalyWindow> build_windows(std::span<const std::size_t> labels,
                                                std::size_t series_len,
                                                double fraction = kWindowFraction) {
  std::vector<AnomalyWindow> out;
  if (labels.empty()) return out;
  if (series_len == 0) throw std::invalid_argument("build_windows: empty series");
  const double per_label =
      fraction * static_cast<double>(series_len) / static_cast<double>(labels.size());
  const auto width = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(per_label)));
  const std::size_t half_left = width / 2;
  const std::size_t half_right = width - half_left;

  std::size_t prev = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = labels[i];
    if (c >= series_len)
      throw std::invalid_argument("build_windows: label " + std::to_string(c) + " out of range");
    if (i > 0 && c < prev) throw std::invalid_argument("build_windows: labels must be sorted");
    prev = c;

    AnomalyWindow w{c >= half_left ? c - half_left : 0,
                    std::min(series_len - 1, c + half_right), c};
    if (!out.empty() && w.left <= out.back().right) {
      out.back().right = std::max(out.back().right, w.right);
      continue;
    }
    out.push_back(w);
  }
  return out;
}

/// Detection reward at normalized position tau relative to a window's right
/// end (the window interior is tau in [-1, 0]). A_FP before the window.
inline double sigma(double tau, const ApplicationProfile& profile) {
  if (tau < -1.0) return profile.a_fp;
  return (profile.a_tp - profile.a_fp) / (1.0 + std::exp(5.0 * tau)) + profile.a_fp;
}

/// Penalty for a detection tau > 0 window widths after the preceding window:
/// zero at the window end, strictly negative afterwards, tending to A_FP.
inline double tardy_penalty(double tau, const ApplicationProfile& profile) {
  return profile.a_fp * (1.0 - 2.0 / (1.0 + std::exp(5.0 * tau)));
}

enum class DetectionKind { TruePositive, Tardy, FalsePositive };

struct Detection {
  std::size_t index = 0;
  double value = 0.0;
  DetectionKind kind = DetectionKind::FalsePositive;
};

struct DatasetScore {
  double raw = 0.0;
  std::vector<Detection> per_detection;
  std::size_t missed_windows = 0;
};

namespace detail {

/// Contribution of a detection at t given the window cursor `wi` (first window
/// whose right end is >= t). Returns false for in-window detections, which
/// the caller resolves.
inline bool outside_contribution(std::size_t t, std::size_t wi,
                                 std::span<const AnomalyWindow> windows,
                                 const ApplicationProfile& profile, Detection& out) {
  if (wi < windows.size() && windows[wi].left <= t) return false;
  out.index = t;
  if (wi > 0) {
    const auto& prev = windows[wi - 1];
    const double tau = static_cast<double>(t - prev.right) / static_cast<double>(prev.width());
    out.value = tardy_penalty(tau, profile);
    out.kind = DetectionKind::Tardy;
  } else {
    out.value = profile.a_fp;
    out.kind = DetectionKind::FalsePositive;
  }
  return true;
}

inline double true_positive_reward(std::size_t t, const AnomalyWindow& w,
                                   const ApplicationProfile& profile) {
  const double tau = (static_cast<double>(t) - static_cast<double>(w.right)) /
                     static_cast<double>(w.width());
  return sigma(tau, profile);
}

}  // namespace detail

/// Scores one dataset at a fixed threshold. Detections are rows t >= probation
/// with abnormality > threshold. Only the earliest detection in each window
/// counts; later ones in the same window are ignored. Out-of-window detections
/// after a window are tardy, earlier ones are plain false positives.
inline DatasetScore score_dataset(std::span<const double> abnormality, double threshold,
                                  std::span<const AnomalyWindow> windows,
                                  const ApplicationProfile& profile, std::size_t probation) {
  DatasetScore score;
  std::vector<bool> hit(windows.size(), false);
  std::size_t wi = 0;
  for (std::size_t t = probation; t < abnormality.size(); ++t) {
    while (wi < windows.size() && windows[wi].right < t) ++wi;
    if (!(abnormality[t] > threshold)) continue;
    Detection d;
    if (!detail::outside_contribution(t, wi, windows, profile, d)) {
      if (hit[wi]) continue;
      hit[wi] = true;
      d = {t, detail::true_positive_reward(t, windows[wi], profile), DetectionKind::TruePositive};
    }
    score.per_detection.push_back(d);
    score.raw += d.value;
  }
  score.missed_windows = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), false));
  score.raw += profile.a_fn * static_cast<double>(score.missed_windows);
  return score;
}

/// Abnormality vector of the ideal detector: one alarm at the first
/// post-probation row of each window.
inline std::vector<double> oracle_detections(std::size_t length,
                                             std::span<const AnomalyWindow> windows,
                                             std::size_t probation) {
  std::vector<double> out(length, 0.0);
  for (const auto& w : windows) {
    const std::size_t first = std::max(w.left, probation);
    if (first <= w.right && first < length) out[first] = 1.0;
  }
  return out;
}

inline double perfect_score(std::size_t length, std::span<const AnomalyWindow> windows,
                            const ApplicationProfile& profile, std::size_t probation) {
  const auto det = oracle_detections(length, windows, probation);
  return score_dataset(det, 0.5, windows, profile, probation).raw;
}

inline double null_score(std::size_t length, std::span<const AnomalyWindow> windows,
                         const ApplicationProfile& profile, std::size_t probation) {
  const std::vector<double> silent(length, 0.0);
  return score_dataset(silent, 0.5, windows, profile, probation).raw;
}

/// 100 * (raw - null) / (perfect - null).
inline double nab_normalize(double raw, double perfect, double null) {
  if (perfect == null)
    throw std::domain_error("nab_normalize: perfect and null scores coincide (no anomaly windows?)");
  return 100.0 * (raw - null) / (perfect - null);
}

/// Detector output for one dataset together with its ground truth.
struct LabeledScores {
  std::vector<double> abnormality;
  std::vector<AnomalyWindow> windows;
  std::size_t probation = 0;
};

struct ThresholdResult {
  double threshold = 1.0;
  double raw = 0.0;
};

/// Exhaustive corpus-level threshold search.
///
/// Candidates are {v - ulp : v an abnormality value} plus 1.0, so every
/// distinct detection set is tried once. Thresholds are swept from high to
/// low while detections are added incrementally; a lower threshold only wins
/// on a strict improvement, so ties resolve to the highest threshold.
inline ThresholdResult optimize_threshold(std::span<const LabeledScores> corpus,
                                          const ApplicationProfile& profile) {
  if (corpus.empty()) throw std::invalid_argument("optimize_threshold: empty corpus");

  struct Event {
    double value;
    std::size_t dataset;
    std::size_t t;
  };
  std::vector<Event> events;
  long double total = 0.0L;
  std::vector<std::vector<std::size_t>> earliest(corpus.size());
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  // in_window[d][t]: window index containing t, or kNone
  std::vector<std::vector<std::size_t>> in_window(corpus.size());
  std::vector<std::vector<double>> outside(corpus.size());

  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& ds = corpus[d];
    earliest[d].assign(ds.windows.size(), kNone);
    in_window[d].assign(ds.abnormality.size(), kNone);
    outside[d].assign(ds.abnormality.size(), 0.0);
    total += profile.a_fn * static_cast<long double>(ds.windows.size());
    std::size_t wi = 0;
    for (std::size_t t = ds.probation; t < ds.abnormality.size(); ++t) {
      while (wi < ds.windows.size() && ds.windows[wi].right < t) ++wi;
      Detection d0;
      if (detail::outside_contribution(t, wi, ds.windows, profile, d0))
        outside[d][t] = d0.value;
      else
        in_window[d][t] = wi;
      events.push_back({ds.abnormality[t], d, t});
    }
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.value > b.value; });

  ThresholdResult best{1.0, static_cast<double>(total)};
  // Tolerance guards the tie-break against accumulated rounding.
  const auto improves = [&](long double candidate) {
    const long double scale = std::max<long double>(1.0L, std::fabs(static_cast<long double>(best.raw)));
    return candidate > static_cast<long double>(best.raw) + 1e-9L * scale;
  };

  std::size_t i = 0;
  while (i < events.size()) {
    const double v = events[i].value;
    for (; i < events.size() && events[i].value == v; ++i) {
      const auto& e = events[i];
      const std::size_t w = in_window[e.dataset][e.t];
      if (w == kNone) {
        total += outside[e.dataset][e.t];
        continue;
      }
      const auto& win = corpus[e.dataset].windows[w];
      std::size_t& first = earliest[e.dataset][w];
      if (first == kNone) {
        total += detail::true_positive_reward(e.t, win, profile) - profile.a_fn;
        first = e.t;
      } else if (e.t < first) {
        total += detail::true_positive_reward(e.t, win, profile) -
                 detail::true_positive_reward(first, win, profile);
        first = e.t;
      }
    }
    if (v > 1.0) continue;  // thresholds above 1 are not candidates
    if (improves(total)) {
      best.threshold = std::nextafter(v, -std::numeric_limits<double>::infinity());
      best.raw = static_cast<double>(total);
    }
  }
  return best;
}

struct CorpusScore {
  std::string profile;
  double threshold = 1.0;
  double raw = 0.0;
  double perfect = 0.0;
  double null = 0.0;
  double normalized = 0.0;
};

/// Raw, perfect, null and normalized scores summed over datasets at a fixed
/// threshold.
inline CorpusScore score_corpus_at(std::span<const LabeledScores> corpus,
                                   const ApplicationProfile& profile, double threshold) {
  CorpusScore out;
  out.profile = profile.name;
  out.threshold = threshold;
  for (const auto& ds : corpus) {
    out.raw += score_dataset(ds.abnormality, threshold, ds.windows, profile, ds.probation).raw;
    out.perfect += perfect_score(ds.abnormality.size(), ds.windows, profile, ds.probation);
    out.null += null_score(ds.abnormality.size(), ds.windows, profile, ds.probation);
  }
  out.normalized = nab_normalize(out.raw, out.perfect, out.null);
  return out;
}

/// Optimizes one shared threshold for the corpus, then scores at it.
inline CorpusScore score_corpus(std::span<const LabeledScores> corpus,
                                const ApplicationProfile& profile) {
  return score_corpus_at(corpus, profile, optimize_threshold(corpus, profile).threshold);
}

}  // namespace ldcd
