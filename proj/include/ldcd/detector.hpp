#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ldcd/conformal.hpp"
#include "ldcd/embedding.hpp"
#include "ldcd/metric_ncm.hpp"
#include "ldcd/series.hpp"

namespace ldcd {

enum class Method { Ldcd, DynR };

inline std::string_view to_string(Method m) { return m == Method::Ldcd ? "ldcd" : "dynr"; }

inline Method parse_method(std::string_view s) {
  if (s == "ldcd" || s == "LDCD") return Method::Ldcd;
  if (s == "dynr" || s == "DynR") return Method::DynR;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

/// Detector hyperparameters. n, m and prune_duration of 0 mean "derive from
/// the series": n = m = probationary length, prune_duration = n / 5.
struct DetectorConfig {
  std::size_t k = 27;
  std::size_t l = 19;
  std::size_t n = 0;
  std::size_t m = 0;
  Method method = Method::Ldcd;
  bool pruning = true;
  double prune_threshold = 0.995;
  std::size_t prune_duration = 0;
  double neutral_score = 0.5;
  double ridge_eps = kDefaultRidgeEps;
  std::size_t refit_every = 1;

  void validate() const {
    if (k == 0 || l == 0) throw std::invalid_argument("DetectorConfig: k and l must be >= 1");
    if (!(prune_threshold > 0.0 && prune_threshold < 1.0))
      throw std::invalid_argument("DetectorConfig: prune_threshold must be in (0, 1)");
    if (!(neutral_score >= 0.0 && neutral_score <= 1.0))
      throw std::invalid_argument("DetectorConfig: neutral_score must be in [0, 1]");
    if (!(ridge_eps >= 0.0)) throw std::invalid_argument("DetectorConfig: ridge_eps must be >= 0");
    if (refit_every == 0) throw std::invalid_argument("DetectorConfig: refit_every must be >= 1");
  }

  /// Fills in the series-dependent defaults.
  DetectorConfig resolved(std::size_t series_length) const {
    DetectorConfig c = *this;
    const std::size_t probation = std::max<std::size_t>(1, probation_length(series_length));
    if (c.n == 0) c.n = probation;
    if (c.m == 0) c.m = probation;
    if (c.prune_duration == 0) c.prune_duration = c.n / 5;
    return c;
  }
};

struct ScoredPoint {
  std::size_t t = 0;
  double value = 0.0;  // after imputation
  double abnormality = 0.5;
  std::optional<double> raw_alpha;
  bool pruned = false;
  bool imputed = false;
};

/// Min-max normalized score over a window: (max - alpha) / (max - min).
/// A flat window yields 1.
inline double dynr_p_value(double alpha, std::span<const double> recent) {
  if (recent.empty()) throw std::invalid_argument("dynr_p_value: empty window");
  const auto [lo, hi] = std::minmax_element(recent.begin(), recent.end());
  if (*hi == *lo) return 1.0;
  return std::clamp((*hi - alpha) / (*hi - *lo), 0.0, 1.0);
}

/// Running max/min of the last `width` scores via monotonic deques.
class DynamicRange {
 public:
  explicit DynamicRange(std::size_t width) : width_(width) {
    if (width == 0) throw std::invalid_argument("DynamicRange: width must be positive");
  }

  void push(double alpha) {
    const std::size_t idx = count_++;
    while (!max_.empty() && max_.back().second <= alpha) max_.pop_back();
    max_.emplace_back(idx, alpha);
    while (!min_.empty() && min_.back().second >= alpha) min_.pop_back();
    min_.emplace_back(idx, alpha);
    const std::size_t oldest = count_ > width_ ? count_ - width_ : 0;
    while (max_.front().first < oldest) max_.pop_front();
    while (min_.front().first < oldest) min_.pop_front();
  }

  /// Pushes alpha and normalizes it against the window that now contains it.
  double p_value(double alpha) {
    push(alpha);
    const double hi = max_.front().second;
    const double lo = min_.front().second;
    if (hi == lo) return 1.0;
    return std::clamp((hi - alpha) / (hi - lo), 0.0, 1.0);
  }

  double max() const { return max_.front().second; }
  double min() const { return min_.front().second; }

 private:
  std::size_t width_;
  std::size_t count_ = 0;
  std::deque<std::pair<std::size_t, double>> max_;
  std::deque<std::pair<std::size_t, double>> min_;
};

/// Holds the output at the neutral score for `duration` steps after an
/// abnormality above `threshold`. The triggering point passes through.
class PruneFilter {
 public:
  PruneFilter(double threshold, std::size_t duration, double neutral)
      : threshold_(threshold), duration_(duration), neutral_(neutral) {}

  double apply(double p, bool* pruned = nullptr) {
    if (countdown_ > 0) {
      --countdown_;
      if (pruned) *pruned = true;
      return neutral_;
    }
    if (pruned) *pruned = false;
    if (p > threshold_) countdown_ = duration_;
    return p;
  }

  std::size_t countdown() const noexcept { return countdown_; }

 private:
  double threshold_;
  std::size_t duration_;
  double neutral_;
  std::size_t countdown_ = 0;
};

/// Streaming detector for one series: imputation, embedding, LDCD scoring,
/// p-value normalization (conformal or DynR) and pruning.
///
/// The config must already be resolved (n, m and prune_duration set).
class StreamDetector {
 public:
  explicit StreamDetector(const DetectorConfig& config)
      : cfg_(config),
        embedder_(config.l),
        prune_(config.prune_threshold, config.prune_duration, config.neutral_score),
        range_(config.m + 1) {
    cfg_.validate();
    if (cfg_.n == 0 || cfg_.m == 0)
      throw std::invalid_argument("StreamDetector: n and m must be resolved");
    init_buffer_.reserve(cfg_.n + cfg_.m);
  }

  ScoredPoint push(double x) {
    ScoredPoint out;
    out.t = t_++;
    if (!std::isfinite(x)) {
      x = last_finite_.value_or(0.0);
      out.imputed = true;
    } else {
      last_finite_ = x;
    }
    out.value = x;
    out.abnormality = cfg_.neutral_score;

    auto point = embedder_.push(x);
    if (!point) return out;

    if (!state_) {
      init_buffer_.push_back(std::move(*point));
      if (init_buffer_.size() == cfg_.n + cfg_.m) {
        LdcdParams params{cfg_.n, cfg_.m, cfg_.k, cfg_.ridge_eps, cfg_.refit_every, true};
        state_ = LdcdState::init(init_buffer_, params);
        for (double a : state_->queue().scores()) range_.push(a);
        init_buffer_.clear();
        init_buffer_.shrink_to_fit();
      }
      return out;
    }

    const LdcdStep step = state_->step(*point);
    out.raw_alpha = step.alpha;
    const double pv = cfg_.method == Method::Ldcd ? step.p_value : range_.p_value(step.alpha);
    double abnormality = 1.0 - pv;
    if (cfg_.pruning) abnormality = prune_.apply(abnormality, &out.pruned);
    out.abnormality = abnormality;
    return out;
  }

  const DetectorConfig& config() const noexcept { return cfg_; }
  bool ready() const noexcept { return state_.has_value(); }

 private:
  DetectorConfig cfg_;
  Embedder embedder_;
  PruneFilter prune_;
  DynamicRange range_;
  std::vector<EmbeddedPoint> init_buffer_;
  std::optional<LdcdState> state_;
  std::optional<double> last_finite_;
  std::size_t t_ = 0;
};

/// Runs a detector over a whole series. Output has one entry per input row;
/// rows before the first full training window and calibration queue carry
/// the neutral score.
inline std::vector<ScoredPoint> detect_stream(std::span<const double> values,
                                              const DetectorConfig& config) {
  StreamDetector det(config.resolved(values.size()));
  std::vector<ScoredPoint> out;
  out.reserve(values.size());
  for (double x : values) out.push_back(det.push(x));
  return out;
}

inline std::vector<ScoredPoint> detect_stream(const TimeSeries& series,
                                              const DetectorConfig& config) {
  return detect_stream(std::span<const double>(series.values), config);
}

}  // namespace ldcd
