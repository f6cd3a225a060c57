#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ldcd/embedding.hpp"
#include "ldcd/metric_ncm.hpp"

namespace ldcd {

/// FIFO of the m most recent nonconformity scores, oldest first.
class CalibrationQueue {
 public:
  explicit CalibrationQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("CalibrationQueue: capacity must be positive");
  }

  /// Appends a score, evicting the oldest one when at capacity.
  void push(double score) {
    if (scores_.size() == capacity_) scores_.pop_front();
    scores_.push_back(score);
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return scores_.size(); }
  bool full() const noexcept { return scores_.size() == capacity_; }
  const std::deque<double>& scores() const noexcept { return scores_; }

 private:
  std::size_t capacity_;
  std::deque<double> scores_;
};

/// |{queued scores >= alpha}| + 1, over m + 1. Result lies in {1/(m+1), ..., 1}.
inline double sliding_p_value(double alpha, const CalibrationQueue& queue) {
  if (!queue.full()) throw std::logic_error("sliding_p_value: calibration queue not full");
  std::size_t count = 1;  // alpha itself
  for (double s : queue.scores())
    if (s >= alpha) ++count;
  return static_cast<double>(count) / static_cast<double>(queue.capacity() + 1);
}

/// Full conformal anomaly detection p-value for the last element of `history`.
///
/// `ncm(reference, x)` scores x against a reference sample; each element is
/// scored against the history with that element removed. O(t) NCM calls.
template <class Ncm>
double cad_p_value(std::span<const EmbeddedPoint> history, Ncm&& ncm) {
  if (history.empty()) throw std::invalid_argument("cad_p_value: empty history");
  const std::size_t t = history.size();
  std::vector<double> alpha(t);
  std::vector<EmbeddedPoint> rest;
  rest.reserve(t - 1);
  for (std::size_t s = 0; s < t; ++s) {
    rest.clear();
    for (std::size_t j = 0; j < t; ++j)
      if (j != s) rest.push_back(history[j]);
    alpha[s] = ncm(std::span<const EmbeddedPoint>(rest), history[s]);
  }
  const double last = alpha.back();
  const auto count = std::count_if(alpha.begin(), alpha.end(), [&](double a) { return a >= last; });
  return static_cast<double>(count) / static_cast<double>(t);
}

/// Streaming CAD with the k-NN nonconformity measure.
///
/// At each step the metric is fitted on the whole history X_{:t} and every
/// member is rescored leave-one-out, so a step costs O(t^2 l). Used as a
/// reference and for complexity comparisons, not for detection.
class CadStream {
 public:
  CadStream(std::size_t k, double ridge_eps = kDefaultRidgeEps) : k_(k), ridge_eps_(ridge_eps) {
    if (k == 0) throw std::invalid_argument("CadStream: k must be positive");
  }

  double step(const EmbeddedPoint& x) {
    history_.push_back(x);
    const ReferenceSample ref{std::span<const EmbeddedPoint>(history_), ridge_eps_};
    const std::size_t t = history_.size();
    const Eigen::MatrixXd& w = ref.whitened();
    std::vector<double> alpha(t);
    for (std::size_t s = 0; s < t; ++s)
      alpha[s] = detail::knn_whitened(w, w.col(static_cast<Eigen::Index>(s)), k_, s);
    const double last = alpha.back();
    const auto count =
        std::count_if(alpha.begin(), alpha.end(), [&](double a) { return a >= last; });
    return static_cast<double>(count) / static_cast<double>(t);
  }

  std::size_t size() const noexcept { return history_.size(); }

 private:
  std::size_t k_;
  double ridge_eps_;
  std::vector<EmbeddedPoint> history_;
};

/// Online ICAD: fixed proper training sample, unbounded calibration set.
///
/// Calibration scores are kept sorted, so each step is one NCM evaluation and
/// a binary search.
class OnlineIcad {
 public:
  OnlineIcad(std::span<const EmbeddedPoint> training, std::size_t k,
             double ridge_eps = kDefaultRidgeEps)
      : train_(training, ridge_eps), k_(k) {
    if (k == 0) throw std::invalid_argument("OnlineIcad: k must be positive");
  }

  /// Returns |{s <= t : alpha_s >= alpha_t}| / t.
  double step(const EmbeddedPoint& x) {
    const double alpha = knn_score(x, k_, train_);
    auto pos = std::lower_bound(sorted_.begin(), sorted_.end(), alpha);
    pos = sorted_.insert(pos, alpha);
    const auto at_least = static_cast<std::size_t>(sorted_.end() - pos);
    return static_cast<double>(at_least) / static_cast<double>(sorted_.size());
  }

  const ReferenceSample& training() const noexcept { return train_; }

 private:
  ReferenceSample train_;
  std::size_t k_;
  std::vector<double> sorted_;
};

/// Sliding ICAD: fixed proper training sample, calibration queue of size m.
class SlidingIcad {
 public:
  /// `training` is the proper training sample; the first m points of
  /// `calibration` seed the queue.
  SlidingIcad(std::span<const EmbeddedPoint> training,
              std::span<const EmbeddedPoint> calibration, std::size_t k,
              double ridge_eps = kDefaultRidgeEps)
      : train_(training, ridge_eps), queue_(calibration.size()), k_(k) {
    if (k == 0) throw std::invalid_argument("SlidingIcad: k must be positive");
    for (const auto& x : calibration) queue_.push(knn_score(x, k_, train_));
  }

  std::pair<double, double> step(const EmbeddedPoint& x) {
    const double alpha = knn_score(x, k_, train_);
    const double p = sliding_p_value(alpha, queue_);
    queue_.push(alpha);
    return {alpha, p};
  }

  const CalibrationQueue& queue() const noexcept { return queue_; }

 private:
  ReferenceSample train_;
  CalibrationQueue queue_;
  std::size_t k_;
};

struct LdcdParams {
  std::size_t n = 0;  // training window length
  std::size_t m = 0;  // calibration queue length
  std::size_t k = 1;
  double ridge_eps = kDefaultRidgeEps;
  /// Refit the metric every `refit_every` slides; in between the stale metric
  /// is reused and only newly admitted points are whitened.
  std::size_t refit_every = 1;
  /// When false the training window never moves (sliding ICAD).
  bool slide = true;
};

struct LdcdStep {
  double alpha = 0.0;
  double p_value = 1.0;
};

/// Lazy drifting conformal detector state.
///
/// At step t the training window holds embedded points t-N .. t-m-1 (N = n+m)
/// and the queue holds the m most recent scores, each computed against the
/// training window of its own step. Scores are never recomputed after the
/// window moves.
class LdcdState {
 public:
  /// Builds the state from exactly n + m embedded points; nullopt if fewer are
  /// available. The training window is the first n points and every initial
  /// calibration score is computed against it.
  static std::optional<LdcdState> init(std::span<const EmbeddedPoint> points,
                                       const LdcdParams& params) {
    if (params.n == 0 || params.m == 0 || params.k == 0 || params.refit_every == 0)
      throw std::invalid_argument("LdcdState: n, m, k and refit_every must be positive");
    const std::size_t total = params.n + params.m;
    if (points.size() < total) return std::nullopt;
    if (points.size() > total)
      throw std::invalid_argument("LdcdState: expected exactly n + m points");
    return LdcdState(points, params);
  }

  /// Scores x_t, converts to a p-value on the queue, then advances the queue
  /// and the training window.
  LdcdStep step(const EmbeddedPoint& x) {
    if (x.dim() != dim_) throw std::invalid_argument("LdcdState: dimension mismatch");
    LdcdStep out;
    out.alpha = knn_score(x, params_.k, train_);
    out.p_value = sliding_p_value(out.alpha, queue_);
    queue_.push(out.alpha);
    if (params_.slide) slide(x);
    return out;
  }

  const ReferenceSample& training() const noexcept { return train_; }
  const CalibrationQueue& queue() const noexcept { return queue_; }
  const LdcdParams& params() const noexcept { return params_; }
  std::size_t dim() const noexcept { return dim_; }

 private:
  LdcdState(std::span<const EmbeddedPoint> points, const LdcdParams& params)
      : params_(params),
        dim_(points.front().dim()),
        train_(points.first(params.n), params.ridge_eps),
        queue_(params.m) {
    for (const auto& p : points) {
      if (p.dim() != dim_) throw std::invalid_argument("LdcdState: dimension mismatch");
      window_.push_back(p.values);
    }
    for (const auto& p : points.subspan(params.n)) queue_.push(knn_score(p, params.k, train_));
    for (Eigen::Index i = 0; i < train_.whitened().cols(); ++i)
      whitened_.push_back(train_.whitened().col(i));
  }

  void slide(const EmbeddedPoint& x) {
    window_.pop_front();
    window_.push_back(x.values);
    whitened_.pop_front();

    const auto l = static_cast<Eigen::Index>(dim_);
    const auto n = static_cast<Eigen::Index>(params_.n);
    Eigen::MatrixXd points(l, n);
    for (Eigen::Index i = 0; i < n; ++i)
      points.col(i) = Eigen::Map<const Eigen::VectorXd>(window_[static_cast<std::size_t>(i)].data(), l);

    if (++since_refit_ >= params_.refit_every) {
      since_refit_ = 0;
      train_ = ReferenceSample(std::move(points), params_.ridge_eps);
      whitened_.clear();
      for (Eigen::Index i = 0; i < n; ++i) whitened_.push_back(train_.whitened().col(i));
      return;
    }

    whitened_.push_back(Eigen::VectorXd(train_.metric().whiten(points.col(n - 1))));
    Eigen::MatrixXd w(l, n);
    for (Eigen::Index i = 0; i < n; ++i) w.col(i) = whitened_[static_cast<std::size_t>(i)];
    train_ = ReferenceSample::with_metric(std::move(points), train_.metric(), std::move(w));
  }

  LdcdParams params_;
  std::size_t dim_;
  ReferenceSample train_;
  CalibrationQueue queue_;
  std::deque<std::vector<double>> window_;   // last N embedded points
  std::deque<Eigen::VectorXd> whitened_;     // training part, current metric
  std::size_t since_refit_ = 0;
};

}  // namespace ldcd
