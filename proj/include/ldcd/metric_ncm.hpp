#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ldcd/embedding.hpp"

namespace ldcd {

inline constexpr double kDefaultRidgeEps = 1e-6;

/// Sample-induced Mahalanobis metric.
///
/// Holds the regularized inverse covariance together with its Cholesky factor
/// L (Sigma + ridge*I = L L'), so distances can be evaluated either as the
/// quadratic form on `inv_cov` or as Euclidean distances between whitened
/// points L^{-1} x.
struct MetricState {
  Eigen::MatrixXd inv_cov;
  Eigen::VectorXd mean;
  double ridge = 0.0;
  Eigen::MatrixXd chol_lower;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }

  /// Columns of `points` mapped through L^{-1}.
  Eigen::MatrixXd whiten(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
    return chol_lower.triangularView<Eigen::Lower>().solve(points);
  }

  Eigen::VectorXd whiten(std::span<const double> x) const {
    if (x.size() != dim()) throw std::invalid_argument("whiten: dimension mismatch");
    Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    return chol_lower.triangularView<Eigen::Lower>().solve(v);
  }
};

/// Packs points as the columns of an l x n matrix, in order.
inline Eigen::MatrixXd to_columns(std::span<const EmbeddedPoint> points) {
  if (points.empty()) throw std::invalid_argument("to_columns: no points");
  const auto l = static_cast<Eigen::Index>(points.front().dim());
  Eigen::MatrixXd out(l, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (static_cast<Eigen::Index>(points[i].dim()) != l)
      throw std::invalid_argument("to_columns: dimension mismatch at point " +
                                  std::to_string(i));
    out.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(points[i].values.data(), l);
  }
  return out;
}

/// Fits the metric on the columns of `points` (l x n).
///
/// Covariance uses denominator n. The ridge added to the diagonal is
/// ridge_eps * trace(Sigma) / l, or ridge_eps itself for a zero-trace sample.
/// If the Cholesky factorization still fails the ridge is raised tenfold, at
/// most three times.
inline MetricState fit_metric(const Eigen::Ref<const Eigen::MatrixXd>& points,
                              double ridge_eps = kDefaultRidgeEps) {
  if (points.cols() == 0 || points.rows() == 0)
    throw std::invalid_argument("fit_metric: need at least one point");
  if (!(ridge_eps >= 0.0)) throw std::invalid_argument("fit_metric: ridge_eps must be >= 0");

  const auto l = points.rows();
  const double n = static_cast<double>(points.cols());

  MetricState state;
  state.mean = points.rowwise().sum() / n;
  const Eigen::MatrixXd centered = points.colwise() - state.mean;
  Eigen::MatrixXd cov = (centered * centered.transpose()) / n;

  const double trace = cov.trace();
  double ridge = trace > 0.0 ? ridge_eps * trace / static_cast<double>(l) : ridge_eps;

  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::MatrixXd ridged = cov;
    ridged.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(ridged);
    if (llt.info() == Eigen::Success) {
      state.ridge = ridge;
      state.chol_lower = llt.matrixL();
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(l, l));
      state.inv_cov = 0.5 * (inv + inv.transpose());
      return state;
    }
    if (ridge == 0.0)
      ridge = std::numeric_limits<double>::epsilon() * std::max(1.0, trace / static_cast<double>(l));
    else
      ridge *= 10.0;
  }
  throw std::runtime_error("fit_metric: covariance is numerically singular");
}

inline MetricState fit_metric(std::span<const EmbeddedPoint> points,
                              double ridge_eps = kDefaultRidgeEps) {
  return fit_metric(to_columns(points), ridge_eps);
}

/// sqrt((a-b)' inv_cov (a-b)).
inline double mahalanobis(std::span<const double> a, std::span<const double> b,
                          const MetricState& metric) {
  if (a.size() != metric.dim() || b.size() != metric.dim())
    throw std::invalid_argument("mahalanobis: dimension mismatch");
  Eigen::VectorXd diff(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) diff[static_cast<Eigen::Index>(i)] = a[i] - b[i];
  const double q = diff.dot(metric.inv_cov * diff);
  return std::sqrt(std::max(0.0, q));
}

/// A reference sample S with the metric it induces and its whitened image.
///
/// Immutable. The usual constructor fits the metric on exactly these points;
/// `with_metric` reuses a metric fitted elsewhere (stale-metric refit policy).
class ReferenceSample {
 public:
  explicit ReferenceSample(Eigen::MatrixXd points, double ridge_eps = kDefaultRidgeEps)
      : points_(std::move(points)), metric_(fit_metric(points_, ridge_eps)),
        whitened_(metric_.whiten(points_)) {}

  explicit ReferenceSample(std::span<const EmbeddedPoint> points,
                           double ridge_eps = kDefaultRidgeEps)
      : ReferenceSample(to_columns(points), ridge_eps) {}

  /// `whitened` must equal metric.whiten(points) up to rounding.
  static ReferenceSample with_metric(Eigen::MatrixXd points, MetricState metric,
                                     Eigen::MatrixXd whitened) {
    if (points.rows() != static_cast<Eigen::Index>(metric.dim()) ||
        whitened.rows() != points.rows() || whitened.cols() != points.cols())
      throw std::invalid_argument("ReferenceSample: inconsistent parts");
    return ReferenceSample(std::move(points), std::move(metric), std::move(whitened));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  const Eigen::MatrixXd& points() const noexcept { return points_; }
  const Eigen::MatrixXd& whitened() const noexcept { return whitened_; }
  const MetricState& metric() const noexcept { return metric_; }

 private:
  ReferenceSample(Eigen::MatrixXd points, MetricState metric, Eigen::MatrixXd whitened)
      : points_(std::move(points)), metric_(std::move(metric)), whitened_(std::move(whitened)) {}

  Eigen::MatrixXd points_;
  MetricState metric_;
  Eigen::MatrixXd whitened_;
};

namespace detail {

/// Mean of the k smallest distances between `query` and the columns of
/// `whitened`, skipping column `self` if given. Selection runs on squared
/// distances; ties go to the lower index and the selected distances are summed
/// in ascending order.
inline double knn_whitened(const Eigen::MatrixXd& whitened, const Eigen::VectorXd& query,
                           std::size_t k, std::optional<std::size_t> self) {
  const auto n = static_cast<std::size_t>(whitened.cols());
  const Eigen::RowVectorXd sq = (whitened.colwise() - query).colwise().squaredNorm();

  const bool skip = self && *self < n;
  const std::size_t eligible = n - (skip ? 1 : 0);
  if (eligible == 0) return 0.0;
  const std::size_t kk = std::min(k, eligible);

  if (kk == 1) {
    const auto s = static_cast<Eigen::Index>(skip ? *self : n);
    double best = std::numeric_limits<double>::infinity();
    if (s > 0) best = sq.head(s).minCoeff();
    const Eigen::Index rest = static_cast<Eigen::Index>(n) - s - 1;
    if (rest > 0) best = std::min(best, sq.tail(rest).minCoeff());
    return std::sqrt(best);
  }

  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(eligible);
  for (std::size_t i = 0; i < n; ++i) {
    if (skip && i == *self) continue;
    cand.emplace_back(sq[static_cast<Eigen::Index>(i)], i);
  }
  auto kth = cand.begin() + static_cast<std::ptrdiff_t>(kk);
  if (kk < cand.size()) std::nth_element(cand.begin(), kth - 1, cand.end());
  std::sort(cand.begin(), kth);
  double sum = 0.0;
  for (auto it = cand.begin(); it != kth; ++it) sum += std::sqrt(it->first);
  return sum / static_cast<double>(kk);
}

}  // namespace detail

/// Average distance from `x` to its k nearest neighbours in `ref`.
///
/// When `self_index` names a member of `ref`, that member is excluded
/// (leave-one-out by index, not by value). k is clamped to the number of
/// eligible neighbours.
inline double knn_score(std::span<const double> x, std::size_t k, const ReferenceSample& ref,
                        std::optional<std::size_t> self_index = std::nullopt) {
  if (ref.size() == 0) throw std::invalid_argument("knn_score: empty reference sample");
  if (k == 0) throw std::invalid_argument("knn_score: k must be positive");
  if (x.size() != ref.dim()) throw std::invalid_argument("knn_score: dimension mismatch");
  return detail::knn_whitened(ref.whitened(), ref.metric().whiten(x), k, self_index);
}

inline double knn_score(const EmbeddedPoint& x, std::size_t k, const ReferenceSample& ref,
                        std::optional<std::size_t> self_index = std::nullopt) {
  return knn_score(std::span<const double>(x.values), k, ref, self_index);
}

}  // namespace ldcd
