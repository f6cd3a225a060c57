#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ldcd {

/// The l most recent raw observations of a stream, oldest first.
///
/// `t` is the raw index of the last observation, so the point holds
/// x[t-l+1], ..., x[t].
struct EmbeddedPoint {
  std::vector<double> values;
  std::size_t t = 0;

  std::size_t dim() const noexcept { return values.size(); }

  friend bool operator==(const EmbeddedPoint&, const EmbeddedPoint&) = default;
};

/// Batch time-delay embedding. Output i ends at raw index i + l - 1; no padding.
inline std::vector<EmbeddedPoint> embed_stream(std::span<const double> series,
                                               std::size_t l) {
  if (l == 0) throw std::invalid_argument("embed_stream: l must be positive");
  if (series.empty()) throw std::invalid_argument("embed_stream: empty series");

  std::vector<EmbeddedPoint> out;
  if (series.size() < l) return out;
  out.reserve(series.size() - l + 1);
  for (std::size_t end = l - 1; end < series.size(); ++end) {
    auto window = series.subspan(end + 1 - l, l);
    out.push_back({{window.begin(), window.end()}, end});
  }
  return out;
}

/// Incremental embedder. One instance per stream.
class Embedder {
 public:
  explicit Embedder(std::size_t l) : l_(l) {
    if (l == 0) throw std::invalid_argument("Embedder: l must be positive");
  }

  /// Feeds one observation; returns a point once l observations have been seen.
  std::optional<EmbeddedPoint> push(double x) {
    window_.push_back(x);
    if (window_.size() > l_) window_.pop_front();
    const std::size_t t = seen_++;
    if (window_.size() < l_) return std::nullopt;
    return EmbeddedPoint{{window_.begin(), window_.end()}, t};
  }

  std::size_t dim() const noexcept { return l_; }
  std::size_t observations() const noexcept { return seen_; }

 private:
  std::size_t l_;
  std::deque<double> window_;
  std::size_t seen_ = 0;
};

}  // namespace ldcd
