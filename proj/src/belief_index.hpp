#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace ufilter::detail {

/// Hash index over beliefs that identifies points within `tol` in max-norm.
/// Coordinates are bucketed at a resolution much coarser than `tol`, so a
/// lookup only visits neighbouring buckets for coordinates near a boundary.
class BeliefIndex {
 public:
  BeliefIndex(std::size_t dimension, double tol)
      : dim_(dimension), tol_(tol), width_(std::max(1e-9, 4.0 * tol)) {}

  /// Smallest stored index within tolerance of q, or -1.
  long find(std::span<const double> q, const std::vector<double>& stored) const {
    std::vector<std::int64_t> key(dim_);
    std::vector<int> lo(dim_), hi(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      const double scaled = q[i] / width_;
      key[i] = static_cast<std::int64_t>(std::floor(scaled));
      const double offset = q[i] - static_cast<double>(key[i]) * width_;
      lo[i] = offset < tol_ ? -1 : 0;
      hi[i] = offset > width_ - tol_ ? 1 : 0;
    }
    long best = -1;
    std::vector<int> shift(lo);
    while (true) {
      std::vector<std::int64_t> probe(key);
      for (std::size_t i = 0; i < dim_; ++i) probe[i] += shift[i];
      auto it = buckets_.find(probe);
      if (it != buckets_.end()) {
        for (std::size_t idx : it->second) {
          if (best >= 0 && static_cast<long>(idx) >= best) continue;
          bool close = true;
          for (std::size_t i = 0; i < dim_ && close; ++i) close = std::abs(stored[idx * dim_ + i] - q[i]) <= tol_;
          if (close) best = static_cast<long>(idx);
        }
      }
      std::size_t i = 0;
      for (; i < dim_; ++i) {
        if (shift[i] < hi[i]) {
          ++shift[i];
          break;
        }
        shift[i] = lo[i];
      }
      if (i == dim_) break;
    }
    return best;
  }

  void insert(std::span<const double> q, std::size_t index) {
    std::vector<std::int64_t> key(dim_);
    for (std::size_t i = 0; i < dim_; ++i) key[i] = static_cast<std::int64_t>(std::floor(q[i] / width_));
    buckets_[key].push_back(index);
  }

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<std::int64_t>& k) const {
      std::uint64_t h = 1469598103934665603ull;
      for (auto v : k) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ull;
      }
      return static_cast<std::size_t>(h);
    }
  };

  std::size_t dim_;
  double tol_;
  double width_;
  std::unordered_map<std::vector<std::int64_t>, std::vector<std::size_t>, KeyHash> buckets_;
};

}  // namespace ufilter::detail
