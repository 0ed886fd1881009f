#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "streamrecon/common.h"

namespace streamrecon {

struct GridNeighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Keeps the k best (distance, id) pairs, ordered with lower ids winning ties.
template <typename Id>
class BestK {
 public:
  explicit BestK(int k = 1) { Reset(k); }

  void Reset(int k) {
    k_ = std::max(k, 0);
    items_.clear();
  }

  bool Full() const { return static_cast<int>(items_.size()) >= k_; }
  // Worst kept squared-or-plain key; +inf until full.
  double Worst() const {
    return Full() && k_ > 0 ? items_.back().first
                            : std::numeric_limits<double>::infinity();
  }

  void Offer(double key, Id id) {
    if (k_ == 0) return;
    const std::pair<double, Id> item(key, id);
    if (Full()) {
      if (!(item < items_.back())) return;
      items_.pop_back();
    }
    items_.insert(std::upper_bound(items_.begin(), items_.end(), item), item);
  }

  const std::vector<std::pair<double, Id>>& items() const { return items_; }

 private:
  int k_ = 1;
  std::vector<std::pair<double, Id>> items_;
};

// Uniform-grid index over a static point set with exact k-nearest-neighbor
// queries. Results are sorted by (distance, insertion index).
template <int Dim>
class GridIndex {
 public:
  using Vec = Eigen::Matrix<double, Dim, 1>;

  GridIndex() = default;
  explicit GridIndex(std::vector<Vec> points, double cell_size = 0.0) {
    Build(std::move(points), cell_size);
  }

  // cell_size <= 0 picks a size giving about two points per cell.
  void Build(std::vector<Vec> points, double cell_size = 0.0) {
    points_ = std::move(points);
    cell_start_.clear();
    cell_items_.clear();
    if (points_.empty()) return;

    lo_ = points_.front();
    Vec hi = points_.front();
    for (const Vec& p : points_) {
      STREAMRECON_CHECK_INPUT(p.allFinite(), "non-finite point in grid index");
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec extent = (hi - lo_).cwiseMax(1e-9);
    if (cell_size <= 0.0) {
      double volume = 1.0;
      for (int d = 0; d < Dim; ++d) volume *= extent[d];
      cell_size = std::pow(2.0 * volume / points_.size(), 1.0 / Dim);
      cell_size = std::max(cell_size, extent.maxCoeff() * 1e-4);
    }
    // Coarsen until the grid stays proportional to the point count.
    const double budget = 64.0 * points_.size() + 1024.0;
    while (true) {
      double cells = 1.0;
      for (int d = 0; d < Dim; ++d) cells *= std::floor(extent[d] / cell_size) + 1;
      if (cells <= budget) break;
      cell_size *= 2.0;
    }
    cell_ = cell_size;
    std::size_t total = 1;
    for (int d = 0; d < Dim; ++d) {
      dims_[d] = static_cast<long>(std::floor(extent[d] / cell_)) + 1;
      total *= static_cast<std::size_t>(dims_[d]);
    }

    std::vector<std::size_t> cell_of(points_.size());
    cell_start_.assign(total + 1, 0);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_of[i] = Linear(CellOf(points_[i]));
      ++cell_start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < total; ++c) cell_start_[c + 1] += cell_start_[c];
    cell_items_.resize(points_.size());
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_items_[fill[cell_of[i]]++] = i;  // ascending index within a cell
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec& point(std::size_t i) const { return points_[i]; }

  // Exact k nearest neighbors. Returns fewer than k only if the set is
  // smaller than k.
  void Knn(const Vec& query, int k, std::vector<GridNeighbor>* out) const {
    out->clear();
    if (points_.empty() || k <= 0) return;
    BestK<std::size_t> best(k);

    std::array<long, Dim> center;
    const std::array<long, Dim> qc = CellOf(query);
    long ring_start = 0;
    long ring_max = 0;
    for (int d = 0; d < Dim; ++d) {
      center[d] = qc[d];
      long below = -qc[d];                  // distance to cell 0
      long above = qc[d] - (dims_[d] - 1);  // distance past last cell
      ring_start = std::max(ring_start, std::max(below, above));
      ring_max = std::max(ring_max, std::max(std::abs(qc[d]),
                                             std::abs(qc[d] - (dims_[d] - 1))));
    }
    for (long r = ring_start; r <= ring_max; ++r) {
      VisitRing(center, r, [&](std::size_t cell) {
        for (std::size_t s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
          const std::size_t i = cell_items_[s];
          best.Offer((points_[i] - query).squaredNorm(), i);
        }
      });
      // Points in rings > r are at least r cells away.
      const double bound = r * cell_;
      if (best.Full() && best.Worst() < bound * bound) break;
    }
    for (const auto& [sq, i] : best.items()) {
      out->push_back(GridNeighbor{i, std::sqrt(sq)});
    }
  }

  std::vector<GridNeighbor> Knn(const Vec& query, int k) const {
    std::vector<GridNeighbor> out;
    Knn(query, k, &out);
    return out;
  }

 private:
  std::array<long, Dim> CellOf(const Vec& p) const {
    std::array<long, Dim> c;
    for (int d = 0; d < Dim; ++d) {
      const double f = std::floor((p[d] - lo_[d]) / cell_);
      c[d] = static_cast<long>(std::clamp(f, -1e15, 1e15));
    }
    return c;
  }

  std::size_t Linear(const std::array<long, Dim>& c) const {
    std::size_t idx = 0;
    for (int d = Dim - 1; d >= 0; --d) {
      idx = idx * static_cast<std::size_t>(dims_[d]) +
            static_cast<std::size_t>(c[d]);
    }
    return idx;
  }

  // Calls fn(cell) for each in-grid cell at Chebyshev distance exactly r.
  template <typename Fn>
  void VisitRing(const std::array<long, Dim>& center, long r, Fn&& fn) const {
    std::array<long, Dim> lo, hi, c;
    for (int d = 0; d < Dim; ++d) {
      lo[d] = std::max(center[d] - r, 0L);
      hi[d] = std::min(center[d] + r, dims_[d] - 1);
      if (lo[d] > hi[d]) return;
    }
    c = lo;
    while (true) {
      long cheb = 0;
      for (int d = 0; d < Dim; ++d) {
        cheb = std::max(cheb, std::abs(c[d] - center[d]));
      }
      if (cheb == r) {
        fn(Linear(c));
      } else {
        // Inside the ring: skip along dim 0 to the far face, or end the row.
        const long jump = center[0] + r;
        if (jump <= hi[0]) {
          c[0] = jump;
          continue;
        }
        c[0] = hi[0];
      }
      int d = 0;
      for (; d < Dim; ++d) {
        if (++c[d] <= hi[d]) break;
        c[d] = lo[d];
      }
      if (d == Dim) break;
    }
  }

  std::vector<Vec> points_;
  Vec lo_ = Vec::Zero();
  double cell_ = 1.0;
  std::array<long, Dim> dims_{};
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> cell_items_;
};

}  // namespace streamrecon
