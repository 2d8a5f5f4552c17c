#pragma once

#include <algorithm>
#include <memory>
#include <queue>
#include <utility>
#include <vector>

#include "glcert/core.hpp"

namespace glcert {

/// (squared distance, index); ordered lexicographically so equal distances
/// resolve to the smaller index.
using Neighbor = std::pair<double, std::size_t>;

// ---------------------------------------------------------------------------
// kd-tree over a PointSet (non-owning; the PointSet must outlive the tree).
// ---------------------------------------------------------------------------

class KdTree {
 public:
  explicit KdTree(const PointSet& pts, std::size_t leaf_size = 16) : pts_(&pts), leaf_size_(leaf_size) {
    idx_ = iota_indices(pts.size());
    if (!idx_.empty()) build(0, idx_.size());
  }

  /// The k nearest points to q (sorted), skipping index `exclude`.
  std::vector<Neighbor> knn(std::span<const double> q, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const {
    std::priority_queue<Neighbor> heap;  // max-heap on (d2, idx)
    if (k > 0 && !nodes_.empty()) knn_rec(0, q, k, exclude, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  /// All points with |p - q| <= r (sorted by index).
  std::vector<Neighbor> radius(std::span<const double> q, double r) const {
    std::vector<Neighbor> out;
    if (!nodes_.empty()) radius_rec(0, q, r * r, out);
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.second < b.second; });
    return out;
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::size_t left = 0, right = 0;  // 0 means leaf (root is never a child)
    std::vector<double> lo, hi;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t dim = pts_->dim();
    Node node{begin, end, 0, 0, std::vector<double>(dim, std::numeric_limits<double>::infinity()),
              std::vector<double>(dim, -std::numeric_limits<double>::infinity())};
    for (std::size_t t = begin; t < end; ++t) {
      auto p = (*pts_)[idx_[t]];
      for (std::size_t j = 0; j < dim; ++j) {
        node.lo[j] = std::min(node.lo[j], p[j]);
        node.hi[j] = std::max(node.hi[j], p[j]);
      }
    }
    const std::size_t id = nodes_.size();
    nodes_.push_back(std::move(node));
    if (end - begin <= leaf_size_) return id;

    std::size_t axis = 0;
    double spread = -1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double s = nodes_[id].hi[j] - nodes_[id].lo[j];
      if (s > spread) {
        spread = s;
        axis = j;
      }
    }
    if (spread <= 0.0) return id;  // all points identical
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + static_cast<std::ptrdiff_t>(begin), idx_.begin() + static_cast<std::ptrdiff_t>(mid),
                     idx_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return (*pts_)[a][axis] < (*pts_)[b][axis]; });
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_dist2(const Node& n, std::span<const double> q) const {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      double t = 0.0;
      if (q[j] < n.lo[j])
        t = n.lo[j] - q[j];
      else if (q[j] > n.hi[j])
        t = q[j] - n.hi[j];
      s += t * t;
    }
    return s;
  }

  void knn_rec(std::size_t id, std::span<const double> q, std::size_t k, std::size_t exclude,
               std::priority_queue<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (heap.size() == k && box_dist2(n, q) > heap.top().first) return;
    if (n.left == 0) {
      for (std::size_t t = n.begin; t < n.end; ++t) {
        const std::size_t i = idx_[t];
        if (i == exclude) continue;
        Neighbor cand{squared_distance(q, (*pts_)[i]), i};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    std::size_t first = n.left, second = n.right;
    if (box_dist2(nodes_[second], q) < box_dist2(nodes_[first], q)) std::swap(first, second);
    knn_rec(first, q, k, exclude, heap);
    knn_rec(second, q, k, exclude, heap);
  }

  void radius_rec(std::size_t id, std::span<const double> q, double r2, std::vector<Neighbor>& out) const {
    const Node& n = nodes_[id];
    if (box_dist2(n, q) > r2) return;
    if (n.left == 0) {
      for (std::size_t t = n.begin; t < n.end; ++t) {
        const std::size_t i = idx_[t];
        const double d2 = squared_distance(q, (*pts_)[i]);
        if (d2 <= r2) out.emplace_back(d2, i);
      }
      return;
    }
    radius_rec(n.left, q, r2, out);
    radius_rec(n.right, q, r2, out);
  }

  const PointSet* pts_;
  std::size_t leaf_size_;
  std::vector<std::size_t> idx_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Brute-force search (used above the kd-tree dimension cutoff).
// ---------------------------------------------------------------------------

inline std::vector<Neighbor> brute_force_knn(const PointSet& pts, std::span<const double> q, std::size_t k,
                                             std::size_t exclude = static_cast<std::size_t>(-1)) {
  std::vector<Neighbor> all;
  all.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (i != exclude) all.emplace_back(squared_distance(q, pts[i]), i);
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return all;
}

inline std::vector<Neighbor> brute_force_radius(const PointSet& pts, std::span<const double> q, double r) {
  std::vector<Neighbor> out;
  const double r2 = r * r;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d2 = squared_distance(q, pts[i]);
    if (d2 <= r2) out.emplace_back(d2, i);
  }
  return out;
}

/// kd-tree for dim <= 16, brute force above.
class NeighborIndex {
 public:
  static constexpr std::size_t kKdTreeMaxDim = 16;

  explicit NeighborIndex(const PointSet& pts) : pts_(&pts) {
    if (pts.dim() <= kKdTreeMaxDim) tree_ = std::make_unique<KdTree>(pts);
  }

  bool uses_kdtree() const noexcept { return tree_ != nullptr; }

  std::vector<Neighbor> knn(std::span<const double> q, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) const {
    return tree_ ? tree_->knn(q, k, exclude) : brute_force_knn(*pts_, q, k, exclude);
  }

  std::vector<Neighbor> radius(std::span<const double> q, double r) const {
    return tree_ ? tree_->radius(q, r) : brute_force_radius(*pts_, q, r);
  }

 private:
  const PointSet* pts_;
  std::unique_ptr<KdTree> tree_;
};

}  // namespace glcert
