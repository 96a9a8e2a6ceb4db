#pragma once

#include <cstdint>
#include <vector>

#include "focus/geometry.hpp"

namespace focus {

struct Neighbor {
  int index = -1;
  double squared_distance = 0.0;
};

/// Static 3-d tree over a point set for exact Euclidean queries. Ties in
/// distance resolve to the smallest point index, so results match a linear
/// scan exactly.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points, int leaf_size = 8);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(int index) const { return points_[index]; }

  /// Nearest point. Requires a non-empty tree.
  Neighbor nearest(const Vec3& query) const;

  /// Up to k nearest points, ordered by (distance, index).
  std::vector<Neighbor> k_nearest(const Vec3& query, int k) const;

 private:
  struct Node {
    // Leaves have axis == -1 and own perm_[begin, end).
    int axis = -1;
    double split = 0.0;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };

  int build(int begin, int end, int depth);
  void nearest_rec(int node, const Vec3& query, Neighbor& best) const;
  void knn_rec(int node, const Vec3& query, int k, std::vector<Neighbor>& heap) const;

  std::vector<Vec3> points_;
  std::vector<int> perm_;
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

}  // namespace focus
