#include "focus/kdtree.hpp"

#include <algorithm>
#include <numeric>

#include "focus/error.hpp"

namespace focus {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.squared_distance < b.squared_distance ||
         (a.squared_distance == b.squared_distance && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::vector<Vec3> points, int leaf_size) : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  perm_.resize(points_.size());
  std::iota(perm_.begin(), perm_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<int>(points_.size()), 0);
  }
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= leaf_size_) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[perm_[i]]);
    hi = hi.cwiseMax(points_[perm_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi(axis) == lo(axis)) {
    // All points coincide; keep them in one leaf.
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  const int mid = begin + (end - begin) / 2;
  std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                   [&](int a, int b) { return points_[a](axis) < points_[b](axis); });
  const double split = points_[perm_[mid]](axis);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

Neighbor KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw Error(ErrorCode::EmptyInput, "nearest-neighbour query on an empty tree");
  Neighbor best{-1, std::numeric_limits<double>::infinity()};
  nearest_rec(0, query, best);
  return best;
}

void KdTree::nearest_rec(int id, const Vec3& query, Neighbor& best) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Neighbor cand{perm_[i], (points_[perm_[i]] - query).squaredNorm()};
      if (closer(cand, best)) best = cand;
    }
    return;
  }
  // Left subtree holds coordinates <= split, right holds >= split.
  const double diff = query(node.axis) - node.split;
  const int first = diff <= 0.0 ? node.left : node.right;
  const int second = diff <= 0.0 ? node.right : node.left;
  nearest_rec(first, query, best);
  if (diff * diff <= best.squared_distance) nearest_rec(second, query, best);
}

std::vector<Neighbor> KdTree::k_nearest(const Vec3& query, int k) const {
  std::vector<Neighbor> heap;
  if (points_.empty() || k <= 0) return heap;
  heap.reserve(k + 1);
  knn_rec(0, query, k, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

void KdTree::knn_rec(int id, const Vec3& query, int k, std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const Neighbor cand{perm_[i], (points_[perm_[i]] - query).squaredNorm()};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = query(node.axis) - node.split;
  const int first = diff <= 0.0 ? node.left : node.right;
  const int second = diff <= 0.0 ? node.right : node.left;
  knn_rec(first, query, k, heap);
  if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().squared_distance) {
    knn_rec(second, query, k, heap);
  }
}

}  // namespace focus
