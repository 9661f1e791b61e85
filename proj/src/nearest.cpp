#include "blendforge/nearest.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace blendforge {

namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(MatrixX3d points) : points_(std::move(points)) {
  order_.resize(points_.rows());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) build(0, static_cast<int>(order_.size()));
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.row(order_[i]).transpose());
    hi = hi.cwiseMax(points_.row(order_[i]).transpose());
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_(a, axis), pb = points_(b, axis);
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_(order_[mid], axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(int id, const Eigen::Vector3d& query, Hit& best) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int p = order_[i];
      const double d = (points_.row(p).transpose() - query).squaredNorm();
      if (d < best.squaredDistance || (d == best.squaredDistance && p < best.index)) {
        best.index = p;
        best.squaredDistance = d;
      }
    }
    return;
  }
  const double diff = query(node.axis) - node.split;
  const int nearSide = diff < 0 ? node.left : node.right;
  const int farSide = diff < 0 ? node.right : node.left;
  search(nearSide, query, best);
  // <= keeps equal-distance candidates reachable for the index tie-break.
  if (diff * diff <= best.squaredDistance) search(farSide, query, best);
}

KdTree::Hit KdTree::nearest(const Eigen::Vector3d& query) const {
  Hit best{-1, std::numeric_limits<double>::infinity()};
  if (!nodes_.empty()) search(0, query, best);
  return best;
}

std::vector<int> farthest_point_sample(const MatrixX3d& points, int count, int first) {
  const Eigen::Index n = points.rows();
  count = static_cast<int>(std::min<Eigen::Index>(count, n));
  std::vector<int> sample;
  if (count <= 0) return sample;
  Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  int next = first;
  for (int s = 0; s < count; ++s) {
    sample.push_back(next);
    dist = dist.cwiseMin((points.rowwise() - points.row(next)).rowwise().squaredNorm());
    dist.maxCoeff(&next);
  }
  std::sort(sample.begin(), sample.end());
  return sample;
}

}  // namespace blendforge
