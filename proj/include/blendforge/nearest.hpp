#pragma once

#include <vector>

#include "blendforge/types.hpp"

namespace blendforge {

/// Static 3-d kd-tree over a point set. Ties in distance resolve to the
/// smaller point index.
class KdTree {
 public:
  explicit KdTree(MatrixX3d points);

  struct Hit {
    int index = -1;
    double squaredDistance = 0.0;
  };

  Hit nearest(const Eigen::Vector3d& query) const;
  Eigen::Index size() const { return points_.rows(); }
  const MatrixX3d& points() const { return points_; }

 private:
  struct Node {
    int begin, end;  // range in order_
    int left = -1, right = -1;
    int axis = -1;   // -1 for leaves
    double split = 0.0;
  };

  int build(int begin, int end);
  void search(int node, const Eigen::Vector3d& query, Hit& best) const;

  MatrixX3d points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Greedy farthest-point sample of `count` vertices using Euclidean distance,
/// starting from vertex `first`.
std::vector<int> farthest_point_sample(const MatrixX3d& points, int count, int first = 0);

}  // namespace blendforge
