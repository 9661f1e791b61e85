#include "blendforge/kmedoids.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "blendforge/types.hpp"

namespace blendforge {

double medoid_cost(const Eigen::MatrixXd& distances, const std::vector<int>& medoids) {
  double cost = 0.0;
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int m : medoids) best = std::min(best, distances(i, m));
    cost += best;
  }
  return cost;
}

KMedoidsResult k_medoids(const Eigen::MatrixXd& distances, int k, std::uint64_t seed) {
  const int n = static_cast<int>(distances.rows());
  if (k < 1) throw Error("k-medoids needs k >= 1");
  if (k > n) throw Error("k-medoids: k exceeds the number of items");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));

  std::vector<int> medoids;
  std::vector<char> isMedoid(n, 0);
  Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());

  // BUILD
  for (int step = 0; step < k; ++step) {
    int best = -1;
    double bestCost = std::numeric_limits<double>::infinity();
    for (int c : order) {
      if (isMedoid[c]) continue;
      const double cost = nearest.cwiseMin(distances.col(c)).sum();
      if (cost < bestCost) {
        bestCost = cost;
        best = c;
      }
    }
    medoids.push_back(best);
    isMedoid[best] = 1;
    nearest = nearest.cwiseMin(distances.col(best));
  }

  KMedoidsResult result;
  double cost = nearest.sum();
  result.costHistory.push_back(cost);

  // SWAP: nearest and second-nearest medoid distances make each candidate
  // evaluation O(n).
  Eigen::VectorXd d1(n), d2(n);
  Eigen::VectorXi slot1(n);
  auto refresh = [&] {
    for (int i = 0; i < n; ++i) {
      d1(i) = d2(i) = std::numeric_limits<double>::infinity();
      slot1(i) = -1;
      for (int s = 0; s < k; ++s) {
        const double d = distances(i, medoids[s]);
        if (d < d1(i)) {
          d2(i) = d1(i);
          d1(i) = d;
          slot1(i) = s;
        } else if (d < d2(i)) {
          d2(i) = d;
        }
      }
    }
  };
  refresh();
  const int maxSwaps = 100 * n;
  for (int iter = 0; iter < maxSwaps; ++iter) {
    double bestDelta = 0.0;
    int bestSlot = -1, bestCandidate = -1;
    for (int s = 0; s < k; ++s) {
      for (int c : order) {
        if (isMedoid[c]) continue;
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
          const double dc = distances(i, c);
          if (slot1(i) == s)
            delta += std::min(dc, d2(i)) - d1(i);
          else if (dc < d1(i))
            delta += dc - d1(i);
        }
        if (delta < bestDelta) {
          bestDelta = delta;
          bestSlot = s;
          bestCandidate = c;
        }
      }
    }
    if (bestSlot < 0 || bestDelta > -1e-12 * std::max(1.0, cost)) break;
    isMedoid[medoids[bestSlot]] = 0;
    medoids[bestSlot] = bestCandidate;
    isMedoid[bestCandidate] = 1;
    refresh();
    cost = d1.sum();
    result.costHistory.push_back(cost);
  }

  std::sort(medoids.begin(), medoids.end());
  result.medoids = medoids;
  result.assignment.resize(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int s = 1; s < k; ++s)
      if (distances(i, medoids[s]) < distances(i, medoids[best])) best = s;
    result.assignment(i) = best;
  }
  result.cost = medoid_cost(distances, medoids);
  return result;
}

}  // namespace blendforge
