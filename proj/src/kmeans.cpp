#include "vbsgpr/kmeans.hpp"

#include <limits>

#include "vbsgpr/rng.hpp"

namespace vbsgpr {
namespace {

// Squared distances from every row of X to the given center.
Eigen::VectorXd sq_dist_to(const Eigen::MatrixXd& X, const Eigen::RowVectorXd& center) {
  return (X.rowwise() - center).rowwise().squaredNorm();
}

Eigen::MatrixXd seed_centroids(const Eigen::MatrixXd& X, Index k, Rng& rng) {
  const Index n = X.rows();
  Eigen::MatrixXd centroids(k, X.cols());
  centroids.row(0) = X.row(rng.uniform_int(n));
  Eigen::VectorXd best = sq_dist_to(X, centroids.row(0));
  for (Index c = 1; c < k; ++c) {
    double total = best.sum();
    Index pick = 0;
    if (total > 0) {
      double target = rng.uniform() * total;
      double acc = 0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += best[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(n);  // all points coincide with chosen centers
    }
    centroids.row(c) = X.row(pick);
    best = best.cwiseMin(sq_dist_to(X, centroids.row(c)));
  }
  return centroids;
}

std::vector<Index> assign_all(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids) {
  const Index n = X.rows();
  const Index k = centroids.rows();
  std::vector<Index> assignment(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Index arg = 0;
    for (Index c = 0; c < k; ++c) {
      double d2 = (X.row(i) - centroids.row(c)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = c;
      }
    }
    assignment[static_cast<std::size_t>(i)] = arg;
  }
  return assignment;
}

// Gives every empty cluster the member of the largest cluster that lies
// farthest from that cluster's centroid. Splitting the largest keeps all
// clusters nonempty without ever increasing the objective, because the moved
// point becomes its own centroid.
void repair_empty(const Eigen::MatrixXd& X, Eigen::MatrixXd& centroids,
                  std::vector<Index>& assignment) {
  const Index k = centroids.rows();
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (Index a : assignment) ++sizes[static_cast<std::size_t>(a)];
  for (Index c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) continue;
    Index largest = 0;
    for (Index b = 1; b < k; ++b)
      if (sizes[static_cast<std::size_t>(b)] > sizes[static_cast<std::size_t>(largest)]) largest = b;
    if (sizes[static_cast<std::size_t>(largest)] <= 1)
      throw NumericError("kmeans: cannot repair empty cluster, all clusters are singletons");
    double worst = -1;
    Index moved = -1;
    for (Index i = 0; i < X.rows(); ++i) {
      if (assignment[static_cast<std::size_t>(i)] != largest) continue;
      double d2 = (X.row(i) - centroids.row(largest)).squaredNorm();
      if (d2 > worst) {
        worst = d2;
        moved = i;
      }
    }
    assignment[static_cast<std::size_t>(moved)] = c;
    centroids.row(c) = X.row(moved);
    --sizes[static_cast<std::size_t>(largest)];
    ++sizes[static_cast<std::size_t>(c)];
  }
}

void recompute_centroids(const Eigen::MatrixXd& X, const std::vector<Index>& assignment,
                         Eigen::MatrixXd& centroids) {
  const Index k = centroids.rows();
  centroids.setZero();
  std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < X.rows(); ++i) {
    Index a = assignment[static_cast<std::size_t>(i)];
    centroids.row(a) += X.row(i);
    ++sizes[static_cast<std::size_t>(a)];
  }
  for (Index c = 0; c < k; ++c)
    centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
}

}  // namespace

Partition kmeans_partition(const Eigen::MatrixXd& X, Index k, std::uint64_t seed,
                           Index max_iterations) {
  const Index n = X.rows();
  require(k >= 1, "kmeans: need at least one cluster");
  require(k <= n, "kmeans: more clusters (" + std::to_string(k) + ") than points (" +
                      std::to_string(n) + ")");

  Rng rng(seed);
  Eigen::MatrixXd centroids = seed_centroids(X, k, rng);
  std::vector<Index> assignment = assign_all(X, centroids);
  repair_empty(X, centroids, assignment);
  for (Index it = 0; it < max_iterations; ++it) {
    recompute_centroids(X, assignment, centroids);
    std::vector<Index> next = assign_all(X, centroids);
    repair_empty(X, centroids, next);
    if (next == assignment) break;
    assignment = std::move(next);
  }
  recompute_centroids(X, assignment, centroids);

  Partition partition;
  partition.centroids = centroids;
  partition.blocks.assign(static_cast<std::size_t>(k), {});
  for (Index i = 0; i < n; ++i)
    partition.blocks[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
  return partition;
}

Index nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x) {
  require(centroids.cols() == x.size(), "nearest_centroid: dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  Index arg = 0;
  for (Index c = 0; c < centroids.rows(); ++c) {
    double d2 = (centroids.row(c).transpose() - x).squaredNorm();
    if (d2 < best) {
      best = d2;
      arg = c;
    }
  }
  return arg;
}

double kmeans_objective(const Eigen::MatrixXd& X, const Partition& partition) {
  double total = 0;
  for (Index c = 0; c < partition.block_count(); ++c)
    for (Index i : partition.blocks[static_cast<std::size_t>(c)])
      total += (X.row(i) - partition.centroids.row(c)).squaredNorm();
  return total;
}

}  // namespace vbsgpr
