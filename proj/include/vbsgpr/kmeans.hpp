#pragma once

#include <cstdint>
#include <vector>

#include "vbsgpr/base.hpp"

namespace vbsgpr {

struct Partition {
  // blocks[b] lists the row indices of X assigned to block b; every index
  // appears exactly once and no block is empty.
  std::vector<std::vector<Index>> blocks;
  Eigen::MatrixXd centroids;  // one row per block

  Index block_count() const { return static_cast<Index>(blocks.size()); }
};

// Deterministic k-means: k-means++ seeding followed by Lloyd iterations,
// ties broken toward the lowest centroid index. Clusters that empty out are
// refilled by splitting the largest cluster at its farthest member, which
// keeps the objective non-increasing. Requires 1 <= k <= rows.
Partition kmeans_partition(const Eigen::MatrixXd& X, Index k, std::uint64_t seed,
                           Index max_iterations = 100);

// Index of the centroid nearest to x, lowest index on ties.
Index nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x);

// Sum of squared distances from each row to its assigned centroid.
double kmeans_objective(const Eigen::MatrixXd& X, const Partition& partition);

}  // namespace vbsgpr
