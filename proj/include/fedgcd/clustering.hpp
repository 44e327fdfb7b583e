#ifndef FEDGCD_CLUSTERING_HPP
#define FEDGCD_CLUSTERING_HPP

#include <span>
#include <vector>

#include "fedgcd/numerics.hpp"

namespace fedgcd {

// Cluster assignment with ids contiguous from 0 in order of first appearance.
// For FINCH results, `hierarchy` lists the successively coarser levels
// (each with strictly fewer clusters, down to a single cluster).
struct Partition {
    std::vector<int> assignments;
    int num_clusters = 0;
    std::vector<Partition> hierarchy;

    int num_levels() const { return 1 + int(hierarchy.size()); }
    const Partition& level(int lvl) const { return lvl == 0 ? *this : hierarchy[size_t(lvl) - 1]; }
};

enum class NeighborMetric { Cosine, Euclidean };

// Parameter-free first-neighbor clustering: level 0 is the connected
// components of the undirected graph joining each point to its first
// neighbor; coarser levels recurse on cluster means until one cluster
// remains. Ties break toward the lowest point index.
Partition finch(std::span<const Vector> points, NeighborMetric metric = NeighborMetric::Cosine);

// FINCH with supervision: a labeled point's first-neighbor edge is replaced
// by an edge to its hardest positive (the same-label point least similar to
// it), and every labeled class is forced into a single level-0 cluster.
// labels[i] < 0 marks point i unlabeled; a class with one member falls back
// to the unconstrained first neighbor. With no labels this is exactly finch.
Partition semi_finch(std::span<const Vector> points, std::span<const int> labels,
                     NeighborMetric metric = NeighborMetric::Cosine);

// k-means with k-means++ initialization seeded by the labeled class means;
// labeled points stay clamped to their class's cluster on every assignment
// step. Stops when assignments stabilize or after 100 iterations. Empty
// clusters are compacted out of the returned partition.
Partition semi_kmeans(std::span<const Vector> points, std::span<const int> labels, int k,
                      RngStream& rng);

// Index of the coarsest FINCH level that still has at least min_clusters
// clusters (level 0 if even that is too coarse). Selects the hierarchy level
// used to initialize a client GMM.
int coarsest_level_with_at_least(const Partition& part, int min_clusters);

std::vector<Vector> cluster_means(std::span<const Vector> points, const Partition& part);

}  // namespace fedgcd

#endif
