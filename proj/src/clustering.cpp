#include "fedgcd/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace fedgcd {

namespace {

struct UnionFind {
    explicit UnionFind(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), size_t(0)); }
    size_t find(size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        // Root toward the lower index so relabeling stays input-order stable.
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
    std::vector<size_t> parent;
};

// Cosine guarded against zero norms: identical zero vectors compare as
// similar as anything else, which keeps degenerate inputs in one cluster.
double guarded_cosine(const Vector& a, const Vector& b) {
    double na = norm(a), nb = norm(b);
    double denom = na * nb;
    if (denom <= 0.0) return 0.0;
    return dot(a, b) / denom;
}

// First neighbor of each point, ties toward the lowest index.
std::vector<size_t> first_neighbors(std::span<const Vector> points, NeighborMetric metric) {
    const size_t n = points.size();
    std::vector<size_t> nn(n);
    for (size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        size_t best_j = (i == 0) ? 1 : 0;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double score = metric == NeighborMetric::Cosine
                               ? guarded_cosine(points[i], points[j])
                               : -squared_distance(points[i], points[j]);
            if (score > best) {
                best = score;
                best_j = j;
            }
        }
        nn[i] = best_j;
    }
    return nn;
}

Partition components_to_partition(UnionFind& uf, size_t n) {
    Partition part;
    part.assignments.resize(n);
    std::map<size_t, int> relabel;
    for (size_t i = 0; i < n; ++i) {
        size_t root = uf.find(i);
        auto [it, inserted] = relabel.try_emplace(root, int(relabel.size()));
        part.assignments[i] = it->second;
    }
    part.num_clusters = int(relabel.size());
    return part;
}

// One merge pass: first-neighbor linking over the current cluster means.
Partition merge_level(const Partition& cur, std::span<const Vector> points, NeighborMetric metric) {
    auto means = cluster_means(points, cur);
    auto nn = first_neighbors(means, metric);
    UnionFind uf(means.size());
    for (size_t i = 0; i < means.size(); ++i) uf.unite(i, nn[i]);

    // Walk points in order so new ids appear in first-appearance order.
    std::map<size_t, int> relabel;
    Partition next;
    next.assignments.resize(cur.assignments.size());
    for (size_t p = 0; p < cur.assignments.size(); ++p) {
        size_t root = uf.find(size_t(cur.assignments[p]));
        auto [it, inserted] = relabel.try_emplace(root, int(relabel.size()));
        next.assignments[p] = it->second;
    }
    next.num_clusters = int(relabel.size());
    return next;
}

void build_hierarchy(Partition& level0, std::span<const Vector> points, NeighborMetric metric) {
    const Partition* cur = &level0;
    while (cur->num_clusters > 1) {
        Partition next = merge_level(*cur, points, metric);
        if (next.num_clusters >= cur->num_clusters) break;  // cannot happen; termination guard
        level0.hierarchy.push_back(std::move(next));
        cur = &level0.hierarchy.back();
    }
}

}  // namespace

std::vector<Vector> cluster_means(std::span<const Vector> points, const Partition& part) {
    if (points.empty()) return {};
    std::vector<Vector> means(size_t(part.num_clusters), Vector(points.front().size(), 0.0));
    std::vector<size_t> counts(size_t(part.num_clusters), 0);
    for (size_t i = 0; i < points.size(); ++i) {
        auto c = size_t(part.assignments[i]);
        counts[c] += 1;
        for (size_t k = 0; k < points[i].size(); ++k) means[c][k] += points[i][k];
    }
    for (size_t c = 0; c < means.size(); ++c) {
        if (counts[c] == 0) throw std::logic_error("cluster_means: empty cluster");
        for (auto& v : means[c]) v /= double(counts[c]);
    }
    return means;
}

Partition finch(std::span<const Vector> points, NeighborMetric metric) {
    if (points.size() < 2) throw std::invalid_argument("finch: need at least 2 points");
    auto nn = first_neighbors(points, metric);
    UnionFind uf(points.size());
    for (size_t i = 0; i < points.size(); ++i) uf.unite(i, nn[i]);
    Partition level0 = components_to_partition(uf, points.size());
    build_hierarchy(level0, points, metric);
    return level0;
}

Partition semi_finch(std::span<const Vector> points, std::span<const int> labels,
                     NeighborMetric metric) {
    if (points.size() < 2) throw std::invalid_argument("semi_finch: need at least 2 points");
    if (labels.size() != points.size()) throw std::invalid_argument("semi_finch: labels size mismatch");

    std::map<int, std::vector<size_t>> by_label;
    for (size_t i = 0; i < points.size(); ++i)
        if (labels[i] >= 0) by_label[labels[i]].push_back(i);

    auto nn = first_neighbors(points, metric);
    for (const auto& [label, members] : by_label) {
        if (members.size() < 2) continue;  // singleton class: unconstrained neighbor
        for (size_t i : members) {
            double worst = std::numeric_limits<double>::infinity();
            size_t hardest = members.front() == i ? members.back() : members.front();
            for (size_t j : members) {
                if (j == i) continue;
                double sim = metric == NeighborMetric::Cosine
                                 ? guarded_cosine(points[i], points[j])
                                 : -squared_distance(points[i], points[j]);
                if (sim < worst) {
                    worst = sim;
                    hardest = j;
                }
            }
            nn[i] = hardest;
        }
    }

    UnionFind uf(points.size());
    for (size_t i = 0; i < points.size(); ++i) uf.unite(i, nn[i]);
    // The hardest-positive edges alone can leave a class split across
    // mutually-farthest pairs; close each class so the level-0 guarantee
    // holds unconditionally.
    for (const auto& [label, members] : by_label)
        for (size_t m = 1; m < members.size(); ++m) uf.unite(members[0], members[m]);

    Partition level0 = components_to_partition(uf, points.size());
    build_hierarchy(level0, points, metric);
    return level0;
}

int coarsest_level_with_at_least(const Partition& part, int min_clusters) {
    int chosen = 0;
    for (int lvl = 0; lvl < part.num_levels(); ++lvl) {
        if (part.level(lvl).num_clusters >= min_clusters)
            chosen = lvl;
        else
            break;
    }
    return chosen;
}

Partition semi_kmeans(std::span<const Vector> points, std::span<const int> labels, int k,
                      RngStream& rng) {
    if (points.empty()) throw std::invalid_argument("semi_kmeans: no points");
    if (labels.size() != points.size()) throw std::invalid_argument("semi_kmeans: labels size mismatch");
    if (k < 1) throw std::invalid_argument("semi_kmeans: k must be >= 1");

    // Distinct labels claim the first clusters, seeded at their class means.
    std::map<int, int> label_cluster;
    for (size_t i = 0; i < points.size(); ++i)
        if (labels[i] >= 0) label_cluster.try_emplace(labels[i], 0);
    int next_id = 0;
    for (auto& [label, cid] : label_cluster) cid = next_id++;
    if (k < int(label_cluster.size()))
        throw std::invalid_argument("semi_kmeans: k smaller than the number of distinct labels");

    const size_t dim = points.front().size();
    std::vector<Vector> centers(size_t(k), Vector(dim, 0.0));
    std::vector<size_t> counts(size_t(k), 0);
    for (size_t i = 0; i < points.size(); ++i) {
        if (labels[i] < 0) continue;
        auto c = size_t(label_cluster[labels[i]]);
        counts[c] += 1;
        for (size_t d = 0; d < dim; ++d) centers[c][d] += points[i][d];
    }
    for (size_t c = 0; c < size_t(next_id); ++c)
        for (auto& v : centers[c]) v /= double(counts[c]);

    // k-means++ for the remaining centers.
    std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
    auto refresh = [&](const Vector& center) {
        for (size_t i = 0; i < points.size(); ++i)
            d2[i] = std::min(d2[i], squared_distance(points[i], center));
    };
    for (int c = 0; c < next_id; ++c) refresh(centers[size_t(c)]);
    for (int c = next_id; c < k; ++c) {
        size_t pick = 0;
        if (next_id == 0 && c == 0) {
            pick = rng.uniform_index(points.size());
        } else {
            double total = std::accumulate(d2.begin(), d2.end(), 0.0);
            if (total > 0.0) {
                double u = rng.uniform01() * total;
                double acc = 0.0;
                for (size_t i = 0; i < points.size(); ++i) {
                    acc += d2[i];
                    if (u < acc) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = rng.uniform_index(points.size());
            }
        }
        centers[size_t(c)] = points[pick];
        refresh(centers[size_t(c)]);
    }

    std::vector<int> assign(points.size(), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < points.size(); ++i) {
            int best;
            if (labels[i] >= 0) {
                best = label_cluster[labels[i]];
            } else {
                best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (int c = 0; c < k; ++c) {
                    double d = squared_distance(points[i], centers[size_t(c)]);
                    if (d < best_d) {
                        best_d = d;
                        best = c;
                    }
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<Vector> sums(size_t(k), Vector(dim, 0.0));
        std::vector<size_t> sizes(size_t(k), 0);
        for (size_t i = 0; i < points.size(); ++i) {
            auto c = size_t(assign[i]);
            sizes[c] += 1;
            for (size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
        }
        for (size_t c = 0; c < size_t(k); ++c) {
            if (sizes[c] == 0) continue;  // keep the previous center
            for (size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / double(sizes[c]);
        }
    }

    // Compact out empty clusters, first-appearance order.
    std::map<int, int> relabel;
    Partition part;
    part.assignments.resize(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        auto [it, inserted] = relabel.try_emplace(assign[i], int(relabel.size()));
        part.assignments[i] = it->second;
    }
    part.num_clusters = int(relabel.size());
    return part;
}

}  // namespace fedgcd
