#ifndef FEDGCD_EVAL_HPP
#define FEDGCD_EVAL_HPP

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "fedgcd/clustering.hpp"
#include "fedgcd/dataset.hpp"
#include "fedgcd/model.hpp"
#include "fedgcd/numerics.hpp"

namespace fedgcd {

// Exact minimum-cost assignment on a square integer matrix (shortest
// augmenting path with potentials). Returns row -> column.
std::vector<int> solve_assignment_min(const std::vector<std::vector<int64_t>>& cost);

// Clustering accuracy under the optimal one-to-one cluster/class matching.
// Rectangular instances are padded with zero-count dummies; acc_old/acc_new
// are computed under the single global matching, restricted to examples
// whose true class is Old / New.
struct HungarianResult {
    double acc_all = 0.0;
    double acc_old = 0.0;
    double acc_new = 0.0;
    int64_t matched = 0;                  // acc_all * n, exact integer
    std::map<int, int> cluster_to_class;  // real (non-dummy) pairs only
};

HungarianResult hungarian_accuracy(std::span<const int> pred, std::span<const int> truth,
                                   const std::set<int>& old_classes = {});

// Class-number estimation: cluster the pool unconstrained at each candidate
// k and score by the Hungarian accuracy over the labeled subset; argmax,
// ties toward the smallest k. Too-small k merges labeled classes and
// too-large k splits them, so the labeled accuracy peaks near the truth.
struct KEstimate {
    int k = 0;
    std::map<int, double> scores;
};

KEstimate estimate_k(std::span<const Vector> points, std::span<const int> labels,
                     std::span<const int> k_range, RngStream& rng);

// Full server-side GCD evaluation: encode the test pool, estimate k (or use
// fixed_k > 0), cluster with the labeled test subset clamped, and report
// Hungarian accuracy over the unlabeled test examples.
struct GcdEval {
    double acc_all = 0.0;
    double acc_old = 0.0;
    double acc_new = 0.0;
    int k_used = 0;
    int64_t matched = 0;
};

GcdEval evaluate_gcd(const EncoderWeights& w, const std::vector<Example>& test_labeled,
                     const std::vector<Example>& test_unlabeled, const std::set<int>& old_classes,
                     std::span<const int> k_range, int fixed_k, RngStream& rng);

}  // namespace fedgcd

#endif
