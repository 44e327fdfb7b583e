#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <numeric>

#include "fedgcd/eval.hpp"

using namespace fedgcd;

namespace {

// Exhaustive assignment oracle: best matched count over all injective
// cluster-to-class maps (feasible for min side <= 7).
int64_t brute_force_matched(std::span<const int> pred, std::span<const int> truth) {
    std::map<int, int> cluster_ix, class_ix;
    for (int c : pred) cluster_ix.try_emplace(c, int(cluster_ix.size()));
    for (int c : truth) class_ix.try_emplace(c, int(class_ix.size()));
    int rows = int(cluster_ix.size());
    int cols = int(class_ix.size());
    int n = std::max(rows, cols);
    std::vector<std::vector<int64_t>> counts(size_t(n), std::vector<int64_t>(size_t(n), 0));
    for (size_t i = 0; i < pred.size(); ++i)
        counts[size_t(cluster_ix[pred[i]])][size_t(class_ix[truth[i]])] += 1;

    std::vector<int> perm(static_cast<size_t>(n), 0);
    std::iota(perm.begin(), perm.end(), 0);
    int64_t best = 0;
    do {
        int64_t total = 0;
        for (int r = 0; r < n; ++r) total += counts[size_t(r)][size_t(perm[size_t(r)])];
        best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("solve_assignment_min on a hand example") {
    // Optimal: rows 0,1,2 -> cols 1,0,2 with cost 1+2+1 = 4.
    std::vector<std::vector<int64_t>> cost{{5, 1, 7}, {2, 9, 8}, {6, 4, 1}};
    auto match = solve_assignment_min(cost);
    CHECK(match == std::vector<int>{1, 0, 2});
}

TEST_CASE("hungarian accuracy on relabeled ground truth is perfect") {
    std::vector<int> truth{0, 0, 1, 1, 2, 2, 7, 7};
    std::vector<int> pred{5, 5, 9, 9, 0, 0, 3, 3};
    auto res = hungarian_accuracy(pred, truth, {0, 1});
    CHECK(res.acc_all == doctest::Approx(1.0));
    CHECK(res.acc_old == doctest::Approx(1.0));
    CHECK(res.acc_new == doctest::Approx(1.0));
    CHECK(res.matched == 8);
}

TEST_CASE("single cluster over K equal classes scores 1/K") {
    std::vector<int> truth, pred;
    const int K = 5, per = 6;
    for (int c = 0; c < K; ++c)
        for (int i = 0; i < per; ++i) {
            truth.push_back(c);
            pred.push_back(0);
        }
    auto res = hungarian_accuracy(pred, truth);
    CHECK(res.acc_all == doctest::Approx(1.0 / K));
    CHECK(res.matched == per);
}

TEST_CASE("hungarian equals brute force on random small instances") {
    RngStream rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        int clusters = 1 + int(rng.uniform_index(7));
        int classes = 1 + int(rng.uniform_index(7));
        int n = 5 + int(rng.uniform_index(40));
        std::vector<int> pred, truth;
        for (int i = 0; i < n; ++i) {
            pred.push_back(int(rng.uniform_index(size_t(clusters))));
            truth.push_back(int(rng.uniform_index(size_t(classes))));
        }
        auto res = hungarian_accuracy(pred, truth);
        CHECK(res.matched == brute_force_matched(pred, truth));
        // acc_all * n is the exact integer matched count.
        CHECK(double(res.matched) == doctest::Approx(res.acc_all * n).epsilon(1e-12));
    }
}

TEST_CASE("hungarian accuracy is invariant under any relabeling") {
    RngStream rng(31);
    std::vector<int> pred, truth;
    for (int i = 0; i < 60; ++i) {
        pred.push_back(int(rng.uniform_index(5)));
        truth.push_back(int(rng.uniform_index(4)));
    }
    auto base = hungarian_accuracy(pred, truth);
    std::map<int, int> pmap{{0, 9}, {1, 4}, {2, 13}, {3, 0}, {4, 2}};
    std::map<int, int> tmap{{0, 100}, {1, -7}, {2, 55}, {3, 8}};
    std::vector<int> pred2, truth2;
    for (int p : pred) pred2.push_back(pmap[p]);
    for (int t : truth) truth2.push_back(tmap[t]);
    auto moved = hungarian_accuracy(pred2, truth2);
    CHECK(moved.acc_all == base.acc_all);
    CHECK(moved.matched == base.matched);
}

TEST_CASE("estimate_k recovers the true class count on separated blobs") {
    RngStream rng(41);
    const int K = 5;
    // Labeled classes sit closer to each other than the unlabeled ones, so
    // an undersized k is forced to merge labeled classes and lose score.
    const double centers[K] = {0.0, 20.0, 40.0, 70.0, 100.0};
    std::vector<Vector> pts;
    std::vector<int> labels;
    for (int c = 0; c < K; ++c) {
        for (int i = 0; i < 24; ++i) {
            Vector p{centers[c], 0.0, 0.0};
            for (auto& v : p) v += 0.8 * rng.normal();
            pts.push_back(std::move(p));
            labels.push_back(c < 3 && i < 12 ? c : -1);
        }
    }
    std::vector<int> range;
    for (int k = 3; k <= 9; ++k) range.push_back(k);
    RngStream erng(7);
    KEstimate est = estimate_k(pts, labels, range, erng);
    CHECK(est.k == K);

    SUBCASE("returned k maximizes the probe score") {
        for (const auto& [k, score] : est.scores) CHECK(est.scores.at(est.k) >= score);
    }
    SUBCASE("singleton range is returned unchanged") {
        std::vector<int> single{K};
        RngStream r2(8);
        CHECK(estimate_k(pts, labels, single, r2).k == K);
    }
}

TEST_CASE("estimate_k requires labeled data") {
    std::vector<Vector> pts{{0.0}, {1.0}, {2.0}};
    std::vector<int> labels{-1, -1, -1};
    std::vector<int> range{2};
    RngStream rng(1);
    CHECK_THROWS_AS(estimate_k(pts, labels, range, rng), std::invalid_argument);
}
