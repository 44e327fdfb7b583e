#include "fedgcd/eval.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace fedgcd {

std::vector<int> solve_assignment_min(const std::vector<std::vector<int64_t>>& cost) {
    const int n = int(cost.size());
    for (const auto& row : cost)
        if (int(row.size()) != n) throw std::invalid_argument("assignment matrix must be square");
    if (n == 0) return {};

    // Potentials over a 1-indexed virtual frame; column 0 is the sentinel.
    const int64_t kInf = std::numeric_limits<int64_t>::max() / 4;
    std::vector<int64_t> u(size_t(n) + 1, 0), v(size_t(n) + 1, 0);
    std::vector<int> match(size_t(n) + 1, 0);  // column -> row
    std::vector<int> way(size_t(n) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<int64_t> minv(size_t(n) + 1, kInf);
        std::vector<bool> used(size_t(n) + 1, false);
        do {
            used[size_t(j0)] = true;
            int i0 = match[size_t(j0)], j1 = 0;
            int64_t delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[size_t(j)]) continue;
                int64_t cur = cost[size_t(i0) - 1][size_t(j) - 1] - u[size_t(i0)] - v[size_t(j)];
                if (cur < minv[size_t(j)]) {
                    minv[size_t(j)] = cur;
                    way[size_t(j)] = j0;
                }
                if (minv[size_t(j)] < delta) {
                    delta = minv[size_t(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[size_t(j)]) {
                    u[size_t(match[size_t(j)])] += delta;
                    v[size_t(j)] -= delta;
                } else {
                    minv[size_t(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[size_t(j0)] != 0);
        do {
            int j1 = way[size_t(j0)];
            match[size_t(j0)] = match[size_t(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(size_t(n), -1);
    for (int j = 1; j <= n; ++j)
        if (match[size_t(j)] > 0) row_to_col[size_t(match[size_t(j)]) - 1] = j - 1;
    return row_to_col;
}

HungarianResult hungarian_accuracy(std::span<const int> pred, std::span<const int> truth,
                                   const std::set<int>& old_classes) {
    if (pred.size() != truth.size()) throw std::invalid_argument("hungarian_accuracy: size mismatch");
    if (pred.empty()) throw std::invalid_argument("hungarian_accuracy: empty input");

    std::map<int, int> cluster_ix, class_ix;
    for (int c : pred) cluster_ix.try_emplace(c, int(cluster_ix.size()));
    for (int c : truth) class_ix.try_emplace(c, int(class_ix.size()));
    const int rows = int(cluster_ix.size());
    const int cols = int(class_ix.size());
    const int n = std::max(rows, cols);

    std::vector<std::vector<int64_t>> counts(size_t(n), std::vector<int64_t>(size_t(n), 0));
    for (size_t i = 0; i < pred.size(); ++i)
        counts[size_t(cluster_ix[pred[i]])][size_t(class_ix[truth[i]])] += 1;

    int64_t max_count = 0;
    for (const auto& row : counts)
        for (int64_t c : row) max_count = std::max(max_count, c);
    std::vector<std::vector<int64_t>> cost(size_t(n), std::vector<int64_t>(size_t(n), 0));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) cost[size_t(r)][size_t(c)] = max_count - counts[size_t(r)][size_t(c)];

    std::vector<int> row_to_col = solve_assignment_min(cost);

    HungarianResult res;
    std::map<int, int> col_to_class;
    for (const auto& [cls, ix] : class_ix) col_to_class[ix] = cls;
    std::map<int, int> matched_class;  // cluster raw id -> class raw id
    for (const auto& [cluster, r] : cluster_ix) {
        int c = row_to_col[size_t(r)];
        if (c < cols) {
            matched_class[cluster] = col_to_class[c];
            res.cluster_to_class[cluster] = col_to_class[c];
        }
    }

    int64_t correct_old = 0, correct_new = 0, n_old = 0, n_new = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        auto it = matched_class.find(pred[i]);
        bool correct = it != matched_class.end() && it->second == truth[i];
        bool is_old = old_classes.count(truth[i]) > 0;
        if (is_old) {
            n_old += 1;
            correct_old += correct;
        } else {
            n_new += 1;
            correct_new += correct;
        }
    }
    res.matched = correct_old + correct_new;
    res.acc_all = double(res.matched) / double(pred.size());
    res.acc_old = n_old > 0 ? double(correct_old) / double(n_old) : 0.0;
    res.acc_new = n_new > 0 ? double(correct_new) / double(n_new) : 0.0;
    return res;
}

KEstimate estimate_k(std::span<const Vector> points, std::span<const int> labels,
                     std::span<const int> k_range, RngStream& rng) {
    if (points.size() != labels.size()) throw std::invalid_argument("estimate_k: labels size mismatch");
    if (k_range.empty()) throw std::invalid_argument("estimate_k: empty k range");

    std::vector<size_t> labeled;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) labeled.push_back(i);
    if (labeled.empty()) throw std::invalid_argument("estimate_k: no labeled points");

    // Candidate clusterings run unconstrained (clamping the scored points
    // would pin their accuracy at 1 for every k); the labeled subset then
    // scores each k by how well free clustering recovers its classes.
    std::vector<int> free_labels(points.size(), -1);

    std::vector<int> candidates(k_range.begin(), k_range.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    KEstimate est;
    double best = -1.0;
    for (int k : candidates) {
        if (k < 1) continue;
        auto krng = rng.substream(uint64_t(k));
        Partition part = semi_kmeans(points, free_labels, k, krng);
        std::vector<int> pred, truth;
        pred.reserve(labeled.size());
        truth.reserve(labeled.size());
        for (size_t i : labeled) {
            pred.push_back(part.assignments[i]);
            truth.push_back(labels[i]);
        }
        double score = hungarian_accuracy(pred, truth).acc_all;
        est.scores[k] = score;
        if (score > best) {
            best = score;
            est.k = k;
        }
    }
    if (est.k == 0) throw std::invalid_argument("estimate_k: no feasible k in range");
    return est;
}

GcdEval evaluate_gcd(const EncoderWeights& w, const std::vector<Example>& test_labeled,
                     const std::vector<Example>& test_unlabeled, const std::set<int>& old_classes,
                     std::span<const int> k_range, int fixed_k, RngStream& rng) {
    if (test_unlabeled.empty()) throw std::invalid_argument("evaluate_gcd: no unlabeled test examples");

    std::vector<Vector> reps;
    std::vector<int> labels;
    reps.reserve(test_labeled.size() + test_unlabeled.size());
    for (const auto& e : test_labeled) {
        reps.push_back(forward(w, e.features).first);
        labels.push_back(e.label.value_or(e.true_class));
    }
    for (const auto& e : test_unlabeled) {
        reps.push_back(forward(w, e.features).first);
        labels.push_back(-1);
    }

    GcdEval out;
    if (fixed_k > 0) {
        out.k_used = fixed_k;
    } else {
        auto est_rng = rng.substream(101);
        out.k_used = estimate_k(reps, labels, k_range, est_rng).k;
    }

    auto km_rng = rng.substream(202);
    Partition part = semi_kmeans(reps, labels, out.k_used, km_rng);

    std::vector<int> pred, truth;
    for (size_t i = 0; i < test_unlabeled.size(); ++i) {
        pred.push_back(part.assignments[test_labeled.size() + i]);
        truth.push_back(test_unlabeled[i].true_class);
    }
    HungarianResult res = hungarian_accuracy(pred, truth, old_classes);
    out.acc_all = res.acc_all;
    out.acc_old = res.acc_old;
    out.acc_new = res.acc_new;
    out.matched = res.matched;
    return out;
}

}  // namespace fedgcd
