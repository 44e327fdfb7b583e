#ifndef FEDGCD_DATASET_HPP
#define FEDGCD_DATASET_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedgcd/numerics.hpp"

namespace fedgcd {

// One feature vector with ground truth. `label` is present only for examples
// the protocol treats as labeled; when present it always equals true_class
// and the class is an Old class.
struct Example {
    Vector features;
    int true_class = -1;
    std::optional<int> label;
    int origin_id = -1;
};

struct ClientDataset {
    int client_id = -1;
    std::vector<Example> examples;
    std::set<int> label_set;  // classes present among labeled examples

    size_t size() const { return examples.size(); }
};

struct BenchmarkSplit {
    std::vector<ClientDataset> clients;
    std::vector<Example> server_test_labeled;
    std::vector<Example> server_test_unlabeled;
    std::set<int> old_classes;
    std::set<int> new_classes;
    double beta = 0.0;
    uint64_t seed = 0;
    double labeled_fraction = 0.0;
    double old_fraction = 0.0;
    double test_fraction = 0.0;
    // Set when the Dirichlet retries could not produce pairwise-distinct
    // client label spaces (unavoidable for large beta).
    bool label_space_warning = false;

    int num_classes() const { return int(old_classes.size() + new_classes.size()); }
    // Count of classes whose labeled examples appear on every client.
    int classes_shared_by_all() const;
    // True iff no client's label set contains another's.
    bool label_spaces_pairwise_distinct() const;
};

// Isotropic unit-variance Gaussian classes with means drawn uniformly on a
// sphere of radius class_sep. Stand-in for externally produced embeddings.
std::vector<Example> generate_synthetic(int num_classes, int dim, int per_class,
                                        double class_sep, RngStream& rng);

struct BenchmarkParams {
    int num_clients = 5;
    double beta = 0.2;
    double labeled_fraction = 0.5;
    double old_fraction = 0.5;
    double test_fraction = 0.2;
    int max_retries = 1000;
};

// Old/New class split, labeled/unlabeled split and per-class Dirichlet(beta)
// allocation of the training pool across clients. The held-out test pool is
// split into labeled/unlabeled server subsets at the same labeled rate.
BenchmarkSplit build_benchmark(const std::vector<Example>& examples, const BenchmarkParams& params,
                               RngStream& rng);

// x + noise_scale * z, feature-space substitute for view augmentation.
Vector augment(const Vector& x, double noise_scale, RngStream& rng);

// --- feature file format -------------------------------------------------
// Binary: magic "FGCD", version u16, n u64, d u32, n*d f64 rows, n i64 class
// ids (-1 for unknown). CSV alternative: header "class,f0,...,f{d-1}".

struct FeatureFile {
    std::vector<Vector> rows;
    std::vector<int64_t> class_ids;
};

void write_feature_file(const std::string& path, const FeatureFile& data);
FeatureFile read_feature_file(const std::string& path);  // dispatches binary vs CSV
FeatureFile read_feature_csv(const std::string& path);

std::vector<Example> examples_from_feature_file(const std::string& path);

// --- benchmark persistence ------------------------------------------------
// Directory with one binary feature file per client plus manifest.json
// recording seed, beta, class splits, labeled indices and origin ids.

void save_benchmark(const BenchmarkSplit& split, const std::string& dir);
BenchmarkSplit load_benchmark(const std::string& dir);

}  // namespace fedgcd

#endif
