#ifndef FEDGCD_CONFIG_HPP
#define FEDGCD_CONFIG_HPP

#include <string>
#include <vector>

#include "fedgcd/federation.hpp"

namespace fedgcd {

struct DatasetSpec {
    std::string source = "synthetic";  // "synthetic" | "file"
    std::string path;                  // feature file when source == "file"
    int num_classes = 20;
    int dim = 32;
    int per_class = 100;
    double class_sep = 6.0;
};

// Everything a run needs; defaults mirror the reference hyper-parameters
// (lambda 0.35, tau_s 0.07, tau_l 0.05, alpha 0.01, gamma 0.9, margin 0.3,
// n_sample 1, batch 128, 5 clients).
struct ExperimentConfig {
    uint64_t seed = 1;
    DatasetSpec dataset;
    int num_clients = 5;
    double beta = 0.2;
    double labeled_fraction = 0.5;
    double old_fraction = 0.5;
    double test_fraction = 0.2;
    int rounds = 20;
    std::string method = "agcl";  // baseline-instance-only | gmm-only | gmm-reg | local-gcl | agcl
    TrainConfig train;
    EncoderArch arch{0, 64, 32, 32};  // input_dim 0: taken from the data
    std::vector<int> k_range;         // empty: centered on the true class count
    bool eval_per_round = true;
    // Per-round tracking k: -1 uses the benchmark's true class count,
    // 0 estimates every round, > 0 is explicit. The final evaluation always
    // estimates k over k_range.
    int eval_fixed_k = -1;
    std::string out_dir = "out";
};

LossToggles method_toggles(const std::string& method);
bool method_valid(const std::string& method);

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// FNV over the canonical JSON dump; keys sort alphabetically so the hash is
// stable across round-trips.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace fedgcd

#endif
