#ifndef FEDGCD_EXPERIMENT_HPP
#define FEDGCD_EXPERIMENT_HPP

#include <string>
#include <vector>

#include "fedgcd/config.hpp"

namespace fedgcd {

// Benchmark realization for a config: synthetic generation or feature-file
// ingestion, then the Dirichlet split. Deterministic in (config, seed).
BenchmarkSplit make_benchmark(const ExperimentConfig& cfg);

// k_range resolution: explicit range from the config, otherwise a window
// centered on the benchmark's true class count.
std::vector<int> resolve_k_range(const ExperimentConfig& cfg, const BenchmarkSplit& split);

struct RunOutcome {
    ExperimentConfig cfg;
    ProtocolResult protocol;
    std::string transcript_jsonl;
    std::string evals_jsonl;
    std::string summary_jsonl;
};

// Full pipeline on an already-built benchmark. The upload observer, when
// set, sees every serialized client upload.
RunOutcome run_experiment(const ExperimentConfig& cfg, const BenchmarkSplit& split,
                          std::function<void(const RoundMessage&, const std::vector<uint8_t>&)>
                              upload_observer = nullptr);

// Convenience: build the benchmark then run.
RunOutcome run_experiment(const ExperimentConfig& cfg);

// Writes transcript.jsonl, evals.jsonl, summary.jsonl, final_weights.fgcw and
// final_gmm.fgcg under dir.
void write_run_artifacts(const RunOutcome& outcome, const std::string& dir);

struct AblationRow {
    std::string label;
    ExperimentConfig cfg;
    double acc_all = 0.0;
    double acc_old = 0.0;
    double acc_new = 0.0;
};

// Sweep grids for the supported axes; "loss-components" reproduces the five
// loss-composition rows (instance-only through full AGCL).
std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::string& axis);
std::string ablation_to_jsonl(const std::vector<AblationRow>& rows);

}  // namespace fedgcd

#endif
