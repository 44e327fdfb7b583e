#include "fedgcd/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedgcd/serialize.hpp"

namespace fedgcd {

using nlohmann::json;

namespace {

constexpr uint64_t kTagSynthetic = 21;
constexpr uint64_t kTagBenchmark = 22;

}  // namespace

BenchmarkSplit make_benchmark(const ExperimentConfig& cfg) {
    std::vector<Example> pool;
    RngStream base(cfg.seed);
    if (cfg.dataset.source == "synthetic") {
        auto rng = base.substream(kTagSynthetic);
        pool = generate_synthetic(cfg.dataset.num_classes, cfg.dataset.dim, cfg.dataset.per_class,
                                  cfg.dataset.class_sep, rng);
    } else if (cfg.dataset.source == "file") {
        pool = examples_from_feature_file(cfg.dataset.path);
    } else {
        throw std::invalid_argument("dataset source must be 'synthetic' or 'file'");
    }
    BenchmarkParams params;
    params.num_clients = cfg.num_clients;
    params.beta = cfg.beta;
    params.labeled_fraction = cfg.labeled_fraction;
    params.old_fraction = cfg.old_fraction;
    params.test_fraction = cfg.test_fraction;
    auto rng = base.substream(kTagBenchmark);
    return build_benchmark(pool, params, rng);
}

std::vector<int> resolve_k_range(const ExperimentConfig& cfg, const BenchmarkSplit& split) {
    if (!cfg.k_range.empty()) return cfg.k_range;
    int k_true = split.num_classes();
    std::vector<int> range;
    int lo = std::max(2, k_true - 8);
    for (int k = lo; k <= k_true + 8; ++k) range.push_back(k);
    return range;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const BenchmarkSplit& split,
                          std::function<void(const RoundMessage&, const std::vector<uint8_t>&)>
                              upload_observer) {
    RunOutcome outcome;
    outcome.cfg = cfg;

    TrainConfig train = cfg.train;
    train.toggles = method_toggles(cfg.method);

    ProtocolOptions options;
    options.rounds = cfg.rounds;
    options.seed = cfg.seed;
    options.arch = cfg.arch;
    options.eval_per_round = cfg.eval_per_round;
    options.k_range = resolve_k_range(cfg, split);
    options.eval_fixed_k = cfg.eval_fixed_k == -1 ? split.num_classes() : cfg.eval_fixed_k;
    options.final_estimate_k = true;
    options.upload_observer = std::move(upload_observer);

    outcome.protocol = run_protocol(split, train, options);
    outcome.transcript_jsonl = transcript_to_jsonl(outcome.protocol.transcript);

    std::ostringstream evals;
    for (const auto& e : outcome.protocol.eval_series) {
        json j;
        j["round"] = e.round;
        j["acc_all"] = e.acc_all;
        j["acc_old"] = e.acc_old;
        j["acc_new"] = e.acc_new;
        j["k"] = e.k_used;
        evals << j.dump() << "\n";
    }
    outcome.evals_jsonl = evals.str();

    std::ostringstream summary;
    const std::string hash = config_hash(cfg);
    auto emit = [&](const std::string& metric, const json& value) {
        json j;
        j["config_hash"] = hash;
        j["method"] = cfg.method;
        j["seed"] = cfg.seed;
        j["metric"] = metric;
        j["value"] = value;
        summary << j.dump() << "\n";
    };
    if (outcome.protocol.final_eval_valid) {
        emit("final_acc_all", outcome.protocol.final_eval.acc_all);
        emit("final_acc_old", outcome.protocol.final_eval.acc_old);
        emit("final_acc_new", outcome.protocol.final_eval.acc_new);
        emit("final_k", outcome.protocol.final_eval.k_used);
    }
    if (!outcome.protocol.eval_series.empty()) {
        const auto& last = outcome.protocol.eval_series.back();
        emit("track_acc_all", last.acc_all);
        emit("track_acc_new", last.acc_new);
    }
    emit("label_space_warning", split.label_space_warning);
    outcome.summary_jsonl = summary.str();
    return outcome;
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
    BenchmarkSplit split = make_benchmark(cfg);
    return run_experiment(cfg, split, nullptr);
}

void write_run_artifacts(const RunOutcome& outcome, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(dir + "/" + name, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
        out << text;
    };
    write("transcript.jsonl", outcome.transcript_jsonl);
    write("evals.jsonl", outcome.evals_jsonl);
    write("summary.jsonl", outcome.summary_jsonl);
    write("config.json", config_to_json(outcome.cfg) + "\n");
    save_weights(dir + "/final_weights.fgcw", outcome.protocol.final_weights);
    save_gmm(dir + "/final_gmm.fgcg", outcome.protocol.final_global_gmm);
}

std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::string& axis) {
    std::vector<std::pair<std::string, ExperimentConfig>> points;
    auto with = [&](const std::string& label, auto mutate) {
        ExperimentConfig cfg = base;
        mutate(cfg);
        points.emplace_back(label, std::move(cfg));
    };

    if (axis == "alpha") {
        for (double a : {0.0, 0.001, 0.01, 0.1, 1.0})
            with("alpha=" + std::to_string(a), [a](ExperimentConfig& c) { c.train.alpha = a; });
    } else if (axis == "gamma") {
        for (double g : {0.0, 0.3, 0.6, 0.9, 1.0})
            with("gamma=" + std::to_string(g), [g](ExperimentConfig& c) { c.train.gamma = g; });
    } else if (axis == "m") {
        for (double m : {0.0, 0.1, 0.3, 0.5, 1.0})
            with("m=" + std::to_string(m), [m](ExperimentConfig& c) { c.train.margin = m; });
    } else if (axis == "n_sample") {
        for (int s : {0, 1, 2, 4, 8})
            with("n_sample=" + std::to_string(s), [s](ExperimentConfig& c) { c.train.n_sample = s; });
    } else if (axis == "loss-components") {
        for (const char* method :
             {"baseline-instance-only", "gmm-only", "gmm-reg", "local-gcl", "agcl"})
            with(method, [method](ExperimentConfig& c) { c.method = method; });
    } else {
        throw std::invalid_argument("unknown ablation axis: " + axis);
    }

    std::vector<AblationRow> rows;
    BenchmarkSplit split = make_benchmark(base);
    for (auto& [label, cfg] : points) {
        // The split depends only on (dataset, seed); reuse it when unchanged.
        RunOutcome outcome = run_experiment(cfg, split, nullptr);
        AblationRow row;
        row.label = label;
        row.cfg = cfg;
        if (outcome.protocol.final_eval_valid) {
            row.acc_all = outcome.protocol.final_eval.acc_all;
            row.acc_old = outcome.protocol.final_eval.acc_old;
            row.acc_new = outcome.protocol.final_eval.acc_new;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_to_jsonl(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    for (const auto& r : rows) {
        for (const auto& [metric, value] :
             std::initializer_list<std::pair<const char*, double>>{{"final_acc_all", r.acc_all},
                                                                   {"final_acc_old", r.acc_old},
                                                                   {"final_acc_new", r.acc_new}}) {
            json j;
            j["config_hash"] = config_hash(r.cfg);
            j["point"] = r.label;
            j["method"] = r.cfg.method;
            j["metric"] = metric;
            j["value"] = value;
            out << j.dump() << "\n";
        }
    }
    return out.str();
}

}  // namespace fedgcd
