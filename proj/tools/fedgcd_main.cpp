// Command-line driver: benchmark generation, protocol runs, ablation grids
// and transcript inspection. Flags mirror the config file; FGCD_SEED and
// FGCD_OUT_DIR environment variables override seed and output directory.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedgcd/experiment.hpp"
#include "fedgcd/serialize.hpp"

using namespace fedgcd;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string method;
    double beta = -1.0;
    int rounds = -1;
    int epochs = -1;
    double gamma = -1.0;
    double margin = -1.0;
    double alpha = -1.0;
    int n_sample = -1;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "experiment seed")->each([&args](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--method", args.method,
                    "baseline-instance-only | gmm-only | gmm-reg | local-gcl | agcl");
    cmd->add_option("--beta", args.beta, "Dirichlet heterogeneity");
    cmd->add_option("--rounds", args.rounds, "communication rounds");
    cmd->add_option("--epochs", args.epochs, "local epochs per round");
    cmd->add_option("--gamma", args.gamma, "global/local GCL trade-off");
    cmd->add_option("--margin", args.margin, "similarity margin m");
    cmd->add_option("--alpha", args.alpha, "regularizer weight");
    cmd->add_option("--n-sample", args.n_sample, "CSA samples per component");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.method.empty()) cfg.method = args.method;
    if (args.beta > 0.0) cfg.beta = args.beta;
    if (args.rounds > 0) cfg.rounds = args.rounds;
    if (args.epochs > 0) cfg.train.epochs = args.epochs;
    if (args.gamma >= 0.0) cfg.train.gamma = args.gamma;
    if (args.margin >= 0.0) cfg.train.margin = args.margin;
    if (args.alpha >= 0.0) cfg.train.alpha = args.alpha;
    if (args.n_sample >= 0) cfg.train.n_sample = args.n_sample;

    if (const char* env = std::getenv("FGCD_SEED")) cfg.seed = std::stoull(env);
    if (const char* env = std::getenv("FGCD_OUT_DIR")) cfg.out_dir = env;
    if (!method_valid(cfg.method)) throw CLI::ValidationError("unknown method " + cfg.method);
    return cfg;
}

int cmd_gen_benchmark(const CommonArgs& args) {
    ExperimentConfig cfg = resolve_config(args);
    BenchmarkSplit split = make_benchmark(cfg);
    std::string dir = cfg.out_dir + "/benchmark";
    save_benchmark(split, dir);
    std::cout << "benchmark written to " << dir << "\n"
              << "  clients: " << split.clients.size() << "\n"
              << "  old classes: " << split.old_classes.size()
              << ", new classes: " << split.new_classes.size() << "\n"
              << "  shared across all clients: " << split.classes_shared_by_all() << "\n"
              << "  test pool: " << split.server_test_labeled.size() << " labeled / "
              << split.server_test_unlabeled.size() << " unlabeled\n";
    if (split.label_space_warning)
        std::cout << "  warning: client label spaces are not pairwise distinct\n";
    return 0;
}

int cmd_run(const CommonArgs& args, const std::string& benchmark_dir) {
    ExperimentConfig cfg = resolve_config(args);
    BenchmarkSplit split =
        benchmark_dir.empty() ? make_benchmark(cfg) : load_benchmark(benchmark_dir);
    if (benchmark_dir.empty()) save_benchmark(split, cfg.out_dir + "/benchmark");

    auto t0 = std::chrono::steady_clock::now();
    RunOutcome outcome = run_experiment(cfg, split, nullptr);
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_run_artifacts(outcome, cfg.out_dir);
    {
        // Wall time lives outside the deterministic artifacts.
        std::ofstream timing(cfg.out_dir + "/timings.jsonl", std::ios::trunc);
        json j;
        j["config_hash"] = config_hash(cfg);
        j["wall_seconds"] = elapsed;
        timing << j.dump() << "\n";
    }

    std::cout << "artifacts in " << cfg.out_dir << "\n" << outcome.summary_jsonl;
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& axis) {
    ExperimentConfig cfg = resolve_config(args);
    auto rows = ablate(cfg, axis);
    std::filesystem::create_directories(cfg.out_dir);
    std::string path = cfg.out_dir + "/ablate_" + axis + ".jsonl";
    std::ofstream out(path, std::ios::trunc);
    out << ablation_to_jsonl(rows);
    std::cout << "axis " << axis << " -> " << path << "\n";
    for (const auto& r : rows)
        std::cout << "  " << r.label << ": all=" << r.acc_all << " old=" << r.acc_old
                  << " new=" << r.acc_new << "\n";
    return 0;
}

int cmd_eval(const std::string& benchmark_dir, const std::string& weights_path, int fixed_k,
             uint64_t seed) {
    BenchmarkSplit split = load_benchmark(benchmark_dir);
    EncoderWeights w = load_weights(weights_path);
    std::vector<int> k_range;
    int k_true = split.num_classes();
    for (int k = std::max(2, k_true - 8); k <= k_true + 8; ++k) k_range.push_back(k);
    RngStream rng(seed, 913);
    GcdEval ev = evaluate_gcd(w, split.server_test_labeled, split.server_test_unlabeled,
                              split.old_classes, k_range, fixed_k, rng);
    json j;
    j["acc_all"] = ev.acc_all;
    j["acc_old"] = ev.acc_old;
    j["acc_new"] = ev.acc_new;
    j["k"] = ev.k_used;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "cannot open " << path << "\n";
        return 1;
    }
    std::map<int, std::map<std::string, int>> per_round;
    std::string line;
    int lines = 0;
    std::string last_eval;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        per_round[j.at("round").get<int>()][j.at("kind").get<std::string>()] += 1;
        if (j.at("kind") == "eval") last_eval = line;
        ++lines;
    }
    std::cout << "records: " << lines << "\n";
    for (const auto& [round, kinds] : per_round) {
        std::cout << "round " << round << ":";
        for (const auto& [kind, n] : kinds) std::cout << " " << kind << "=" << n;
        std::cout << "\n";
    }
    if (!last_eval.empty()) std::cout << "last eval: " << last_eval << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated generalized category discovery simulator"};
    app.require_subcommand(1);

    CommonArgs gen_args, run_args, ablate_args;
    std::string run_benchmark_dir, ablate_axis;
    std::string eval_benchmark, eval_weights, inspect_path;
    int eval_k = 0;
    uint64_t eval_seed = 1;

    auto* gen = app.add_subcommand("gen-benchmark", "generate and persist a benchmark split");
    add_common_flags(gen, gen_args);

    auto* run = app.add_subcommand("run", "run the federated protocol and evaluate");
    add_common_flags(run, run_args);
    run->add_option("--benchmark", run_benchmark_dir, "reuse a saved benchmark directory");

    auto* abl = app.add_subcommand("ablate", "sweep one axis and tabulate accuracies");
    add_common_flags(abl, ablate_args);
    abl->add_option("--axis", ablate_axis, "alpha | gamma | m | n_sample | loss-components")
        ->required();

    auto* ev = app.add_subcommand("eval", "evaluate saved weights on a saved benchmark");
    ev->add_option("--benchmark", eval_benchmark, "benchmark directory")->required();
    ev->add_option("--weights", eval_weights, "weights file (FGCW)")->required();
    ev->add_option("--k", eval_k, "fixed cluster count (0 = estimate)");
    ev->add_option("--seed", eval_seed, "rng seed for the evaluation clustering");

    auto* insp = app.add_subcommand("inspect-transcript", "summarize a transcript file");
    insp->add_option("--file", inspect_path, "transcript.jsonl path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_benchmark(gen_args);
        if (run->parsed()) return cmd_run(run_args, run_benchmark_dir);
        if (abl->parsed()) return cmd_ablate(ablate_args, ablate_axis);
        if (ev->parsed()) return cmd_eval(eval_benchmark, eval_weights, eval_k, eval_seed);
        if (insp->parsed()) return cmd_inspect(inspect_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
