#include "fedgcd/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedgcd/serialize.hpp"

namespace fedgcd {

using nlohmann::json;

LossToggles method_toggles(const std::string& method) {
    if (method == "baseline-instance-only") return {true, false, false, false};
    if (method == "gmm-only") return {false, true, false, false};
    if (method == "gmm-reg") return {false, true, true, false};
    if (method == "local-gcl") return {true, true, true, false};
    if (method == "agcl") return {true, true, true, true};
    throw std::invalid_argument("unknown method: " + method);
}

bool method_valid(const std::string& method) {
    return method == "baseline-instance-only" || method == "gmm-only" || method == "gmm-reg" ||
           method == "local-gcl" || method == "agcl";
}

namespace {

json dataset_to_json(const DatasetSpec& d) {
    return json{{"source", d.source},     {"path", d.path},
                {"num_classes", d.num_classes}, {"dim", d.dim},
                {"per_class", d.per_class},     {"class_sep", d.class_sep}};
}

DatasetSpec dataset_from_json(const json& j) {
    DatasetSpec d;
    d.source = j.value("source", d.source);
    d.path = j.value("path", d.path);
    d.num_classes = j.value("num_classes", d.num_classes);
    d.dim = j.value("dim", d.dim);
    d.per_class = j.value("per_class", d.per_class);
    d.class_sep = j.value("class_sep", d.class_sep);
    return d;
}

json config_to_json_obj(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["dataset"] = dataset_to_json(c.dataset);
    j["num_clients"] = c.num_clients;
    j["beta"] = c.beta;
    j["labeled_fraction"] = c.labeled_fraction;
    j["old_fraction"] = c.old_fraction;
    j["test_fraction"] = c.test_fraction;
    j["rounds"] = c.rounds;
    j["method"] = c.method;
    j["epochs"] = c.train.epochs;
    j["batch_size"] = c.train.batch_size;
    j["lambda"] = c.train.instance.lambda;
    j["tau_s"] = c.train.instance.tau_s;
    j["tau_l"] = c.train.instance.tau_l;
    j["alpha"] = c.train.alpha;
    j["gamma"] = c.train.gamma;
    j["margin"] = c.train.margin;
    j["n_sample"] = c.train.n_sample;
    j["lr_encoder"] = c.train.lr_encoder;
    j["lr_head"] = c.train.lr_head;
    j["lr_gmm"] = c.train.lr_gmm;
    j["grad_clip"] = c.train.grad_clip;
    j["noise_scale"] = c.train.noise_scale;
    j["sigma_floor"] = c.train.sigma_floor;
    j["gmm_init_level"] = c.train.gmm_init_level;
    j["hidden_dim"] = c.arch.hidden_dim;
    j["repr_dim"] = c.arch.repr_dim;
    j["proj_dim"] = c.arch.proj_dim;
    j["k_range"] = c.k_range;
    j["eval_per_round"] = c.eval_per_round;
    j["eval_fixed_k"] = c.eval_fixed_k;
    j["out_dir"] = c.out_dir;
    return j;
}

ExperimentConfig config_from_json_obj(const json& j) {
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
    c.num_clients = j.value("num_clients", c.num_clients);
    c.beta = j.value("beta", c.beta);
    c.labeled_fraction = j.value("labeled_fraction", c.labeled_fraction);
    c.old_fraction = j.value("old_fraction", c.old_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.rounds = j.value("rounds", c.rounds);
    c.method = j.value("method", c.method);
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.instance.lambda = j.value("lambda", c.train.instance.lambda);
    c.train.instance.tau_s = j.value("tau_s", c.train.instance.tau_s);
    c.train.instance.tau_l = j.value("tau_l", c.train.instance.tau_l);
    c.train.alpha = j.value("alpha", c.train.alpha);
    c.train.gamma = j.value("gamma", c.train.gamma);
    c.train.margin = j.value("margin", c.train.margin);
    c.train.n_sample = j.value("n_sample", c.train.n_sample);
    c.train.lr_encoder = j.value("lr_encoder", c.train.lr_encoder);
    c.train.lr_head = j.value("lr_head", c.train.lr_head);
    c.train.lr_gmm = j.value("lr_gmm", c.train.lr_gmm);
    c.train.grad_clip = j.value("grad_clip", c.train.grad_clip);
    c.train.noise_scale = j.value("noise_scale", c.train.noise_scale);
    c.train.sigma_floor = j.value("sigma_floor", c.train.sigma_floor);
    c.train.gmm_init_level = j.value("gmm_init_level", c.train.gmm_init_level);
    c.arch.hidden_dim = j.value("hidden_dim", c.arch.hidden_dim);
    c.arch.repr_dim = j.value("repr_dim", c.arch.repr_dim);
    c.arch.proj_dim = j.value("proj_dim", c.arch.proj_dim);
    if (j.contains("k_range")) c.k_range = j.at("k_range").get<std::vector<int>>();
    c.eval_per_round = j.value("eval_per_round", c.eval_per_round);
    c.eval_fixed_k = j.value("eval_fixed_k", c.eval_fixed_k);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (!method_valid(c.method)) throw std::invalid_argument("unknown method: " + c.method);
    return c;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_to_json_obj(cfg).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    return config_from_json_obj(json::parse(in));
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string dump = config_to_json_obj(cfg).dump();
    return hex64(fnv1a(dump.data(), dump.size()));
}

}  // namespace fedgcd
