#include "fedgcd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedgcd/serialize.hpp"

namespace fedgcd {

namespace fs = std::filesystem;
using nlohmann::json;

int BenchmarkSplit::classes_shared_by_all() const {
    if (clients.empty()) return 0;
    std::set<int> shared = clients.front().label_set;
    for (const auto& c : clients) {
        std::set<int> next;
        std::set_intersection(shared.begin(), shared.end(), c.label_set.begin(), c.label_set.end(),
                              std::inserter(next, next.begin()));
        shared = std::move(next);
    }
    return int(shared.size());
}

bool BenchmarkSplit::label_spaces_pairwise_distinct() const {
    for (size_t i = 0; i < clients.size(); ++i) {
        for (size_t j = i + 1; j < clients.size(); ++j) {
            const auto& a = clients[i].label_set;
            const auto& b = clients[j].label_set;
            bool a_in_b = std::includes(b.begin(), b.end(), a.begin(), a.end());
            bool b_in_a = std::includes(a.begin(), a.end(), b.begin(), b.end());
            if (a_in_b || b_in_a) return false;
        }
    }
    return true;
}

std::vector<Example> generate_synthetic(int num_classes, int dim, int per_class,
                                        double class_sep, RngStream& rng) {
    if (num_classes < 2) throw std::invalid_argument("generate_synthetic: num_classes must be >= 2");
    if (per_class < 2) throw std::invalid_argument("generate_synthetic: per_class must be >= 2");
    if (dim < 1) throw std::invalid_argument("generate_synthetic: dim must be >= 1");
    if (class_sep < 0.0) throw std::invalid_argument("generate_synthetic: class_sep must be >= 0");

    std::vector<Vector> means;
    means.resize(size_t(num_classes));
    for (auto& m : means) {
        m.resize(size_t(dim));
        double n = 0.0;
        do {
            for (auto& v : m) v = rng.normal();
            n = norm(m);
        } while (n == 0.0);
        for (auto& v : m) v *= class_sep / n;
    }

    std::vector<Example> out;
    out.reserve(size_t(num_classes) * size_t(per_class));
    int id = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            Example e;
            e.features.resize(size_t(dim));
            for (int k = 0; k < dim; ++k) e.features[size_t(k)] = means[size_t(c)][size_t(k)] + rng.normal();
            e.true_class = c;
            e.origin_id = id++;
            out.push_back(std::move(e));
        }
    }
    return out;
}

namespace {

// Integer counts from simplex proportions by largest remainder,
// ties broken toward lower index.
std::vector<size_t> proportion_counts(const Vector& p, size_t n) {
    std::vector<size_t> counts(p.size());
    std::vector<std::pair<double, size_t>> rem(p.size());
    size_t assigned = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        double exact = p[i] * double(n);
        counts[i] = size_t(std::floor(exact));
        rem[i] = {exact - std::floor(exact), i};
        assigned += counts[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (size_t k = 0; assigned < n; ++k, ++assigned) counts[rem[k % rem.size()].second] += 1;
    return counts;
}

}  // namespace

BenchmarkSplit build_benchmark(const std::vector<Example>& examples, const BenchmarkParams& params,
                               RngStream& rng) {
    if (params.num_clients < 2) throw std::invalid_argument("build_benchmark: num_clients must be >= 2");
    if (params.beta <= 0.0) throw std::invalid_argument("build_benchmark: beta must be positive");
    if (params.labeled_fraction <= 0.0 || params.labeled_fraction >= 1.0)
        throw std::invalid_argument("build_benchmark: labeled_fraction must be in (0, 1)");
    if (params.old_fraction <= 0.0 || params.old_fraction >= 1.0)
        throw std::invalid_argument("build_benchmark: old_fraction must be in (0, 1)");
    if (params.test_fraction < 0.0 || params.test_fraction >= 1.0)
        throw std::invalid_argument("build_benchmark: test_fraction must be in [0, 1)");
    if (examples.empty()) throw std::invalid_argument("build_benchmark: empty example pool");

    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < examples.size(); ++i) by_class[examples[i].true_class].push_back(i);

    const int num_classes = int(by_class.size());
    const int num_old = int(std::floor(params.old_fraction * num_classes));
    if (num_old < 1 || num_old >= num_classes)
        throw std::invalid_argument("build_benchmark: class split infeasible, need at least one Old and one New class");

    std::vector<int> class_ids;
    for (const auto& [c, _] : by_class) class_ids.push_back(c);
    auto class_rng = rng.substream(1);
    class_rng.shuffle(class_ids);

    BenchmarkSplit split;
    split.beta = params.beta;
    split.seed = rng.seed();
    split.labeled_fraction = params.labeled_fraction;
    split.old_fraction = params.old_fraction;
    split.test_fraction = params.test_fraction;
    for (int i = 0; i < num_classes; ++i) {
        if (i < num_old)
            split.old_classes.insert(class_ids[size_t(i)]);
        else
            split.new_classes.insert(class_ids[size_t(i)]);
    }

    // Per class: shuffle once, peel off the test pool, then mark the labeled
    // subset of the remaining training instances (Old classes only).
    struct ClassPool {
        int class_id;
        std::vector<size_t> train;   // indices into `examples`
        std::vector<bool> labeled;   // parallel to train
    };
    std::vector<ClassPool> pools;
    auto pool_rng = rng.substream(2);
    for (auto& [c, idx] : by_class) {
        pool_rng.shuffle(idx);
        size_t n_test = size_t(std::llround(params.test_fraction * double(idx.size())));
        if (n_test >= idx.size()) n_test = idx.size() - 1;
        bool is_old = split.old_classes.count(c) > 0;

        std::vector<size_t> test_idx(idx.begin(), idx.begin() + std::ptrdiff_t(n_test));
        size_t n_test_labeled = is_old ? size_t(std::llround(params.labeled_fraction * double(n_test))) : 0;
        for (size_t t = 0; t < test_idx.size(); ++t) {
            Example e = examples[test_idx[t]];
            if (t < n_test_labeled) {
                e.label = e.true_class;
                split.server_test_labeled.push_back(std::move(e));
            } else {
                e.label.reset();
                split.server_test_unlabeled.push_back(std::move(e));
            }
        }

        ClassPool pool;
        pool.class_id = c;
        pool.train.assign(idx.begin() + std::ptrdiff_t(n_test), idx.end());
        pool.labeled.assign(pool.train.size(), false);
        if (is_old) {
            size_t n_lab = size_t(std::llround(params.labeled_fraction * double(pool.train.size())));
            for (size_t t = 0; t < n_lab && t < pool.train.size(); ++t) pool.labeled[t] = true;
        }
        pools.push_back(std::move(pool));
    }

    // Dirichlet allocation with bounded retries. A client with zero labeled
    // examples forces a redraw; so does a client label space contained in
    // another's, though that condition is demoted to a warning once retries
    // run out (it cannot be met for near-uniform beta).
    const size_t n_clients = size_t(params.num_clients);
    bool distinct_ok = false;
    std::string last_failure;
    for (int attempt = 0; attempt < params.max_retries; ++attempt) {
        auto alloc_rng = rng.substream(3).substream(uint64_t(attempt));
        std::vector<ClientDataset> clients(n_clients);
        for (size_t n = 0; n < n_clients; ++n) clients[n].client_id = int(n);

        for (const auto& pool : pools) {
            Vector p = sample_dirichlet(params.beta, params.num_clients, alloc_rng);
            auto counts = proportion_counts(p, pool.train.size());
            size_t cursor = 0;
            for (size_t n = 0; n < n_clients; ++n) {
                for (size_t k = 0; k < counts[n]; ++k, ++cursor) {
                    Example e = examples[pool.train[cursor]];
                    if (pool.labeled[cursor]) {
                        e.label = e.true_class;
                        clients[n].label_set.insert(e.true_class);
                    } else {
                        e.label.reset();
                    }
                    clients[n].examples.push_back(std::move(e));
                }
            }
        }

        bool all_have_labels = std::all_of(clients.begin(), clients.end(),
                                           [](const ClientDataset& c) { return !c.label_set.empty(); });
        if (!all_have_labels) {
            last_failure = "a client received zero labeled examples";
            continue;
        }
        split.clients = std::move(clients);
        distinct_ok = split.label_spaces_pairwise_distinct();
        if (distinct_ok) break;
        last_failure = "client label spaces not pairwise distinct";
    }
    if (split.clients.empty())
        throw std::runtime_error("build_benchmark: retries exhausted (" + last_failure + ")");
    split.label_space_warning = !distinct_ok;
    return split;
}

Vector augment(const Vector& x, double noise_scale, RngStream& rng) {
    if (noise_scale < 0.0) throw std::invalid_argument("augment: noise_scale must be >= 0");
    Vector out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] + noise_scale * rng.normal();
    return out;
}

// --- feature file IO -------------------------------------------------------

static constexpr char kFeatureMagic[4] = {'F', 'G', 'C', 'D'};
static constexpr uint16_t kFormatVersion = 1;

void write_feature_file(const std::string& path, const FeatureFile& data) {
    if (data.rows.size() != data.class_ids.size())
        throw std::invalid_argument("feature file: rows/class_ids size mismatch");
    ByteWriter w;
    w.magic(kFeatureMagic);
    w.u16(kFormatVersion);
    w.u64(data.rows.size());
    uint32_t d = data.rows.empty() ? 0 : uint32_t(data.rows.front().size());
    w.u32(d);
    for (const auto& row : data.rows) {
        if (row.size() != d) throw std::invalid_argument("feature file: inconsistent row dimension");
        for (double v : row) w.f64(v);
    }
    for (int64_t c : data.class_ids) w.i64(c);
    write_file_bytes(path, w.data());
}

FeatureFile read_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV " + path);
    size_t dim = size_t(std::count(line.begin(), line.end(), ',') );
    if (line.rfind("class,", 0) != 0) throw std::runtime_error("CSV header must start with 'class,'");
    FeatureFile out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (!std::getline(ss, cell, ',')) continue;
        out.class_ids.push_back(std::stoll(cell));
        Vector row;
        row.reserve(dim);
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != dim) throw std::runtime_error("CSV row dimension mismatch");
        out.rows.push_back(std::move(row));
    }
    return out;
}

FeatureFile read_feature_file(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 4 && std::equal(kFeatureMagic, kFeatureMagic + 4, bytes.begin()))
        ;  // binary
    else
        return read_feature_csv(path);

    ByteReader r(bytes);
    r.expect_magic(kFeatureMagic);
    uint16_t version = r.u16();
    if (version != kFormatVersion) throw std::runtime_error("unsupported feature file version");
    uint64_t n = r.u64();
    uint32_t d = r.u32();
    FeatureFile out;
    out.rows.resize(n, Vector(d));
    for (auto& row : out.rows)
        for (auto& v : row) v = r.f64();
    out.class_ids.resize(n);
    for (auto& c : out.class_ids) c = r.i64();
    return out;
}

std::vector<Example> examples_from_feature_file(const std::string& path) {
    FeatureFile f = read_feature_file(path);
    std::vector<Example> out(f.rows.size());
    for (size_t i = 0; i < f.rows.size(); ++i) {
        out[i].features = std::move(f.rows[i]);
        out[i].true_class = int(f.class_ids[i]);
        out[i].origin_id = int(i);
    }
    return out;
}

// --- benchmark persistence --------------------------------------------------

namespace {

FeatureFile to_feature_file(const std::vector<Example>& examples) {
    FeatureFile f;
    for (const auto& e : examples) {
        f.rows.push_back(e.features);
        f.class_ids.push_back(e.true_class);
    }
    return f;
}

json example_meta(const std::vector<Example>& examples) {
    json labeled = json::array();
    json origins = json::array();
    for (size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].label.has_value()) labeled.push_back(i);
        origins.push_back(examples[i].origin_id);
    }
    return json{{"labeled_idx", labeled}, {"origin_ids", origins}};
}

std::vector<Example> from_files(const std::string& path, const json& meta) {
    auto examples = examples_from_feature_file(path);
    std::vector<bool> labeled(examples.size(), false);
    for (const auto& i : meta.at("labeled_idx")) labeled[i.get<size_t>()] = true;
    const auto& origins = meta.at("origin_ids");
    for (size_t i = 0; i < examples.size(); ++i) {
        examples[i].origin_id = origins.at(i).get<int>();
        if (labeled[i]) examples[i].label = examples[i].true_class;
    }
    return examples;
}

}  // namespace

void save_benchmark(const BenchmarkSplit& split, const std::string& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["seed"] = split.seed;
    manifest["beta"] = split.beta;
    manifest["labeled_fraction"] = split.labeled_fraction;
    manifest["old_fraction"] = split.old_fraction;
    manifest["test_fraction"] = split.test_fraction;
    manifest["old_classes"] = split.old_classes;
    manifest["new_classes"] = split.new_classes;
    manifest["label_space_warning"] = split.label_space_warning;

    json clients = json::array();
    for (const auto& c : split.clients) {
        std::string file = "client_" + std::to_string(c.client_id) + ".fgcd";
        write_feature_file(dir + "/" + file, to_feature_file(c.examples));
        json meta = example_meta(c.examples);
        meta["id"] = c.client_id;
        meta["file"] = file;
        clients.push_back(std::move(meta));
    }
    manifest["clients"] = std::move(clients);

    write_feature_file(dir + "/test_labeled.fgcd", to_feature_file(split.server_test_labeled));
    manifest["test_labeled"] = example_meta(split.server_test_labeled);
    manifest["test_labeled"]["file"] = "test_labeled.fgcd";
    write_feature_file(dir + "/test_unlabeled.fgcd", to_feature_file(split.server_test_unlabeled));
    manifest["test_unlabeled"] = example_meta(split.server_test_unlabeled);
    manifest["test_unlabeled"]["file"] = "test_unlabeled.fgcd";

    std::ofstream out(dir + "/manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

BenchmarkSplit load_benchmark(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("cannot open manifest in " + dir);
    json manifest = json::parse(in);

    BenchmarkSplit split;
    split.seed = manifest.at("seed").get<uint64_t>();
    split.beta = manifest.at("beta").get<double>();
    split.labeled_fraction = manifest.at("labeled_fraction").get<double>();
    split.old_fraction = manifest.at("old_fraction").get<double>();
    split.test_fraction = manifest.at("test_fraction").get<double>();
    split.label_space_warning = manifest.at("label_space_warning").get<bool>();
    for (const auto& c : manifest.at("old_classes")) split.old_classes.insert(c.get<int>());
    for (const auto& c : manifest.at("new_classes")) split.new_classes.insert(c.get<int>());

    for (const auto& meta : manifest.at("clients")) {
        ClientDataset c;
        c.client_id = meta.at("id").get<int>();
        c.examples = from_files(dir + "/" + meta.at("file").get<std::string>(), meta);
        for (const auto& e : c.examples)
            if (e.label.has_value()) c.label_set.insert(*e.label);
        split.clients.push_back(std::move(c));
    }
    split.server_test_labeled =
        from_files(dir + "/" + manifest.at("test_labeled").at("file").get<std::string>(), manifest.at("test_labeled"));
    split.server_test_unlabeled = from_files(
        dir + "/" + manifest.at("test_unlabeled").at("file").get<std::string>(), manifest.at("test_unlabeled"));
    return split;
}

}  // namespace fedgcd
