#include "fedgcd/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedgcd/serialize.hpp"

namespace fedgcd {

using nlohmann::json;

namespace {

// Substream tags; every (client, round, purpose) triple gets its own stream
// so results cannot depend on scheduling order.
constexpr uint64_t kTagInitWeights = 1;
constexpr uint64_t kTagClientRound = 2;
constexpr uint64_t kTagCsa = 3;
constexpr uint64_t kTagEval = 4;
constexpr uint64_t kTagShuffle = 11;
constexpr uint64_t kTagAugment = 12;

}  // namespace

std::vector<uint8_t> serialize_message(const RoundMessage& msg) {
    ByteWriter w;
    w.magic("FGCM");
    w.u16(1);
    w.u8(msg.direction == Direction::Upload ? 1 : 0);
    w.u32(uint32_t(msg.round));
    w.i64(msg.client_id ? int64_t(*msg.client_id) : int64_t(-1));
    w.u64(msg.num_samples);
    auto weights = serialize_weights(msg.weights);
    w.u64(weights.size());
    w.bytes(weights.data(), weights.size());
    auto gmm = serialize_gmm(msg.gmm);
    w.u64(gmm.size());
    w.bytes(gmm.data(), gmm.size());
    return w.take();
}

RoundMessage deserialize_message(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("FGCM");
    if (r.u16() != 1) throw std::runtime_error("unsupported message version");
    RoundMessage msg;
    msg.direction = r.u8() ? Direction::Upload : Direction::Download;
    msg.round = int(r.u32());
    int64_t client = r.i64();
    if (client >= 0) msg.client_id = int(client);
    msg.num_samples = r.u64();
    std::vector<uint8_t> wbytes(r.u64());
    for (auto& b : wbytes) b = r.u8();
    msg.weights = deserialize_weights(wbytes);
    std::vector<uint8_t> gbytes(r.u64());
    for (auto& b : gbytes) b = r.u8();
    msg.gmm = deserialize_gmm(gbytes);
    return msg;
}

EncoderWeights fedavg(const std::vector<std::pair<EncoderWeights, uint64_t>>& uploads) {
    if (uploads.empty()) throw std::invalid_argument("fedavg: no uploads");
    const EncoderArch arch = uploads.front().first.arch;
    uint64_t total = 0;
    for (const auto& [w, n] : uploads) {
        if (!(w.arch == arch)) throw std::invalid_argument("fedavg: architecture mismatch");
        total += n;
    }
    if (total == 0) throw std::invalid_argument("fedavg: zero total sample count");

    std::vector<Vector> flats;
    flats.reserve(uploads.size());
    for (const auto& [w, n] : uploads) flats.push_back(encoder_to_params(w));

    const size_t P = flats.front().size();
    Vector avg(P, 0.0);
    std::vector<double> terms(uploads.size());
    for (size_t p = 0; p < P; ++p) {
        for (size_t i = 0; i < uploads.size(); ++i)
            terms[i] = (double(uploads[i].second) / double(total)) * flats[i][p];
        // Summing in sorted order makes the result independent of upload order.
        std::sort(terms.begin(), terms.end());
        double s = 0.0;
        for (double t : terms) s += t;
        avg[p] = s;
    }
    return encoder_from_params(arch, avg);
}

EncoderWeights fedavg_messages(const std::vector<RoundMessage>& uploads) {
    std::vector<std::pair<EncoderWeights, uint64_t>> pairs;
    pairs.reserve(uploads.size());
    for (const auto& m : uploads) pairs.emplace_back(m.weights, m.num_samples);
    return fedavg(pairs);
}

GMModel csa(const std::vector<GMModel>& local_gmms, int n_sample, RngStream& rng,
            double sigma_floor) {
    if (n_sample < 0) throw std::invalid_argument("csa: n_sample must be >= 0");
    std::vector<const GaussianComponent*> comps;
    for (const auto& g : local_gmms)
        for (const auto& c : g.components) comps.push_back(&c);
    if (comps.size() < 2) throw std::invalid_argument("csa: need at least 2 components in total");

    // Canonical component order: the pooled sample set (and hence the global
    // GMM) must not depend on client processing order.
    std::sort(comps.begin(), comps.end(), [](const GaussianComponent* a, const GaussianComponent* b) {
        if (a->mu != b->mu) return a->mu < b->mu;
        return a->sigma < b->sigma;
    });

    std::vector<Vector> points;
    if (n_sample == 0) {
        for (const auto* c : comps) points.push_back(c->mu);
    } else {
        for (const auto* c : comps)
            for (int s = 0; s < n_sample; ++s) points.push_back(sample_gaussian(c->mu, c->sigma, rng));
    }
    if (points.size() < 2) throw std::invalid_argument("csa: fewer than 2 pooled points");

    Partition part = finch(points);
    return init_from_partition(points, part, sigma_floor);
}

ClientLossResult client_batch_loss(const EncoderWeights& w, const GMModel& local_gmm,
                                   const GMModel& global_gmm, const Batch& batch,
                                   std::span<const Vector> clean_x, std::span<const int> local_y,
                                   std::span<const int> global_y, const ClientLossParams& params) {
    const size_t n = batch.size();
    ClientLossResult out;
    out.d_weights = EncoderWeights::zeros(w.arch);
    out.d_local = GmmGrad::zeros_like(local_gmm);
    out.d_global = GmmGrad::zeros_like(global_gmm);

    if (params.toggles.instance && n >= 2) {
        InstanceLossResult ins = instance_loss(w, batch, params.instance);
        out.loss_ins = ins.value;
        out.value += ins.value;
        out.d_weights.add_scaled(ins.grad, 1.0);
    }

    const double weight_local =
        params.toggles.local_gmm ? (params.toggles.global_gmm ? params.gamma : 1.0) : 0.0;
    const bool global_usable = params.toggles.global_gmm && global_gmm.size() >= 2;
    const double weight_global = global_usable ? (1.0 - params.gamma) : 0.0;
    const bool local_usable = weight_local != 0.0 && local_gmm.size() >= 2;
    const double alpha = params.toggles.reg ? params.alpha : 0.0;

    if (!local_usable && weight_global == 0.0) return out;
    if (clean_x.size() != n || local_y.size() != n || global_y.size() != n)
        throw std::invalid_argument("client_batch_loss: clean inputs size mismatch");

    std::vector<ForwardCache> caches;
    caches.reserve(n);
    std::vector<Vector> reps(n);
    for (size_t i = 0; i < n; ++i) {
        caches.push_back(forward_cache(w, clean_x[i]));
        reps[i] = caches.back().v;
    }
    std::vector<Vector> d_reps(n, Vector(reps.front().size(), 0.0));

    const double inv_n = 1.0 / double(n);
    if (local_usable) {
        GclLoss loc = l_gcl(local_gmm, reps, local_y, alpha, params.margin);
        out.loss_gcl_local = loc.value * inv_n;
        out.value += weight_local * out.loss_gcl_local;
        double s = weight_local * inv_n;
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < d_reps[i].size(); ++k) d_reps[i][k] += s * loc.d_points[i][k];
        out.d_local.add_scaled(loc.d_gmm, s);
    }
    if (weight_global != 0.0) {
        GclLoss glob = l_gcl(global_gmm, reps, global_y, alpha, params.margin);
        out.loss_gcl_global = glob.value * inv_n;
        out.value += weight_global * out.loss_gcl_global;
        double s = weight_global * inv_n;
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < d_reps[i].size(); ++k) d_reps[i][k] += s * glob.d_points[i][k];
        out.d_global.add_scaled(glob.d_gmm, s);
    }
    for (size_t i = 0; i < n; ++i) backward_into(w, caches[i], &d_reps[i], nullptr, out.d_weights);
    return out;
}

namespace {

void clip_encoder_grad(EncoderWeights& grad, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const Vector* v : {&grad.w1, &grad.b1, &grad.w2, &grad.b2, &grad.w3, &grad.b3})
        for (double x : *v) sq += x * x;
    if (sq > max_norm * max_norm) grad.scale(max_norm / std::sqrt(sq));
}

void clip_gmm_grad(GmmGrad& grad, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto* rows : {&grad.d_mu, &grad.d_log_sigma})
        for (const auto& row : *rows)
            for (double x : row) sq += x * x;
    if (sq <= max_norm * max_norm) return;
    double s = max_norm / std::sqrt(sq);
    for (auto* rows : {&grad.d_mu, &grad.d_log_sigma})
        for (auto& row : *rows)
            for (auto& x : row) x *= s;
}

void apply_encoder_step(EncoderWeights& w, const EncoderWeights& grad, double lr_encoder,
                        double lr_head) {
    auto step = [](Vector& param, const Vector& g, double lr) {
        for (size_t i = 0; i < param.size(); ++i) param[i] -= lr * g[i];
    };
    step(w.w1, grad.w1, lr_encoder);
    step(w.b1, grad.b1, lr_encoder);
    step(w.w2, grad.w2, lr_encoder);
    step(w.b2, grad.b2, lr_encoder);
    step(w.w3, grad.w3, lr_head);
    step(w.b3, grad.b3, lr_head);
}

}  // namespace

RoundMessage client_round(ClientState& state, const RoundMessage& downloaded,
                          const TrainConfig& cfg, RngStream rng, ClientRoundStats* stats) {
    const size_t n = state.dataset.examples.size();
    if (n == 0) throw std::invalid_argument("client_round: empty dataset");
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0) throw std::invalid_argument("client_round: gamma must be in [0, 1]");

    state.weights = downloaded.weights;
    state.global_gmm = downloaded.gmm;

    // Fresh pseudo-labels from the current representation space.
    std::vector<Vector> reps(n);
    std::vector<int> labels(n, -1);
    for (size_t i = 0; i < n; ++i) {
        reps[i] = forward(state.weights, state.dataset.examples[i].features).first;
        labels[i] = state.dataset.examples[i].label.value_or(-1);
    }
    Partition part = semi_finch(reps, labels);
    int min_clusters = std::max(2, int(state.dataset.label_set.size()));
    int level = cfg.gmm_init_level >= 0 ? std::min(cfg.gmm_init_level, part.num_levels() - 1)
                                        : coarsest_level_with_at_least(part, min_clusters);
    const Partition& chosen = part.level(level);
    state.local_gmm = init_from_partition(reps, chosen, cfg.sigma_floor);
    state.local_pseudo = chosen.assignments;
    state.global_pseudo.assign(n, -1);
    if (!state.global_gmm.empty())
        for (size_t i = 0; i < n; ++i) state.global_pseudo[i] = assign(state.global_gmm, reps[i]);

    ClientLossParams lp;
    lp.instance = cfg.instance;
    lp.alpha = cfg.alpha;
    lp.gamma = cfg.gamma;
    lp.margin = cfg.margin;
    lp.toggles = cfg.toggles;

    ClientRoundStats acc;
    acc.local_components = state.local_gmm.size();
    size_t batches = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = rng.substream(kTagShuffle).substream(uint64_t(epoch));
        auto aug_rng = rng.substream(kTagAugment).substream(uint64_t(epoch));
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t(0));
        shuffle_rng.shuffle(order);

        for (size_t start = 0; start < n; start += size_t(cfg.batch_size)) {
            size_t stop = std::min(n, start + size_t(cfg.batch_size));
            Batch batch;
            std::vector<Vector> clean;
            std::vector<int> local_y, global_y;
            for (size_t i = start; i < stop; ++i) {
                size_t ix = order[i];
                const auto& ex = state.dataset.examples[ix];
                batch.indices.push_back(ix);
                batch.labels.push_back(ex.label.value_or(-1));
                batch.view_a.push_back(augment(ex.features, cfg.noise_scale, aug_rng));
                batch.view_b.push_back(augment(ex.features, cfg.noise_scale, aug_rng));
                clean.push_back(ex.features);
                local_y.push_back(state.local_pseudo[ix]);
                global_y.push_back(state.global_pseudo[ix]);
            }
            ClientLossResult res = client_batch_loss(state.weights, state.local_gmm, state.global_gmm,
                                                     batch, clean, local_y, global_y, lp);
            clip_encoder_grad(res.d_weights, cfg.grad_clip);
            clip_gmm_grad(res.d_local, cfg.grad_clip);
            clip_gmm_grad(res.d_global, cfg.grad_clip);
            apply_encoder_step(state.weights, res.d_weights, cfg.lr_encoder, cfg.lr_head);
            apply_gmm_step(state.local_gmm, res.d_local, cfg.lr_gmm, cfg.sigma_floor);
            if (!state.global_gmm.empty())
                apply_gmm_step(state.global_gmm, res.d_global, cfg.lr_gmm, cfg.sigma_floor);
            acc.loss_ins += res.loss_ins;
            acc.loss_gcl_local += res.loss_gcl_local;
            acc.loss_gcl_global += res.loss_gcl_global;
            ++batches;
        }
    }
    if (stats) {
        *stats = acc;
        if (batches > 0) {
            stats->loss_ins /= double(batches);
            stats->loss_gcl_local /= double(batches);
            stats->loss_gcl_global /= double(batches);
        }
    }

    RoundMessage upload;
    upload.direction = Direction::Upload;
    upload.round = downloaded.round + 1;
    upload.client_id = state.client_id;
    upload.weights = state.weights;
    upload.gmm = state.local_gmm;
    upload.num_samples = n;
    return upload;
}

std::string transcript_to_jsonl(const std::vector<TranscriptRecord>& records) {
    std::ostringstream out;
    for (const auto& r : records) {
        json j;
        j["round"] = r.round;
        j["kind"] = r.kind;
        j["client"] = r.client;
        if (!r.digest.empty()) j["digest"] = r.digest;
        if (r.kind == "upload") {
            j["loss_ins"] = r.loss_ins;
            j["loss_gcl_local"] = r.loss_gcl_local;
            j["loss_gcl_global"] = r.loss_gcl_global;
        }
        if (r.kind == "eval") {
            j["acc_all"] = r.acc_all;
            j["acc_old"] = r.acc_old;
            j["acc_new"] = r.acc_new;
            j["k"] = r.k_used;
        }
        out << j.dump() << "\n";
    }
    return out.str();
}

ProtocolResult run_protocol(const BenchmarkSplit& split, const TrainConfig& train,
                            const ProtocolOptions& options) {
    if (options.rounds < 1) throw std::invalid_argument("run_protocol: rounds must be >= 1");
    if (split.clients.empty()) throw std::invalid_argument("run_protocol: no clients");
    const int input_dim = int(split.clients.front().examples.front().features.size());

    EncoderArch arch = options.arch;
    if (arch.input_dim == 0) arch.input_dim = input_dim;
    if (arch.input_dim != input_dim) throw std::invalid_argument("run_protocol: arch input_dim mismatch");

    RngStream base(options.seed);
    auto init_rng = base.substream(kTagInitWeights);
    EncoderWeights current = init_encoder(arch, init_rng);
    GMModel global_gmm;

    ProtocolResult result;
    std::vector<ClientState> states;
    states.reserve(split.clients.size());
    for (const auto& c : split.clients) {
        ClientState s;
        s.client_id = c.client_id;
        s.dataset = c;
        s.weights = current;
        states.push_back(std::move(s));
    }

    auto record_distribution = [&](int round, const std::string& kind) {
        for (const auto& s : states) {
            RoundMessage down;
            down.direction = Direction::Download;
            down.round = round;
            down.client_id = s.client_id;
            down.weights = current;
            down.gmm = global_gmm;
            TranscriptRecord rec;
            rec.round = round;
            rec.kind = kind;
            rec.client = s.client_id;
            rec.digest = hex64(fnv1a(serialize_message(down)));
            result.transcript.push_back(std::move(rec));
        }
    };

    record_distribution(0, "init");

    for (int round = 1; round <= options.rounds; ++round) {
        std::vector<RoundMessage> uploads;
        uploads.reserve(states.size());
        for (auto& s : states) {
            RoundMessage down;
            down.direction = Direction::Download;
            down.round = round - 1;
            down.client_id = s.client_id;
            down.weights = current;
            down.gmm = global_gmm;

            auto rng = base.substream(kTagClientRound)
                           .substream(uint64_t(round))
                           .substream(uint64_t(s.client_id));
            ClientRoundStats stats;
            RoundMessage up = client_round(s, down, train, rng, &stats);
            auto bytes = serialize_message(up);
            if (options.upload_observer) options.upload_observer(up, bytes);

            TranscriptRecord rec;
            rec.round = round;
            rec.kind = "upload";
            rec.client = s.client_id;
            rec.digest = hex64(fnv1a(bytes));
            rec.loss_ins = stats.loss_ins;
            rec.loss_gcl_local = stats.loss_gcl_local;
            rec.loss_gcl_global = stats.loss_gcl_global;
            result.transcript.push_back(std::move(rec));
            uploads.push_back(std::move(up));
        }

        current = fedavg_messages(uploads);
        std::vector<GMModel> local_gmms;
        local_gmms.reserve(uploads.size());
        for (const auto& u : uploads) local_gmms.push_back(u.gmm);
        auto csa_rng = base.substream(kTagCsa).substream(uint64_t(round));
        global_gmm = csa(local_gmms, train.n_sample, csa_rng, train.sigma_floor);

        record_distribution(round, "download");

        if (options.eval_per_round) {
            auto eval_rng = base.substream(kTagEval).substream(uint64_t(round));
            GcdEval ev = evaluate_gcd(current, split.server_test_labeled, split.server_test_unlabeled,
                                      split.old_classes, options.k_range, options.eval_fixed_k, eval_rng);
            EvalRecord er{round, ev.acc_all, ev.acc_old, ev.acc_new, ev.k_used};
            result.eval_series.push_back(er);
            TranscriptRecord rec;
            rec.round = round;
            rec.kind = "eval";
            rec.client = -1;
            rec.acc_all = ev.acc_all;
            rec.acc_old = ev.acc_old;
            rec.acc_new = ev.acc_new;
            rec.k_used = ev.k_used;
            result.transcript.push_back(std::move(rec));
        }
    }

    result.final_weights = current;
    result.final_global_gmm = global_gmm;
    if (options.final_estimate_k) {
        auto eval_rng = base.substream(kTagEval).substream(0);
        result.final_eval = evaluate_gcd(current, split.server_test_labeled, split.server_test_unlabeled,
                                         split.old_classes, options.k_range, 0, eval_rng);
        result.final_eval_valid = true;
    }
    return result;
}

}  // namespace fedgcd
