#ifndef FEDGCD_FEDERATION_HPP
#define FEDGCD_FEDERATION_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedgcd/dataset.hpp"
#include "fedgcd/eval.hpp"
#include "fedgcd/gmm.hpp"
#include "fedgcd/model.hpp"

namespace fedgcd {

// The only things that ever cross the wire: weights, a GMM, and a sample
// count. Raw features and labels have no field here by construction.
enum class Direction { Upload, Download };

struct RoundMessage {
    Direction direction = Direction::Download;
    int round = 0;
    std::optional<int> client_id;
    EncoderWeights weights;
    GMModel gmm;               // upload: trained local GMM; download: global GMM
    uint64_t num_samples = 0;  // uploads only

    bool has_gmm() const { return !gmm.empty(); }
};

std::vector<uint8_t> serialize_message(const RoundMessage& msg);
RoundMessage deserialize_message(const std::vector<uint8_t>& bytes);

// Which loss terms a run trains with; presets cover the ablation rows
// (instance-only, gmm-only, +reg, +instance, +global).
struct LossToggles {
    bool instance = true;
    bool local_gmm = true;
    bool reg = true;
    bool global_gmm = true;
};

struct TrainConfig {
    InstanceLossParams instance;  // lambda, tau_s, tau_l
    double alpha = 0.01;
    double gamma = 0.9;
    double margin = 0.3;
    int n_sample = 1;  // N^S samples per component in CSA (0: pool the means)
    int epochs = 5;
    int batch_size = 128;
    double lr_encoder = 0.02;
    double lr_head = 0.02;
    double lr_gmm = 0.01;
    // Mahalanobis terms blow up when a sigma sits near the floor; per-group
    // L2 clipping keeps the SGD steps bounded. 0 disables.
    double grad_clip = 5.0;
    double noise_scale = 0.25;
    double sigma_floor = kDefaultSigmaFloor;
    int gmm_init_level = -1;  // FINCH level for local GMM init; -1 = auto
    LossToggles toggles;
};

// Sample-count-weighted parameter average. Summation per parameter runs in
// sorted value order, so the result is bit-identical under any permutation
// of the uploads.
EncoderWeights fedavg(const std::vector<std::pair<EncoderWeights, uint64_t>>& uploads);
EncoderWeights fedavg_messages(const std::vector<RoundMessage>& uploads);

// Client Semantics Association: draw n_sample points from every uploaded
// component (component order canonicalized first), pool them, cluster with
// FINCH and fit the global GMM on the pooled points. n_sample == 0 pools
// the component means directly.
GMModel csa(const std::vector<GMModel>& local_gmms, int n_sample, RngStream& rng,
            double sigma_floor = kDefaultSigmaFloor);

struct ClientState {
    int client_id = -1;
    ClientDataset dataset;
    EncoderWeights weights;
    GMModel local_gmm;
    GMModel global_gmm;
    std::vector<int> local_pseudo;   // per-example component id in local_gmm
    std::vector<int> global_pseudo;  // per-example component id in global_gmm
};

// One mini-batch of the combined objective
//   L = L_ins + (1-gamma) L_gcl(global) + gamma L_gcl(local)
// with the GCL sums averaged over the batch. Gradients are exact; a term
// whose coefficient is zero (or whose GMM has fewer than 2 components) is
// skipped entirely, so its parameter gradients are exactly zero.
struct ClientLossParams {
    InstanceLossParams instance;
    double alpha = 0.01;
    double gamma = 0.9;
    double margin = 0.3;
    LossToggles toggles;
};

struct ClientLossResult {
    double value = 0.0;
    double loss_ins = 0.0;
    double loss_gcl_local = 0.0;   // unweighted batch means
    double loss_gcl_global = 0.0;
    EncoderWeights d_weights;
    GmmGrad d_local;
    GmmGrad d_global;
};

ClientLossResult client_batch_loss(const EncoderWeights& w, const GMModel& local_gmm,
                                   const GMModel& global_gmm, const Batch& batch,
                                   std::span<const Vector> clean_x, std::span<const int> local_y,
                                   std::span<const int> global_y, const ClientLossParams& params);

struct ClientRoundStats {
    double loss_ins = 0.0;
    double loss_gcl_local = 0.0;
    double loss_gcl_global = 0.0;
    int local_components = 0;
};

// Full local round: adopt the download, re-cluster with semi-FINCH, rebuild
// the local GMM, pseudo-label against the global GMM, train, upload.
RoundMessage client_round(ClientState& state, const RoundMessage& downloaded,
                          const TrainConfig& cfg, RngStream rng, ClientRoundStats* stats = nullptr);

// --- protocol orchestration -------------------------------------------------

struct TranscriptRecord {
    int round = 0;
    std::string kind;  // "init" | "upload" | "download" | "eval"
    int client = -1;   // -1 for server records
    std::string digest;
    double loss_ins = 0.0;
    double loss_gcl_local = 0.0;
    double loss_gcl_global = 0.0;
    double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0;
    int k_used = 0;
};

std::string transcript_to_jsonl(const std::vector<TranscriptRecord>& records);

struct ProtocolOptions {
    int rounds = 20;
    uint64_t seed = 1;
    EncoderArch arch;  // input_dim filled from the data when left 0
    // Per-round tracking eval (fixed k) and a final full evaluation with
    // class-number estimation over k_range.
    bool eval_per_round = true;
    int eval_fixed_k = 0;  // 0: use the estimated k every time (slow)
    std::vector<int> k_range;
    bool final_estimate_k = true;
    // Observer sees every serialized client upload (used by privacy checks).
    std::function<void(const RoundMessage&, const std::vector<uint8_t>&)> upload_observer;
};

struct EvalRecord {
    int round = 0;
    double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0;
    int k_used = 0;
};

struct ProtocolResult {
    EncoderWeights final_weights;
    GMModel final_global_gmm;
    std::vector<EvalRecord> eval_series;
    GcdEval final_eval;
    bool final_eval_valid = false;
    std::vector<TranscriptRecord> transcript;
};

ProtocolResult run_protocol(const BenchmarkSplit& split, const TrainConfig& train,
                            const ProtocolOptions& options);

}  // namespace fedgcd

#endif
