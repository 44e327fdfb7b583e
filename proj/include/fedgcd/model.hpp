#ifndef FEDGCD_MODEL_HPP
#define FEDGCD_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedgcd/numerics.hpp"

namespace fedgcd {

// Encoder is a one-hidden-layer tanh MLP (input -> hidden -> repr); with
// hidden_dim == 0 it degenerates to a single affine layer. The head is one
// affine layer whose output is L2-normalized before any similarity.
struct EncoderArch {
    int input_dim = 0;
    int hidden_dim = 0;
    int repr_dim = 0;
    int proj_dim = 0;

    bool operator==(const EncoderArch&) const = default;
};

// Weight container; doubles as the gradient container (same shapes).
struct EncoderWeights {
    EncoderArch arch;
    Vector w1, b1;  // hidden x input (absent when hidden_dim == 0)
    Vector w2, b2;  // repr x (hidden or input)
    Vector w3, b3;  // proj x repr

    static EncoderWeights zeros(const EncoderArch& arch);
    size_t num_params() const;
    void add_scaled(const EncoderWeights& other, double scale);
    void scale(double s);
};

EncoderWeights init_encoder(const EncoderArch& arch, RngStream& rng);

struct ForwardCache {
    Vector x;
    Vector a1, t;  // hidden pre-activation and tanh output
    Vector v;      // representation
    Vector z, zn;  // head output and its unit-normalized projection
    double z_norm = 0.0;
};

ForwardCache forward_cache(const EncoderWeights& w, const Vector& x);

// (representation, unit projection).
std::pair<Vector, Vector> forward(const EncoderWeights& w, const Vector& x);

// Accumulates d(loss)/d(weights) into grad for one example, given upstream
// gradients w.r.t. the representation (d_v, may be null) and w.r.t. the unit
// projection (d_zn, may be null).
void backward_into(const EncoderWeights& w, const ForwardCache& cache, const Vector* d_v,
                   const Vector* d_zn, EncoderWeights& grad);

// A mini-batch: two augmented views per example plus the labeled-subset
// info. labels[i] < 0 marks the example unlabeled.
struct Batch {
    std::vector<size_t> indices;
    std::vector<int> labels;
    std::vector<Vector> view_a;
    std::vector<Vector> view_b;

    size_t size() const { return labels.size(); }
};

struct InstanceLossParams {
    double lambda = 0.35;
    double tau_s = 0.07;
    double tau_l = 0.05;
};

// Contrastive loss over unit projections: views 0..n-1 are the first view of
// each example, n..2n-1 the second. Returns the loss and gradients w.r.t.
// every projection. Exposed separately so closed-form tests can pin values
// at fixed projections.
struct ProjectionLoss {
    double value = 0.0;
    std::vector<Vector> d_proj;
};
ProjectionLoss instance_loss_on_projections(const std::vector<Vector>& proj,
                                            const std::vector<int>& labels,
                                            const InstanceLossParams& params);

// (1-lambda) InfoNCE over both views of every example plus lambda times the
// supervised contrastive term over the labeled subset, with exact gradients
// through head and encoder.
struct InstanceLossResult {
    double value = 0.0;
    EncoderWeights grad;
};
InstanceLossResult instance_loss(const EncoderWeights& w, const Batch& batch,
                                 const InstanceLossParams& params);

// Flat parameter order: w1, b1, w2, b2, w3, b3.
Vector encoder_to_params(const EncoderWeights& w);
EncoderWeights encoder_from_params(const EncoderArch& arch, const Vector& params);

// Binary container: magic "FGCW", version u16, architecture header
// (4 x u32), then the flat parameter vector as little-endian f64.
std::vector<uint8_t> serialize_weights(const EncoderWeights& w);
EncoderWeights deserialize_weights(const std::vector<uint8_t>& bytes);
void save_weights(const std::string& path, const EncoderWeights& w);
EncoderWeights load_weights(const std::string& path);

}  // namespace fedgcd

#endif
