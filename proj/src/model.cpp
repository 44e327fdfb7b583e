#include "fedgcd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedgcd/serialize.hpp"

namespace fedgcd {

namespace {

void affine(const Vector& w, const Vector& b, const Vector& x, Vector& out) {
    const size_t rows = b.size();
    const size_t cols = x.size();
    out.assign(rows, 0.0);
    for (size_t r = 0; r < rows; ++r) {
        double s = b[r];
        const double* row = w.data() + r * cols;
        for (size_t c = 0; c < cols; ++c) s += row[c] * x[c];
        out[r] = s;
    }
}

// grad_w += d_out x^T, grad_b += d_out, d_x = W^T d_out
void affine_backward(const Vector& w, const Vector& x, const Vector& d_out, Vector& grad_w,
                     Vector& grad_b, Vector* d_x) {
    const size_t rows = d_out.size();
    const size_t cols = x.size();
    if (d_x) d_x->assign(cols, 0.0);
    for (size_t r = 0; r < rows; ++r) {
        double g = d_out[r];
        grad_b[r] += g;
        double* grow = grad_w.data() + r * cols;
        const double* wrow = w.data() + r * cols;
        for (size_t c = 0; c < cols; ++c) {
            grow[c] += g * x[c];
            if (d_x) (*d_x)[c] += wrow[c] * g;
        }
    }
}

void validate_arch(const EncoderArch& a) {
    if (a.input_dim < 1 || a.repr_dim < 1 || a.proj_dim < 1 || a.hidden_dim < 0)
        throw std::invalid_argument("encoder architecture dims invalid");
}

}  // namespace

EncoderWeights EncoderWeights::zeros(const EncoderArch& arch) {
    validate_arch(arch);
    EncoderWeights w;
    w.arch = arch;
    if (arch.hidden_dim > 0) {
        w.w1.assign(size_t(arch.hidden_dim) * size_t(arch.input_dim), 0.0);
        w.b1.assign(size_t(arch.hidden_dim), 0.0);
        w.w2.assign(size_t(arch.repr_dim) * size_t(arch.hidden_dim), 0.0);
    } else {
        w.w2.assign(size_t(arch.repr_dim) * size_t(arch.input_dim), 0.0);
    }
    w.b2.assign(size_t(arch.repr_dim), 0.0);
    w.w3.assign(size_t(arch.proj_dim) * size_t(arch.repr_dim), 0.0);
    w.b3.assign(size_t(arch.proj_dim), 0.0);
    return w;
}

size_t EncoderWeights::num_params() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

void EncoderWeights::add_scaled(const EncoderWeights& other, double scale) {
    auto add = [scale](Vector& a, const Vector& b) {
        for (size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
    };
    add(w1, other.w1);
    add(b1, other.b1);
    add(w2, other.w2);
    add(b2, other.b2);
    add(w3, other.w3);
    add(b3, other.b3);
}

void EncoderWeights::scale(double s) {
    for (Vector* v : {&w1, &b1, &w2, &b2, &w3, &b3})
        for (auto& x : *v) x *= s;
}

EncoderWeights init_encoder(const EncoderArch& arch, RngStream& rng) {
    EncoderWeights w = EncoderWeights::zeros(arch);
    auto fill = [&rng](Vector& m, size_t fan_in) {
        double scale = 1.0 / std::sqrt(double(fan_in));
        for (auto& v : m) v = scale * rng.normal();
    };
    if (arch.hidden_dim > 0) {
        fill(w.w1, size_t(arch.input_dim));
        fill(w.w2, size_t(arch.hidden_dim));
    } else {
        fill(w.w2, size_t(arch.input_dim));
    }
    fill(w.w3, size_t(arch.repr_dim));
    return w;
}

ForwardCache forward_cache(const EncoderWeights& w, const Vector& x) {
    if (int(x.size()) != w.arch.input_dim) throw std::invalid_argument("forward: input dimension mismatch");
    ForwardCache c;
    c.x = x;
    if (w.arch.hidden_dim > 0) {
        affine(w.w1, w.b1, x, c.a1);
        c.t.resize(c.a1.size());
        for (size_t i = 0; i < c.a1.size(); ++i) c.t[i] = std::tanh(c.a1[i]);
        affine(w.w2, w.b2, c.t, c.v);
    } else {
        affine(w.w2, w.b2, x, c.v);
    }
    affine(w.w3, w.b3, c.v, c.z);
    c.z_norm = norm(c.z);
    c.zn.assign(c.z.size(), 0.0);
    // Degenerate head output (all-zero weights) maps to the zero projection.
    if (c.z_norm >= 1e-12)
        for (size_t i = 0; i < c.z.size(); ++i) c.zn[i] = c.z[i] / c.z_norm;
    return c;
}

std::pair<Vector, Vector> forward(const EncoderWeights& w, const Vector& x) {
    ForwardCache c = forward_cache(w, x);
    return {std::move(c.v), std::move(c.zn)};
}

void backward_into(const EncoderWeights& w, const ForwardCache& cache, const Vector* d_v,
                   const Vector* d_zn, EncoderWeights& grad) {
    Vector d_v_total(cache.v.size(), 0.0);
    if (d_zn && cache.z_norm >= 1e-12) {
        // Through the normalization: d_z = (d_zn - (d_zn . zn) zn) / |z|.
        double proj = dot(*d_zn, cache.zn);
        Vector d_z(cache.z.size());
        for (size_t i = 0; i < d_z.size(); ++i) d_z[i] = ((*d_zn)[i] - proj * cache.zn[i]) / cache.z_norm;
        affine_backward(w.w3, cache.v, d_z, grad.w3, grad.b3, &d_v_total);
    }
    if (d_v)
        for (size_t i = 0; i < d_v_total.size(); ++i) d_v_total[i] += (*d_v)[i];

    if (w.arch.hidden_dim > 0) {
        Vector d_t;
        affine_backward(w.w2, cache.t, d_v_total, grad.w2, grad.b2, &d_t);
        Vector d_a1(d_t.size());
        for (size_t i = 0; i < d_t.size(); ++i) d_a1[i] = (1.0 - cache.t[i] * cache.t[i]) * d_t[i];
        affine_backward(w.w1, cache.x, d_a1, grad.w1, grad.b1, nullptr);
    } else {
        affine_backward(w.w2, cache.x, d_v_total, grad.w2, grad.b2, nullptr);
    }
}

ProjectionLoss instance_loss_on_projections(const std::vector<Vector>& proj,
                                            const std::vector<int>& labels,
                                            const InstanceLossParams& params) {
    const size_t n = labels.size();
    if (proj.size() != 2 * n) throw std::invalid_argument("instance loss: expected two views per example");
    if (n < 2) throw std::invalid_argument("instance loss: batch must hold at least 2 examples");
    if (params.tau_s <= 0.0 || params.tau_l <= 0.0)
        throw std::invalid_argument("instance loss: temperatures must be positive");

    const size_t total = 2 * n;
    ProjectionLoss out;
    out.d_proj.assign(total, Vector(proj.front().size(), 0.0));

    auto partner = [n](size_t a) { return a < n ? a + n : a - n; };

    // Self-supervised InfoNCE: every view is an anchor, its other view the
    // positive, every other projection in the batch a denominator term.
    const double self_w = (1.0 - params.lambda) / double(total);
    if (self_w != 0.0) {
        std::vector<double> logits(total);
        for (size_t a = 0; a < total; ++a) {
            double max_l = -std::numeric_limits<double>::infinity();
            for (size_t b = 0; b < total; ++b) {
                if (b == a) continue;
                logits[b] = dot(proj[a], proj[b]) / params.tau_s;
                max_l = std::max(max_l, logits[b]);
            }
            double denom = 0.0;
            for (size_t b = 0; b < total; ++b) {
                if (b == a) continue;
                denom += std::exp(logits[b] - max_l);
            }
            double log_den = max_l + std::log(denom);
            size_t p = partner(a);
            out.value += self_w * (log_den - logits[p]);

            for (size_t b = 0; b < total; ++b) {
                if (b == a) continue;
                double s = std::exp(logits[b] - log_den);
                double coeff = self_w * (s - (b == p ? 1.0 : 0.0)) / params.tau_s;
                for (size_t k = 0; k < proj[a].size(); ++k) {
                    out.d_proj[b][k] += coeff * proj[a][k];
                    out.d_proj[a][k] += coeff * proj[b][k];
                }
            }
        }
    }

    // Supervised term over labeled views only. Anchors without any positive
    // drop out of this term.
    std::vector<size_t> labeled;
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] >= 0) {
            labeled.push_back(i);
            labeled.push_back(i + n);
        }
    }
    if (params.lambda != 0.0 && !labeled.empty()) {
        std::vector<size_t> anchors;
        for (size_t a : labeled) {
            int la = labels[a % n];
            size_t positives = 0;
            for (size_t b : labeled)
                if (b != a && labels[b % n] == la) ++positives;
            if (positives > 0) anchors.push_back(a);
        }
        if (!anchors.empty()) {
            const double sup_w = params.lambda / double(anchors.size());
            for (size_t a : anchors) {
                int la = labels[a % n];
                double max_l = -std::numeric_limits<double>::infinity();
                std::vector<std::pair<size_t, double>> logit;
                std::vector<size_t> positives;
                for (size_t b : labeled) {
                    if (b == a) continue;
                    double l = dot(proj[a], proj[b]) / params.tau_l;
                    logit.emplace_back(b, l);
                    max_l = std::max(max_l, l);
                    if (labels[b % n] == la) positives.push_back(b);
                }
                double denom = 0.0;
                for (auto& [b, l] : logit) denom += std::exp(l - max_l);
                double log_den = max_l + std::log(denom);

                double pos_mean = 0.0;
                for (size_t p : positives) pos_mean += dot(proj[a], proj[p]) / params.tau_l;
                pos_mean /= double(positives.size());
                out.value += sup_w * (log_den - pos_mean);

                double inv_p = 1.0 / double(positives.size());
                for (auto& [b, l] : logit) {
                    double s = std::exp(l - log_den);
                    double coeff = sup_w * (s - (labels[b % n] == la ? inv_p : 0.0)) / params.tau_l;
                    for (size_t k = 0; k < proj[a].size(); ++k) {
                        out.d_proj[b][k] += coeff * proj[a][k];
                        out.d_proj[a][k] += coeff * proj[b][k];
                    }
                }
            }
        }
    }
    return out;
}

InstanceLossResult instance_loss(const EncoderWeights& w, const Batch& batch,
                                 const InstanceLossParams& params) {
    const size_t n = batch.size();
    if (batch.view_a.size() != n || batch.view_b.size() != n)
        throw std::invalid_argument("instance loss: batch views incomplete");

    std::vector<ForwardCache> caches;
    caches.reserve(2 * n);
    std::vector<Vector> proj;
    proj.reserve(2 * n);
    for (const auto& x : batch.view_a) caches.push_back(forward_cache(w, x));
    for (const auto& x : batch.view_b) caches.push_back(forward_cache(w, x));
    for (const auto& c : caches) proj.push_back(c.zn);

    ProjectionLoss pl = instance_loss_on_projections(proj, batch.labels, params);

    InstanceLossResult out;
    out.value = pl.value;
    out.grad = EncoderWeights::zeros(w.arch);
    for (size_t a = 0; a < caches.size(); ++a)
        backward_into(w, caches[a], nullptr, &pl.d_proj[a], out.grad);
    return out;
}

Vector encoder_to_params(const EncoderWeights& w) {
    Vector params;
    params.reserve(w.num_params());
    for (const Vector* v : {&w.w1, &w.b1, &w.w2, &w.b2, &w.w3, &w.b3})
        params.insert(params.end(), v->begin(), v->end());
    return params;
}

EncoderWeights encoder_from_params(const EncoderArch& arch, const Vector& params) {
    EncoderWeights w = EncoderWeights::zeros(arch);
    size_t p = 0;
    for (Vector* v : {&w.w1, &w.b1, &w.w2, &w.b2, &w.w3, &w.b3})
        for (auto& x : *v) x = params[p++];
    if (p != params.size()) throw std::invalid_argument("encoder_from_params: length mismatch");
    return w;
}

static constexpr char kWeightsMagic[4] = {'F', 'G', 'C', 'W'};
static constexpr uint16_t kWeightsVersion = 1;

std::vector<uint8_t> serialize_weights(const EncoderWeights& w) {
    ByteWriter out;
    out.magic(kWeightsMagic);
    out.u16(kWeightsVersion);
    out.u32(uint32_t(w.arch.input_dim));
    out.u32(uint32_t(w.arch.hidden_dim));
    out.u32(uint32_t(w.arch.repr_dim));
    out.u32(uint32_t(w.arch.proj_dim));
    for (double v : encoder_to_params(w)) out.f64(v);
    return out.take();
}

EncoderWeights deserialize_weights(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic(kWeightsMagic);
    if (r.u16() != kWeightsVersion) throw std::runtime_error("unsupported weights payload version");
    EncoderArch arch;
    arch.input_dim = int(r.u32());
    arch.hidden_dim = int(r.u32());
    arch.repr_dim = int(r.u32());
    arch.proj_dim = int(r.u32());
    EncoderWeights shape = EncoderWeights::zeros(arch);
    Vector params(shape.num_params());
    for (auto& v : params) v = r.f64();
    return encoder_from_params(arch, params);
}

void save_weights(const std::string& path, const EncoderWeights& w) {
    write_file_bytes(path, serialize_weights(w));
}

EncoderWeights load_weights(const std::string& path) {
    return deserialize_weights(read_file_bytes(path));
}

}  // namespace fedgcd
