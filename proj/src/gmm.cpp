#include "fedgcd/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedgcd/serialize.hpp"

namespace fedgcd {

GmmGrad GmmGrad::zeros_like(const GMModel& g) {
    GmmGrad grad;
    grad.d_mu.assign(size_t(g.size()), Vector(size_t(g.dim()), 0.0));
    grad.d_log_sigma.assign(size_t(g.size()), Vector(size_t(g.dim()), 0.0));
    return grad;
}

void GmmGrad::add_scaled(const GmmGrad& other, double scale) {
    for (size_t c = 0; c < d_mu.size(); ++c) {
        for (size_t k = 0; k < d_mu[c].size(); ++k) {
            d_mu[c][k] += scale * other.d_mu[c][k];
            d_log_sigma[c][k] += scale * other.d_log_sigma[c][k];
        }
    }
}

GMModel init_from_partition(std::span<const Vector> points, const Partition& part,
                            double sigma_floor) {
    if (points.empty()) throw std::invalid_argument("init_from_partition: no points");
    if (part.assignments.size() != points.size())
        throw std::invalid_argument("init_from_partition: partition size mismatch");

    const size_t dim = points.front().size();
    auto means = cluster_means(points, part);
    std::vector<size_t> counts(size_t(part.num_clusters), 0);
    std::vector<Vector> sq(size_t(part.num_clusters), Vector(dim, 0.0));
    for (size_t i = 0; i < points.size(); ++i) {
        auto c = size_t(part.assignments[i]);
        counts[c] += 1;
        for (size_t k = 0; k < dim; ++k) {
            double d = points[i][k] - means[c][k];
            sq[c][k] += d * d;
        }
    }

    GMModel g;
    g.components.resize(size_t(part.num_clusters));
    for (size_t c = 0; c < g.components.size(); ++c) {
        g.components[c].mu = means[c];
        g.components[c].sigma.resize(dim);
        for (size_t k = 0; k < dim; ++k) {
            double s = counts[c] > 1 ? std::sqrt(sq[c][k] / double(counts[c] - 1)) : 0.0;
            g.components[c].sigma[k] = std::max(s, sigma_floor);
        }
    }
    return g;
}

namespace {

// Squared Mahalanobis distance under the component's diagonal metric.
double mahalanobis2(const Vector& v, const GaussianComponent& c) {
    double s = 0.0;
    for (size_t k = 0; k < v.size(); ++k) {
        double z = (v[k] - c.mu[k]) / c.sigma[k];
        s += z * z;
    }
    return s;
}

// log of the determinant-weighted similarity |cov_j|^(-1/2) S_gmm(v, j, 0).
double log_score(const Vector& v, const GaussianComponent& c) {
    double log_det_half = 0.0;
    for (double s : c.sigma) log_det_half += std::log(s);
    return -log_det_half - 0.5 * mahalanobis2(v, c);
}

void require_component(const GMModel& g, int y) {
    if (y < 0 || y >= g.size()) throw std::invalid_argument("gmm: component id out of range");
}

}  // namespace

double s_gmm(const Vector& v, const GaussianComponent& c, double margin) {
    if (margin < 0.0) throw std::invalid_argument("s_gmm: margin must be >= 0");
    return std::exp(-0.5 * mahalanobis2(v, c) * (1.0 + margin));
}

double s_pcl(const Vector& v, const Vector& mu, double phi) {
    if (phi <= 0.0) throw std::invalid_argument("s_pcl: phi must be positive");
    return std::exp(dot(v, mu) / phi);
}

GmmLoss l_gmm(const GMModel& g, const Vector& v, int y, double margin) {
    require_component(g, y);
    if (g.size() < 2) throw std::invalid_argument("l_gmm: need at least 2 components");
    if (margin < 0.0) throw std::invalid_argument("l_gmm: margin must be >= 0");

    const size_t M = size_t(g.size());
    const size_t dim = v.size();

    // Negative scores in log domain; softmax weights for the gradient.
    std::vector<double> neg_log(M, 0.0);
    double max_log = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < M; ++j) {
        if (int(j) == y) continue;
        neg_log[j] = log_score(v, g.components[j]);
        max_log = std::max(max_log, neg_log[j]);
    }
    double lse = 0.0;
    for (size_t j = 0; j < M; ++j) {
        if (int(j) == y) continue;
        lse += std::exp(neg_log[j] - max_log);
    }
    double log_den = max_log + std::log(lse);

    const auto& pos = g.components[size_t(y)];
    double log_det_half_y = 0.0;
    for (double s : pos.sigma) log_det_half_y += std::log(s);
    double d_y = mahalanobis2(v, pos);
    double log_num = -log_det_half_y - 0.5 * (1.0 + margin) * d_y;

    GmmLoss out;
    out.value = log_den - log_num;
    out.d_v.assign(dim, 0.0);
    out.d_gmm = GmmGrad::zeros_like(g);

    // Positive component path.
    for (size_t k = 0; k < dim; ++k) {
        double z = (v[k] - pos.mu[k]) / pos.sigma[k];
        double zz = z / pos.sigma[k];
        out.d_v[k] += (1.0 + margin) * zz;
        out.d_gmm.d_mu[size_t(y)][k] = -(1.0 + margin) * zz;
        out.d_gmm.d_log_sigma[size_t(y)][k] = 1.0 - (1.0 + margin) * z * z;
    }
    // Negative components, weighted by their softmax share of the denominator.
    for (size_t j = 0; j < M; ++j) {
        if (int(j) == y) continue;
        double w = std::exp(neg_log[j] - log_den);
        const auto& c = g.components[j];
        for (size_t k = 0; k < dim; ++k) {
            double z = (v[k] - c.mu[k]) / c.sigma[k];
            double zz = z / c.sigma[k];
            out.d_v[k] -= w * zz;
            out.d_gmm.d_mu[j][k] = w * zz;
            out.d_gmm.d_log_sigma[j][k] = w * (z * z - 1.0);
        }
    }
    return out;
}

GmmLoss l_reg(const GMModel& g, const Vector& v, int y, double margin) {
    require_component(g, y);
    if (margin < 0.0) throw std::invalid_argument("l_reg: margin must be >= 0");
    const auto& pos = g.components[size_t(y)];
    const size_t dim = v.size();

    double log_det_half = 0.0;
    for (double s : pos.sigma) log_det_half += std::log(s);
    double d_y = mahalanobis2(v, pos);

    GmmLoss out;
    out.value = 0.5 * (1.0 + margin) * d_y + log_det_half;
    out.d_v.assign(dim, 0.0);
    out.d_gmm = GmmGrad::zeros_like(g);
    for (size_t k = 0; k < dim; ++k) {
        double z = (v[k] - pos.mu[k]) / pos.sigma[k];
        double zz = z / pos.sigma[k];
        out.d_v[k] = (1.0 + margin) * zz;
        out.d_gmm.d_mu[size_t(y)][k] = -(1.0 + margin) * zz;
        out.d_gmm.d_log_sigma[size_t(y)][k] = 1.0 - (1.0 + margin) * z * z;
    }
    return out;
}

GclLoss l_gcl(const GMModel& g, std::span<const Vector> points, std::span<const int> assignments,
              double alpha, double margin) {
    if (alpha < 0.0) throw std::invalid_argument("l_gcl: alpha must be >= 0");
    if (points.size() != assignments.size())
        throw std::invalid_argument("l_gcl: points/assignments size mismatch");

    GclLoss out;
    out.d_gmm = GmmGrad::zeros_like(g);
    out.d_points.resize(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        GmmLoss main = l_gmm(g, points[i], assignments[i], margin);
        out.value += main.value;
        out.d_points[i] = std::move(main.d_v);
        out.d_gmm.add_scaled(main.d_gmm, 1.0);
        if (alpha > 0.0) {
            GmmLoss reg = l_reg(g, points[i], assignments[i], margin);
            out.value += alpha * reg.value;
            for (size_t k = 0; k < out.d_points[i].size(); ++k) out.d_points[i][k] += alpha * reg.d_v[k];
            out.d_gmm.add_scaled(reg.d_gmm, alpha);
        }
    }
    return out;
}

int assign(const GMModel& g, const Vector& v) {
    if (g.empty()) throw std::invalid_argument("assign: empty GMM");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < g.size(); ++j) {
        double score = log_score(v, g.components[size_t(j)]);
        if (score > best_score) {
            best_score = score;
            best = j;
        }
    }
    return best;
}

void apply_gmm_step(GMModel& g, const GmmGrad& grad, double lr, double sigma_floor) {
    for (size_t c = 0; c < g.components.size(); ++c) {
        auto& comp = g.components[c];
        for (size_t k = 0; k < comp.mu.size(); ++k) {
            comp.mu[k] -= lr * grad.d_mu[c][k];
            double s = std::log(comp.sigma[k]) - lr * grad.d_log_sigma[c][k];
            comp.sigma[k] = std::max(std::exp(s), sigma_floor);
        }
    }
}

Vector gmm_to_params(const GMModel& g) {
    Vector params;
    params.reserve(size_t(g.size() * g.dim() * 2));
    for (const auto& c : g.components)
        for (double v : c.mu) params.push_back(v);
    for (const auto& c : g.components)
        for (double s : c.sigma) params.push_back(std::log(s));
    return params;
}

GMModel gmm_from_params(const GMModel& shape, const Vector& params) {
    GMModel g = shape;
    size_t p = 0;
    for (auto& c : g.components)
        for (auto& v : c.mu) v = params[p++];
    for (auto& c : g.components)
        for (auto& s : c.sigma) s = std::exp(params[p++]);
    if (p != params.size()) throw std::invalid_argument("gmm_from_params: length mismatch");
    return g;
}

Vector gmm_grad_to_params(const GmmGrad& grad) {
    Vector params;
    for (const auto& row : grad.d_mu)
        for (double v : row) params.push_back(v);
    for (const auto& row : grad.d_log_sigma)
        for (double v : row) params.push_back(v);
    return params;
}

static constexpr char kGmmMagic[4] = {'F', 'G', 'C', 'G'};
static constexpr uint16_t kGmmVersion = 1;

std::vector<uint8_t> serialize_gmm(const GMModel& g) {
    ByteWriter w;
    w.magic(kGmmMagic);
    w.u16(kGmmVersion);
    w.u32(uint32_t(g.size()));
    w.u32(uint32_t(g.dim()));
    for (const auto& c : g.components)
        for (double v : c.mu) w.f64(v);
    for (const auto& c : g.components)
        for (double v : c.sigma) w.f64(v);
    return w.take();
}

GMModel deserialize_gmm(const std::vector<uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic(kGmmMagic);
    if (r.u16() != kGmmVersion) throw std::runtime_error("unsupported GMM payload version");
    uint32_t m = r.u32();
    uint32_t d = r.u32();
    GMModel g;
    g.components.resize(m);
    for (auto& c : g.components) {
        c.mu.resize(d);
        for (auto& v : c.mu) v = r.f64();
    }
    for (auto& c : g.components) {
        c.sigma.resize(d);
        for (auto& v : c.sigma) v = r.f64();
    }
    return g;
}

void save_gmm(const std::string& path, const GMModel& g) { write_file_bytes(path, serialize_gmm(g)); }

GMModel load_gmm(const std::string& path) { return deserialize_gmm(read_file_bytes(path)); }

}  // namespace fedgcd
