#include "fedgcd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedgcd {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

void require_same_dim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("vector dimension mismatch");
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a, b);
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm input");
    return dot(a, b) / (na * nb);
}

RngStream::RngStream(uint64_t seed, uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(splitmix64(seed) ^ stream)) {}

RngStream RngStream::substream(uint64_t tag) const {
    return RngStream(seed_, splitmix64(stream_ ^ splitmix64(tag + 0x51ed2701)));
}

uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform01() {
    // 53-bit mantissa construction, uniform on [0, 1).
    return double(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double RngStream::gamma(double alpha) {
    if (alpha <= 0.0) throw std::invalid_argument("gamma: alpha must be positive");
    if (alpha < 1.0) {
        // Boost: Gamma(a) = Gamma(a+1) * U^(1/a). Stable for tiny shapes.
        double u = uniform01();
        while (u == 0.0) u = uniform01();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

size_t RngStream::uniform_index(size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    // Rejection sampling keeps the map from engine output to index unbiased.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return size_t(x % n);
}

Vector sample_gaussian(const Vector& mu, const Vector& sigma, RngStream& rng) {
    if (mu.size() != sigma.size()) throw std::invalid_argument("sample_gaussian: dimension mismatch");
    Vector out(mu.size());
    for (size_t i = 0; i < mu.size(); ++i) {
        if (sigma[i] < 0.0) throw std::invalid_argument("sample_gaussian: negative sigma entry");
        out[i] = mu[i] + sigma[i] * rng.normal();
    }
    return out;
}

Vector sample_dirichlet(double beta, int k, RngStream& rng) {
    if (beta <= 0.0) throw std::invalid_argument("sample_dirichlet: beta must be positive");
    if (k < 1) throw std::invalid_argument("sample_dirichlet: k must be >= 1");
    Vector g(static_cast<size_t>(k), 0.0);
    double total = 0.0;
    for (auto& v : g) {
        v = rng.gamma(beta);
        total += v;
    }
    if (total <= 0.0) {
        // All draws underflowed (possible for very small beta); fall back to
        // a single winning coordinate, which is the correct limit shape.
        Vector out(size_t(k), 0.0);
        out[rng.uniform_index(size_t(k))] = 1.0;
        return out;
    }
    for (auto& v : g) v /= total;
    return g;
}

double check_gradient(const std::function<double(const Vector&)>& f,
                      const std::function<Vector(const Vector&)>& grad_f,
                      const Vector& x, double h) {
    Vector analytic = grad_f(x);
    if (analytic.size() != x.size()) throw std::invalid_argument("check_gradient: gradient dimension mismatch");
    if (!std::isfinite(f(x))) throw std::runtime_error("check_gradient: f not finite at x");
    Vector p = x;
    double worst = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        p[i] = x[i] + h;
        double fp = f(p);
        p[i] = x[i] - h;
        double fm = f(p);
        p[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("check_gradient: f not finite at perturbed point");
        double numeric = (fp - fm) / (2.0 * h);
        double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace fedgcd
