#ifndef FEDGCD_NUMERICS_HPP
#define FEDGCD_NUMERICS_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace fedgcd {

// All feature/representation math runs in 64-bit floats so the
// finite-difference gradient checks have headroom below 1e-4.
using Vector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

// a.b / (|a||b|). Zero-norm inputs are rejected instead of returning NaN.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Deterministic random stream. A (seed, stream) pair fully determines the
// draw sequence: the engine is the standard-mandated mt19937_64 and every
// distribution below is implemented here rather than taken from <random>,
// whose normal/gamma algorithms differ between standard libraries.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream = 0);

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

    // Fresh independent stream derived from this one's identity plus a tag.
    // Used to give every (client, round, purpose) its own stream.
    RngStream substream(uint64_t tag) const;

    uint64_t next_u64();
    double uniform01();              // in [0, 1)
    double normal();                 // standard normal, Marsaglia polar
    double gamma(double alpha);      // shape alpha, unit scale, Marsaglia-Tsang
    size_t uniform_index(size_t n);  // in [0, n)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    uint64_t stream_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// mu + sigma .* z with z i.i.d. standard normal. sigma entries must be >= 0.
Vector sample_gaussian(const Vector& mu, const Vector& sigma, RngStream& rng);

// Length-k point on the simplex via normalized Gamma(beta) draws.
Vector sample_dirichlet(double beta, int k, RngStream& rng);

// Max relative error between grad_f(x) and a central finite difference,
// entrywise, with denominator max(|analytic|, |numeric|, 1e-8).
double check_gradient(const std::function<double(const Vector&)>& f,
                      const std::function<Vector(const Vector&)>& grad_f,
                      const Vector& x, double h = 1e-5);

}  // namespace fedgcd

#endif
