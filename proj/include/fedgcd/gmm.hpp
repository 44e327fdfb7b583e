#ifndef FEDGCD_GMM_HPP
#define FEDGCD_GMM_HPP

#include <span>
#include <string>
#include <vector>

#include "fedgcd/clustering.hpp"
#include "fedgcd/numerics.hpp"

namespace fedgcd {

inline constexpr double kDefaultSigmaFloor = 1e-3;

// One potential class: diagonal Gaussian with per-dimension std deviations.
struct GaussianComponent {
    Vector mu;
    Vector sigma;
};

// Equal-prior mixture; no learnable mixing weights.
struct GMModel {
    std::vector<GaussianComponent> components;

    int size() const { return int(components.size()); }
    int dim() const { return components.empty() ? 0 : int(components.front().mu.size()); }
    bool empty() const { return components.empty(); }
};

// Gradients with respect to GMM parameters. Sigmas are trained as log(sigma)
// so steps preserve positivity; d_log_sigma holds d(loss)/d(log sigma).
struct GmmGrad {
    std::vector<Vector> d_mu;
    std::vector<Vector> d_log_sigma;

    static GmmGrad zeros_like(const GMModel& g);
    void add_scaled(const GmmGrad& other, double scale);
};

struct GmmLoss {
    double value = 0.0;
    Vector d_v;
    GmmGrad d_gmm;
};

struct GclLoss {
    double value = 0.0;
    std::vector<Vector> d_points;
    GmmGrad d_gmm;
};

// Component mean/std per cluster of the partition; per-dimension sample std
// clamped to sigma_floor, singleton clusters sit at the floor.
GMModel init_from_partition(std::span<const Vector> points, const Partition& part,
                            double sigma_floor = kDefaultSigmaFloor);

// exp(-0.5 * ||(v - mu)/sigma||^2 * (1 + m)); the margin m >= 0 widens the
// effective Mahalanobis distance to push inter-class dispersion.
double s_gmm(const Vector& v, const GaussianComponent& c, double margin);

// Baseline prototype similarity exp(v . mu / phi) kept for comparison runs.
double s_pcl(const Vector& v, const Vector& mu, double phi);

// -log of the margin-scaled posterior of component y against the remaining
// components (determinant-weighted, margin on the positive term only).
// Requires at least two components.
GmmLoss l_gmm(const GMModel& g, const Vector& v, int y, double margin);

// Compactness/covariance regularizer: -log s_gmm(v, y, m) + 0.5 log|cov_y|.
GmmLoss l_reg(const GMModel& g, const Vector& v, int y, double margin);

// Sum over points of l_gmm + alpha * l_reg.
GclLoss l_gcl(const GMModel& g, std::span<const Vector> points, std::span<const int> assignments,
              double alpha, double margin);

// Max-posterior component id (margin-free), ties toward the lowest id.
int assign(const GMModel& g, const Vector& v);

// In-place SGD step on (mu, log sigma) with the positivity floor re-imposed.
void apply_gmm_step(GMModel& g, const GmmGrad& grad, double lr, double sigma_floor);

// Flat parameter vector [all mu rows, then all log-sigma rows]; used by the
// finite-difference checks and anywhere a loss is viewed as f(params).
Vector gmm_to_params(const GMModel& g);
GMModel gmm_from_params(const GMModel& shape, const Vector& params);
Vector gmm_grad_to_params(const GmmGrad& grad);

// Binary payload: magic "FGCG", version u16, M u32, d u32, M mu rows then
// M sigma rows as little-endian f64. The exact bytes exchanged in federation.
std::vector<uint8_t> serialize_gmm(const GMModel& g);
GMModel deserialize_gmm(const std::vector<uint8_t>& bytes);
void save_gmm(const std::string& path, const GMModel& g);
GMModel load_gmm(const std::string& path);

}  // namespace fedgcd

#endif
