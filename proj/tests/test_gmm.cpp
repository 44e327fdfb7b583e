#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "fedgcd/gmm.hpp"
#include "fedgcd/numerics.hpp"

using namespace fedgcd;

namespace {

// Components kept within a few Mahalanobis units of each other: gradients
// through far-away components shrink like exp(-d/2) and fall below what a
// central difference can resolve at f64, which would test roundoff rather
// than the derivation.
GMModel random_gmm(RngStream& rng, int components, int dim) {
    GMModel g;
    for (int c = 0; c < components; ++c) {
        GaussianComponent comp;
        comp.mu.resize(size_t(dim));
        comp.sigma.resize(size_t(dim));
        for (int k = 0; k < dim; ++k) {
            comp.mu[size_t(k)] = 0.7 * rng.normal();
            comp.sigma[size_t(k)] = 0.8 + rng.uniform01();
        }
        g.components.push_back(std::move(comp));
    }
    return g;
}

Vector random_vec(RngStream& rng, int dim) {
    Vector v(static_cast<size_t>(dim), 0.0);
    for (auto& x : v) x = 0.7 * rng.normal();
    return v;
}

}  // namespace

TEST_CASE("init_from_partition estimates cluster statistics") {
    SUBCASE("identical points collapse to the floor") {
        std::vector<Vector> pts(4, Vector{1.0, -2.0});
        Partition part;
        part.assignments = {0, 0, 0, 0};
        part.num_clusters = 1;
        GMModel g = init_from_partition(pts, part, 1e-3);
        REQUIRE(g.size() == 1);
        CHECK(g.components[0].mu == Vector{1.0, -2.0});
        for (double s : g.components[0].sigma) CHECK(s == doctest::Approx(1e-3));
    }
    SUBCASE("component means equal arithmetic means") {
        std::vector<Vector> pts{{0.0, 0.0}, {2.0, 4.0}, {10.0, 10.0}, {14.0, 18.0}};
        Partition part;
        part.assignments = {0, 0, 1, 1};
        part.num_clusters = 2;
        GMModel g = init_from_partition(pts, part);
        CHECK(g.components[0].mu[0] == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(g.components[0].mu[1] == doctest::Approx(2.0).epsilon(1e-13));
        CHECK(g.components[1].mu[0] == doctest::Approx(12.0).epsilon(1e-13));
        CHECK(g.components[1].mu[1] == doctest::Approx(14.0).epsilon(1e-13));
        // Unbiased std of {0,2} is sqrt(2).
        CHECK(g.components[0].sigma[0] == doctest::Approx(std::sqrt(2.0)));
        CHECK(g.size() == part.num_clusters);
    }
    SUBCASE("singleton cluster sits at the floor") {
        std::vector<Vector> pts{{0.0}, {5.0}, {5.1}};
        Partition part;
        part.assignments = {0, 1, 1};
        part.num_clusters = 2;
        GMModel g = init_from_partition(pts, part, 1e-3);
        CHECK(g.components[0].sigma[0] == doctest::Approx(1e-3));
    }
}

TEST_CASE("s_gmm closed-form values") {
    GaussianComponent c;
    c.mu = {1.0, 2.0};
    c.sigma = {1.0, 1.0};
    CHECK(s_gmm(c.mu, c, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s_gmm(c.mu, c, 0.7) == doctest::Approx(1.0).epsilon(1e-15));

    Vector v{2.0, 3.0};  // squared distance 2 under unit sigma
    CHECK(s_gmm(v, c, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(std::exp(-1.0) == doctest::Approx(0.367879).epsilon(1e-5));
    CHECK(s_gmm(v, c, 0.3) == doctest::Approx(std::exp(-1.3)).epsilon(1e-12));
    CHECK(std::exp(-1.3) == doctest::Approx(0.272532).epsilon(1e-5));
}

TEST_CASE("s_pcl closed-form values and monotonicity") {
    Vector mu{1.0, 0.0};
    CHECK(s_pcl(Vector{0.0, 1.0}, mu, 0.5) == doctest::Approx(1.0));
    CHECK(s_pcl(mu, mu, 1.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    double prev = 0.0;
    for (double d = -1.0; d <= 1.0; d += 0.25) {
        double s = s_pcl(Vector{d, 0.0}, mu, 0.7);
        CHECK(s > prev);
        prev = s;
    }
    CHECK_THROWS_AS(s_pcl(mu, mu, 0.0), std::invalid_argument);
}

TEST_CASE("l_gmm identity and symmetry cases") {
    GaussianComponent c;
    c.mu = {0.5, -0.5, 2.0};
    c.sigma = {1.2, 0.8, 1.0};
    Vector v{1.0, 0.0, 1.0};

    SUBCASE("two identical components give exactly zero") {
        GMModel g;
        g.components = {c, c};
        CHECK(l_gmm(g, v, 0, 0.0).value == 0.0);
        CHECK(std::fabs(l_gmm(g, v, 1, 0.0).value) < 1e-12);
    }
    SUBCASE("three identical components give log 2") {
        GMModel g;
        g.components = {c, c, c};
        CHECK(l_gmm(g, v, 0, 0.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(std::log(2.0) == doctest::Approx(0.6931).epsilon(1e-4));
    }
    SUBCASE("single component rejected") {
        GMModel g;
        g.components = {c};
        CHECK_THROWS_AS(l_gmm(g, v, 0, 0.0), std::invalid_argument);
    }
}

TEST_CASE("l_reg identity cases") {
    GMModel g;
    GaussianComponent c;
    c.mu = {1.0, 2.0, 3.0, 4.0};
    c.sigma = {1.0, 1.0, 1.0, 1.0};
    g.components = {c, c};

    CHECK(l_reg(g, c.mu, 0, 0.3).value == 0.0);

    GMModel doubled = g;
    for (auto& s : doubled.components[0].sigma) s = 2.0;
    // 0.5 * sum log sigma^2 = d log 2.
    CHECK(l_reg(doubled, c.mu, 0, 0.0).value == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("l_gcl composition") {
    RngStream rng(77);
    GMModel g = random_gmm(rng, 3, 4);
    std::vector<Vector> pts{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
    std::vector<int> ys{0, 2, 1};

    SUBCASE("alpha zero reduces to the sum of l_gmm") {
        double sum = 0.0;
        for (size_t i = 0; i < pts.size(); ++i) sum += l_gmm(g, pts[i], ys[i], 0.3).value;
        CHECK(l_gcl(g, pts, ys, 0.0, 0.3).value == doctest::Approx(sum).epsilon(1e-12));
    }
    SUBCASE("identical components leave only the regularizer") {
        // With two identical components and no margin the main term is 0.
        GMModel twin;
        twin.components = {g.components[0], g.components[0]};
        std::vector<Vector> one{pts[0]};
        std::vector<int> y{0};
        double alpha = 0.01;
        double expected = alpha * l_reg(twin, pts[0], 0, 0.0).value;
        CHECK(l_gcl(twin, one, y, alpha, 0.0).value == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("gmm losses pass finite-difference checks at random configurations") {
    RngStream rng(2025);
    for (int rep = 0; rep < 20; ++rep) {
        int M = 2 + int(rng.uniform_index(4));
        int dim = 2 + int(rng.uniform_index(5));
        GMModel g = random_gmm(rng, M, dim);
        Vector v = random_vec(rng, dim);
        int y = int(rng.uniform_index(size_t(M)));
        double margin = rep % 2 ? 0.3 : 0.0;

        // Parameter vector: [v, mu rows, log-sigma rows].
        Vector x0 = v;
        Vector gp = gmm_to_params(g);
        x0.insert(x0.end(), gp.begin(), gp.end());

        auto unpack = [&](const Vector& x) {
            Vector vv(x.begin(), x.begin() + dim);
            Vector rest(x.begin() + dim, x.end());
            return std::make_pair(vv, gmm_from_params(g, rest));
        };

        auto f_gmm = [&](const Vector& x) {
            auto [vv, gg] = unpack(x);
            return l_gmm(gg, vv, y, margin).value;
        };
        auto grad_gmm = [&](const Vector& x) {
            auto [vv, gg] = unpack(x);
            GmmLoss loss = l_gmm(gg, vv, y, margin);
            Vector out = loss.d_v;
            Vector gflat = gmm_grad_to_params(loss.d_gmm);
            out.insert(out.end(), gflat.begin(), gflat.end());
            return out;
        };
        CHECK(check_gradient(f_gmm, grad_gmm, x0) < 1e-4);

        auto f_reg = [&](const Vector& x) {
            auto [vv, gg] = unpack(x);
            return l_reg(gg, vv, y, margin).value;
        };
        auto grad_reg = [&](const Vector& x) {
            auto [vv, gg] = unpack(x);
            GmmLoss loss = l_reg(gg, vv, y, margin);
            Vector out = loss.d_v;
            Vector gflat = gmm_grad_to_params(loss.d_gmm);
            out.insert(out.end(), gflat.begin(), gflat.end());
            return out;
        };
        CHECK(check_gradient(f_reg, grad_reg, x0) < 1e-4);
    }
}

TEST_CASE("l_gcl gradient matches finite differences over points and parameters") {
    RngStream rng(404);
    for (int rep = 0; rep < 5; ++rep) {
        int M = 3, dim = 3, n = 4;
        GMModel g = random_gmm(rng, M, dim);
        std::vector<Vector> pts;
        std::vector<int> ys;
        for (int i = 0; i < n; ++i) {
            pts.push_back(random_vec(rng, dim));
            ys.push_back(int(rng.uniform_index(size_t(M))));
        }
        double alpha = 0.01, margin = 0.3;

        Vector x0;
        for (const auto& p : pts) x0.insert(x0.end(), p.begin(), p.end());
        Vector gp = gmm_to_params(g);
        x0.insert(x0.end(), gp.begin(), gp.end());

        auto unpack = [&](const Vector& x) {
            std::vector<Vector> pp(static_cast<size_t>(n), Vector(static_cast<size_t>(dim), 0.0));
            size_t pos = 0;
            for (auto& p : pp)
                for (auto& val : p) val = x[pos++];
            Vector rest(x.begin() + std::ptrdiff_t(pos), x.end());
            return std::make_pair(pp, gmm_from_params(g, rest));
        };
        auto f = [&](const Vector& x) {
            auto [pp, gg] = unpack(x);
            return l_gcl(gg, pp, ys, alpha, margin).value;
        };
        auto grad = [&](const Vector& x) {
            auto [pp, gg] = unpack(x);
            GclLoss loss = l_gcl(gg, pp, ys, alpha, margin);
            Vector out;
            for (const auto& dp : loss.d_points) out.insert(out.end(), dp.begin(), dp.end());
            Vector gflat = gmm_grad_to_params(loss.d_gmm);
            out.insert(out.end(), gflat.begin(), gflat.end());
            return out;
        };
        CHECK(check_gradient(f, grad, x0) < 1e-4);
    }
}

TEST_CASE("assign agrees with a brute-force posterior oracle") {
    RngStream rng(909);
    for (int rep = 0; rep < 50; ++rep) {
        int M = 2 + int(rng.uniform_index(5));
        int dim = 1 + int(rng.uniform_index(4));
        GMModel g = random_gmm(rng, M, dim);
        Vector v = random_vec(rng, dim);

        // Equal-prior posterior maximization computed from raw densities.
        int best = 0;
        double best_logp = -1e300;
        for (int j = 0; j < M; ++j) {
            const auto& c = g.components[size_t(j)];
            double logp = 0.0;
            for (int k = 0; k < dim; ++k) {
                double z = (v[size_t(k)] - c.mu[size_t(k)]) / c.sigma[size_t(k)];
                logp += -std::log(c.sigma[size_t(k)]) - 0.5 * z * z;
            }
            if (logp > best_logp) {
                best_logp = logp;
                best = j;
            }
        }
        CHECK(assign(g, v) == best);
    }
}

TEST_CASE("assign picks the component under the anchor and breaks ties low") {
    GMModel g;
    for (int j = 0; j < 3; ++j) {
        GaussianComponent c;
        c.mu = {6.0 * j, 0.0};
        c.sigma = {1.0, 1.0};
        g.components.push_back(c);
    }
    CHECK(assign(g, Vector{12.0, 0.0}) == 2);
    CHECK(assign(g, Vector{0.0, 0.0}) == 0);
    // Equidistant between components 0 and 1 with equal sigma: lowest id.
    CHECK(assign(g, Vector{3.0, 0.0}) == 0);
}

TEST_CASE("assign is scale-invariant when components share a sigma profile") {
    RngStream rng(31337);
    for (int rep = 0; rep < 30; ++rep) {
        int M = 2 + int(rng.uniform_index(4));
        int dim = 2 + int(rng.uniform_index(3));
        Vector sigma(static_cast<size_t>(dim), 0.0);
        for (auto& s : sigma) s = 0.5 + rng.uniform01();
        GMModel g;
        for (int j = 0; j < M; ++j) {
            GaussianComponent c;
            c.mu = random_vec(rng, dim);
            c.sigma = sigma;
            g.components.push_back(std::move(c));
        }
        Vector v = random_vec(rng, dim);
        int base = assign(g, v);
        for (double scale : {0.25, 4.0, 32.0}) {
            GMModel scaled = g;
            for (auto& c : scaled.components)
                for (auto& s : c.sigma) s *= scale;
            CHECK(assign(scaled, v) == base);
        }
    }
}

TEST_CASE("l_gmm falls as v approaches its component, negatives held fixed") {
    // Walk v around a sphere centered on the (shared, spherical) negative
    // components: every negative term stays constant while the distance to
    // mu_y shrinks, isolating the positive-path monotonicity.
    RngStream rng(515);
    for (int rep = 0; rep < 10; ++rep) {
        const int dim = 3;
        Vector neg_center{3.0 * rng.normal(), 3.0 * rng.normal(), 3.0 * rng.normal()};
        double neg_sigma = 0.6 + rng.uniform01();
        GMModel g;
        GaussianComponent pos;
        pos.mu = {neg_center[0] + 6.0, neg_center[1], neg_center[2]};
        pos.sigma.assign(dim, 0.7 + rng.uniform01());
        g.components.push_back(pos);
        for (int j = 0; j < 3; ++j) {
            GaussianComponent c;
            c.mu = neg_center;
            c.sigma.assign(dim, neg_sigma);
            g.components.push_back(std::move(c));
        }

        const double radius = 2.0;
        double prev = std::numeric_limits<double>::infinity();
        for (double theta : {3.0, 2.2, 1.5, 0.8, 0.2, 0.0}) {
            Vector v = neg_center;
            v[0] += radius * std::cos(theta);
            v[1] += radius * std::sin(theta);
            double cur = l_gmm(g, v, 0, 0.3).value;
            CHECK(cur <= prev + 1e-9);
            prev = cur;
        }
    }
}

TEST_CASE("sigma stays above the floor after any gradient step") {
    RngStream rng(246);
    GMModel g = random_gmm(rng, 3, 4);
    GmmGrad grad = GmmGrad::zeros_like(g);
    for (auto& row : grad.d_log_sigma)
        for (auto& v : row) v = 50.0;  // huge shrink pressure
    apply_gmm_step(g, grad, 1.0, 1e-3);
    for (const auto& c : g.components)
        for (double s : c.sigma) CHECK(s >= 1e-3);
}

TEST_CASE("gmm payload round-trips byte-identically") {
    RngStream rng(864);
    GMModel g = random_gmm(rng, 5, 7);
    auto bytes = serialize_gmm(g);
    GMModel back = deserialize_gmm(bytes);
    CHECK(serialize_gmm(back) == bytes);
    REQUIRE(back.size() == g.size());
    for (int c = 0; c < g.size(); ++c) {
        CHECK(back.components[size_t(c)].mu == g.components[size_t(c)].mu);
        CHECK(back.components[size_t(c)].sigma == g.components[size_t(c)].sigma);
    }
}
