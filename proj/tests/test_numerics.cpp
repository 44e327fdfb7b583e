#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "fedgcd/numerics.hpp"

using namespace fedgcd;

TEST_CASE("cosine similarity basic values") {
    CHECK(cosine_similarity(Vector{1, 0}, Vector{1, 0}) == doctest::Approx(1.0));
    CHECK(cosine_similarity(Vector{1, 0}, Vector{0, 1}) == doctest::Approx(0.0));
    // Hand arithmetic: a.b / (|a||b|) = 32 / (sqrt(14) sqrt(77)).
    double expected = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
    CHECK(cosine_similarity(Vector{1, 2, 3}, Vector{4, 5, 6}) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.974631846).epsilon(1e-6));
}

TEST_CASE("cosine similarity rejects zero-norm input") {
    CHECK_THROWS_AS(cosine_similarity(Vector{0, 0}, Vector{1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_similarity(Vector{1, 0}, Vector{0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_similarity(Vector{1, 0}, Vector{1, 0, 0}), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and independent") {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(42, 8);
    bool all_equal = true;
    RngStream a2(42, 7);
    for (int i = 0; i < 16; ++i) all_equal &= (a2.next_u64() == c.next_u64());
    CHECK_FALSE(all_equal);

    RngStream s1 = RngStream(7).substream(3).substream(9);
    RngStream s2 = RngStream(7).substream(3).substream(9);
    CHECK(s1.normal() == s2.normal());
}

TEST_CASE("sample_gaussian contracts") {
    RngStream rng(5);
    Vector mu{1.5, -2.0, 0.25};

    SUBCASE("zero sigma returns mu exactly") {
        Vector out = sample_gaussian(mu, Vector{0, 0, 0}, rng);
        CHECK(out == mu);
    }
    SUBCASE("negative sigma rejected") {
        CHECK_THROWS_AS(sample_gaussian(mu, Vector{1, -1, 1}, rng), std::invalid_argument);
    }
    SUBCASE("deterministic under identical fresh streams") {
        RngStream r1(99, 3), r2(99, 3);
        CHECK(sample_gaussian(mu, Vector{1, 2, 3}, r1) == sample_gaussian(mu, Vector{1, 2, 3}, r2));
    }
    SUBCASE("moments over 10000 draws") {
        RngStream r(2024);
        const int n = 10000;
        double sum = 0.0, sumsq = 0.0;
        Vector zero{0.0}, one{1.0};
        for (int i = 0; i < n; ++i) {
            double x = sample_gaussian(zero, one, r)[0];
            sum += x;
            sumsq += x * x;
        }
        double mean = sum / n;
        double var = sumsq / n - mean * mean;
        CHECK(std::fabs(mean) < 0.05);
        CHECK(std::fabs(var - 1.0) < 0.1);
    }
}

TEST_CASE("sample_dirichlet contracts") {
    SUBCASE("k=1 gives the trivial simplex") {
        RngStream rng(1);
        Vector v = sample_dirichlet(2.0, 1, rng);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("always on the simplex") {
        RngStream rng(17);
        for (double beta : {0.05, 0.3, 1.0, 50.0}) {
            for (int rep = 0; rep < 50; ++rep) {
                Vector v = sample_dirichlet(beta, 7, rng);
                double total = 0.0;
                for (double x : v) {
                    CHECK(x >= 0.0);
                    total += x;
                }
                CHECK(std::fabs(total - 1.0) < 1e-12);
            }
        }
    }
    SUBCASE("large beta concentrates near uniform") {
        RngStream rng(3);
        Vector mean(5, 0.0);
        const int draws = 1000;
        for (int i = 0; i < draws; ++i) {
            Vector v = sample_dirichlet(1000.0, 5, rng);
            for (int k = 0; k < 5; ++k) mean[size_t(k)] += v[size_t(k)] / draws;
        }
        for (double m : mean) CHECK(std::fabs(m - 0.2) < 0.02);
    }
    SUBCASE("small beta concentrates on a vertex") {
        RngStream rng(4);
        double max_sum = 0.0;
        const int draws = 1000;
        for (int i = 0; i < draws; ++i) {
            Vector v = sample_dirichlet(0.05, 5, rng);
            max_sum += *std::max_element(v.begin(), v.end());
        }
        CHECK(max_sum / draws > 0.8);
    }
    SUBCASE("invalid arguments") {
        RngStream rng(1);
        CHECK_THROWS_AS(sample_dirichlet(0.0, 5, rng), std::invalid_argument);
        CHECK_THROWS_AS(sample_dirichlet(-1.0, 5, rng), std::invalid_argument);
        CHECK_THROWS_AS(sample_dirichlet(1.0, 0, rng), std::invalid_argument);
    }
}

TEST_CASE("check_gradient validates and flags") {
    auto f = [](const Vector& x) { return dot(x, x); };
    auto grad = [](const Vector& x) {
        Vector g(x.size());
        for (size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
        return g;
    };
    Vector x{1, 2, 3};
    CHECK(check_gradient(f, grad, x, 1e-5) < 1e-7);

    auto wrong = [](const Vector& x) {
        Vector g(x.size());
        for (size_t i = 0; i < x.size(); ++i) g[i] = 4.0 * x[i];
        return g;
    };
    CHECK(check_gradient(f, wrong, x, 1e-5) == doctest::Approx(0.5).epsilon(1e-3));

    auto bad_f = [](const Vector&) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(check_gradient(bad_f, grad, x, 1e-5), std::runtime_error);
}
