#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "fedgcd/model.hpp"
#include "fedgcd/numerics.hpp"

using namespace fedgcd;

namespace {

Batch make_batch(RngStream& rng, int n, int dim, const std::vector<int>& labels) {
    Batch b;
    b.labels = labels;
    for (int i = 0; i < n; ++i) {
        b.indices.push_back(size_t(i));
        Vector a(static_cast<size_t>(dim), 0.0), v(static_cast<size_t>(dim), 0.0);
        for (int k = 0; k < dim; ++k) {
            a[size_t(k)] = rng.normal();
            v[size_t(k)] = a[size_t(k)] + 0.1 * rng.normal();
        }
        b.view_a.push_back(std::move(a));
        b.view_b.push_back(std::move(v));
    }
    return b;
}

}  // namespace

TEST_CASE("forward honors degenerate and identity configurations") {
    SUBCASE("zero weights give the zero representation") {
        EncoderArch arch{3, 4, 3, 2};
        EncoderWeights w = EncoderWeights::zeros(arch);
        auto [v, zn] = forward(w, Vector{1.0, -2.0, 0.5});
        CHECK(v == Vector{0.0, 0.0, 0.0});
        CHECK(zn == Vector{0.0, 0.0});
    }
    SUBCASE("identity single layer passes input through") {
        EncoderArch arch{3, 0, 3, 2};
        EncoderWeights w = EncoderWeights::zeros(arch);
        for (int i = 0; i < 3; ++i) w.w2[size_t(i * 3 + i)] = 1.0;
        w.w3[0] = 1.0;
        Vector x{0.3, -1.7, 2.2};
        auto [v, zn] = forward(w, x);
        CHECK(v == x);
    }
    SUBCASE("dimension mismatch is rejected") {
        EncoderArch arch{3, 4, 3, 2};
        RngStream rng(1);
        EncoderWeights w = init_encoder(arch, rng);
        CHECK_THROWS_AS(forward(w, Vector{1.0, 2.0}), std::invalid_argument);
    }
}

TEST_CASE("projections are unit-norm for random inputs") {
    EncoderArch arch{6, 8, 5, 7};
    RngStream rng(33);
    EncoderWeights w = init_encoder(arch, rng);
    for (int rep = 0; rep < 20; ++rep) {
        Vector x(6);
        for (auto& v : x) v = 2.0 * rng.normal();
        auto [repv, zn] = forward(w, x);
        CHECK(norm(zn) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("instance loss closed form for a symmetric batch of two") {
    // Both views of each example identical; p0 . p1 = 0.5, tau = 1.
    double c = 0.5, tau = 1.0;
    Vector p0{1.0, 0.0, 0.0};
    Vector p1{c, std::sqrt(1.0 - c * c), 0.0};
    std::vector<Vector> proj{p0, p1, p0, p1};
    InstanceLossParams params;
    params.lambda = 0.0;
    params.tau_s = tau;

    // Every anchor sees positive logit 1/tau and denominator
    // 2 exp(c/tau) + exp(1/tau); derived by direct expansion.
    double expected = -1.0 / tau + std::log(2.0 * std::exp(c / tau) + std::exp(1.0 / tau));
    ProjectionLoss loss = instance_loss_on_projections(proj, {-1, -1}, params);
    CHECK(loss.value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("supervised term is zero without labeled examples") {
    RngStream rng(8);
    Batch batch = make_batch(rng, 3, 4, {-1, -1, -1});
    EncoderArch arch{4, 5, 4, 3};
    EncoderWeights w = init_encoder(arch, rng);
    InstanceLossParams params;
    params.lambda = 1.0;  // kills the self-supervised share as well
    InstanceLossResult res = instance_loss(w, batch, params);
    CHECK(res.value == 0.0);
}

TEST_CASE("labeled anchor with no positive joins only the self-supervised term") {
    RngStream rng(9);
    Batch batch = make_batch(rng, 3, 4, {2, -1, -1});
    EncoderArch arch{4, 5, 4, 3};
    EncoderWeights w = init_encoder(arch, rng);
    InstanceLossParams lam0, lam35;
    lam0.lambda = 0.0;
    lam35.lambda = 0.35;
    double a = instance_loss(w, batch, lam0).value;
    double b = instance_loss(w, batch, lam35).value;
    // Supervised share contributes nothing: loss scales by (1 - lambda).
    CHECK(b == doctest::Approx(a * (1.0 - 0.35) / 1.0).epsilon(1e-12));
}

TEST_CASE("instance loss is invariant under batch permutation and global rotation") {
    RngStream rng(13);
    Batch batch = make_batch(rng, 4, 3, {0, 1, 0, -1});
    EncoderArch arch{3, 4, 3, 3};
    EncoderWeights w = init_encoder(arch, rng);
    InstanceLossParams params;
    double base = instance_loss(w, batch, params).value;

    SUBCASE("permutation of examples") {
        Batch perm;
        std::vector<size_t> order{2, 0, 3, 1};
        for (size_t i : order) {
            perm.indices.push_back(batch.indices[i]);
            perm.labels.push_back(batch.labels[i]);
            perm.view_a.push_back(batch.view_a[i]);
            perm.view_b.push_back(batch.view_b[i]);
        }
        CHECK(instance_loss(w, perm, params).value == doctest::Approx(base).epsilon(1e-12));
    }
    SUBCASE("rotation of projections") {
        // Rotate in the first two projection coordinates; inner products of
        // unit projections are preserved exactly.
        std::vector<Vector> proj;
        for (const auto& x : batch.view_a) proj.push_back(forward(w, x).second);
        for (const auto& x : batch.view_b) proj.push_back(forward(w, x).second);
        ProjectionLoss direct = instance_loss_on_projections(proj, batch.labels, params);
        double theta = 0.83;
        for (auto& p : proj) {
            double a = p[0], b = p[1];
            p[0] = std::cos(theta) * a - std::sin(theta) * b;
            p[1] = std::sin(theta) * a + std::cos(theta) * b;
        }
        ProjectionLoss rotated = instance_loss_on_projections(proj, batch.labels, params);
        CHECK(rotated.value == doctest::Approx(direct.value).epsilon(1e-9));
    }
}

TEST_CASE("instance loss gradient matches finite differences") {
    RngStream rng(21);
    for (int rep = 0; rep < 5; ++rep) {
        EncoderArch arch{3, 3, 3, 3};
        EncoderWeights w = init_encoder(arch, rng);
        std::vector<int> labels = {0, 1, 0, -1};
        Batch batch = make_batch(rng, 4, 3, labels);
        InstanceLossParams params;

        Vector x0 = encoder_to_params(w);
        auto f = [&](const Vector& x) {
            return instance_loss(encoder_from_params(arch, x), batch, params).value;
        };
        auto grad = [&](const Vector& x) {
            return encoder_to_params(instance_loss(encoder_from_params(arch, x), batch, params).grad);
        };
        CHECK(check_gradient(f, grad, x0) < 1e-4);
    }
}

TEST_CASE("weights container round-trips byte-identically") {
    RngStream rng(55);
    EncoderArch arch{5, 6, 4, 3};
    EncoderWeights w = init_encoder(arch, rng);
    auto bytes = serialize_weights(w);
    EncoderWeights back = deserialize_weights(bytes);
    CHECK(serialize_weights(back) == bytes);
    CHECK(back.arch == arch);
    CHECK(encoder_to_params(back) == encoder_to_params(w));

    EncoderArch affine_arch{5, 0, 4, 3};
    EncoderWeights affine = init_encoder(affine_arch, rng);
    CHECK(encoder_to_params(deserialize_weights(serialize_weights(affine))) ==
          encoder_to_params(affine));
}
