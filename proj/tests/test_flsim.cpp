#include "doctest.h"
#include "gl/flsim.hpp"
#include "gl/ops.hpp"
#include "gl/rng.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

using namespace gl;

namespace {

ModelSpec linear_head(std::size_t m, std::size_t C) {
    ModelSpec spec;
    spec.layer_dims = {m, C};
    spec.activations = {};
    spec.has_bias = {true};
    return spec;
}

Batch random_batch(std::size_t B, std::size_t m, std::size_t C, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(B * m);
    for (auto& v : x) v = rng.uniform();
    std::vector<int> y(B);
    for (auto& v : y) v = static_cast<int>(rng.below(C));
    return Batch{Tensor({B, m}, std::move(x)), std::move(y)};
}

}  // namespace

TEST_CASE("zero-parameter linear model: residual structure of the gradient") {
    ModelSpec spec = linear_head(3, 4);
    ParamVector theta = spec.param_layout();  // zeros
    Batch batch = random_batch(2, 3, 4, 9);
    fl::GradientCapture cap = fl::client_gradient(spec, theta, batch, false);

    // Bias gradient sums to zero across classes: softmax residuals cancel.
    auto gb = cap.batch_grad.segment_values("b0");
    double s = 0;
    for (double v : gb) s += v;
    CHECK(std::abs(s) < 1e-12);

    // Weight gradient equals x^T (p - onehot) / B with uniform p.
    auto gw = cap.batch_grad.segment_values("W0");
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t k = 0; k < 4; ++k) {
            double want = 0;
            for (std::size_t i = 0; i < 2; ++i) {
                double resid = 0.25 - (static_cast<std::size_t>(batch.y[i]) == k ? 1.0 : 0.0);
                want += batch.x.at(i, d) * resid;
            }
            want /= 2.0;
            CHECK(gw[d * 4 + k] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
    ModelSpec spec = ModelSpec::mlp({4, 5, 3});
    ParamVector theta = init_params(spec, InitScheme::Xavier, 11);
    Batch batch = random_batch(2, 4, 3, 12);

    std::vector<double> xx = batch.flat_x();
    xx.insert(xx.end(), xx.begin(), xx.end());
    std::vector<int> yy = batch.y;
    yy.insert(yy.end(), batch.y.begin(), batch.y.end());
    Batch doubled{Tensor({4, 4}, std::move(xx)), std::move(yy)};

    auto g1 = fl::client_gradient(spec, theta, batch, false).batch_grad;
    auto g2 = fl::client_gradient(spec, theta, doubled, false).batch_grad;
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g1.values()[i] == doctest::Approx(g2.values()[i]).epsilon(1e-12));
}

TEST_CASE("linear head gradient matches the analytic residual formula") {
    ModelSpec spec = linear_head(5, 3);
    ParamVector theta = init_params(spec, InitScheme::Xavier, 21);
    Batch batch = random_batch(2, 5, 3, 22);
    fl::GradientCapture cap = fl::client_gradient(spec, theta, batch, false);

    Tensor logits = forward(spec, theta, batch.x);
    auto p = softmax_probs(logits);
    auto gw = cap.batch_grad.segment_values("W0");
    for (std::size_t d = 0; d < 5; ++d)
        for (std::size_t k = 0; k < 3; ++k) {
            double want = 0;
            for (std::size_t i = 0; i < 2; ++i) {
                double resid =
                    p[i * 3 + k] - (static_cast<std::size_t>(batch.y[i]) == k ? 1.0 : 0.0);
                want += batch.x.at(i, d) * resid;
            }
            want /= 2.0;
            CHECK(std::abs(gw[d * 3 + k] - want) < 1e-10);
        }
}

TEST_CASE("per-sample capture mean equals the batch gradient") {
    ModelSpec spec = ModelSpec::mlp({4, 6, 3});
    ParamVector theta = init_params(spec, InitScheme::He, 31);
    Batch batch = random_batch(4, 4, 3, 32);
    fl::GradientCapture cap = fl::client_gradient(spec, theta, batch, true);
    REQUIRE(cap.per_sample.has_value());
    REQUIRE(cap.per_sample->size() == 4);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double m = 0;
        for (const auto& g : *cap.per_sample) m += g.values()[i];
        m /= 4.0;
        CHECK(std::abs(m - cap.batch_grad.values()[i]) < 1e-9);
    }
}

TEST_CASE("aggregate") {
    ModelSpec spec = linear_head(3, 2);
    ParamVector theta = init_params(spec, InitScheme::Xavier, 41);

    SUBCASE("single client passes through") {
        Batch b = random_batch(2, 3, 2, 42);
        auto cap = fl::client_gradient(spec, theta, b, false);
        ParamVector agg = fl::aggregate({cap}, {8});
        for (std::size_t i = 0; i < agg.size(); ++i)
            CHECK(agg.values()[i] == cap.batch_grad.values()[i]);
    }

    SUBCASE("sizes 1 and 3 with a zero gradient give g/4") {
        Batch b = random_batch(2, 3, 2, 43);
        auto cap = fl::client_gradient(spec, theta, b, false);
        fl::GradientCapture zero = cap;
        ParamVector z = ParamVector::zeros_like(cap.batch_grad);
        zero.batch_grad = z;
        ParamVector agg = fl::aggregate({cap, zero}, {1, 3});
        for (std::size_t i = 0; i < agg.size(); ++i)
            CHECK(agg.values()[i] == doctest::Approx(cap.batch_grad.values()[i] / 4.0).epsilon(1e-15));
    }

    SUBCASE("three random clients match the direct weighted sum") {
        std::vector<fl::GradientCapture> caps;
        std::vector<std::size_t> sizes{2, 5, 3};
        for (int c = 0; c < 3; ++c)
            caps.push_back(fl::client_gradient(spec, theta,
                                               random_batch(2, 3, 2, 50 + static_cast<std::uint64_t>(c)),
                                               false));
        ParamVector agg = fl::aggregate(caps, sizes);
        for (std::size_t i = 0; i < agg.size(); ++i) {
            double want = (2.0 * caps[0].batch_grad.values()[i] +
                           5.0 * caps[1].batch_grad.values()[i] +
                           3.0 * caps[2].batch_grad.values()[i]) /
                          10.0;
            CHECK(std::abs(agg.values()[i] - want) < 1e-15);
        }
    }

    SUBCASE("identical gradients aggregate to themselves") {
        Batch b = random_batch(2, 3, 2, 44);
        auto cap = fl::client_gradient(spec, theta, b, false);
        ParamVector agg = fl::aggregate({cap, cap, cap}, {1, 2, 3});
        for (std::size_t i = 0; i < agg.size(); ++i)
            CHECK(agg.values()[i] == doctest::Approx(cap.batch_grad.values()[i]).epsilon(1e-15));
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(fl::aggregate({}, {}), std::invalid_argument);
        Batch b = random_batch(2, 3, 2, 45);
        auto cap = fl::client_gradient(spec, theta, b, false);
        CHECK_THROWS_AS(fl::aggregate({cap}, {1, 2}), std::invalid_argument);
    }
}

TEST_CASE("sgd_step") {
    std::vector<ParamSegment> segs{{"w", {3}, 0}};
    ParamVector p(segs, {1.0, -2.0, 0.5});
    ParamVector u(segs, {0.1, 0.2, -0.3});

    SUBCASE("eta zero keeps parameters") {
        ParamVector out = fl::sgd_step(p, u, 0.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(out.values()[i] == p.values()[i]);
    }
    SUBCASE("stepping by itself with eta one zeroes") {
        ParamVector out = fl::sgd_step(p, p, 1.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(out.values()[i] == 0.0);
    }
    SUBCASE("elementwise arithmetic") {
        ParamVector out = fl::sgd_step(p, u, 0.5);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(out.values()[i] == doctest::Approx(p.values()[i] - 0.5 * u.values()[i]));
    }
    SUBCASE("length mismatch rejected") {
        std::vector<ParamSegment> s2{{"w", {2}, 0}};
        ParamVector short_u(s2, {0.1, 0.2});
        CHECK_THROWS_AS(fl::sgd_step(p, short_u, 0.1), std::invalid_argument);
    }
}

TEST_CASE("one client, one batch reproduces plain sgd") {
    ModelSpec spec = ModelSpec::mlp({4, 5, 3});
    ParamVector theta = init_params(spec, InitScheme::Xavier, 61);
    Batch b = random_batch(2, 4, 3, 62);
    auto cap = fl::client_gradient(spec, theta, b, false);
    ParamVector agg = fl::aggregate({cap}, {2});
    ParamVector next = fl::sgd_step(theta, agg, 0.1);

    ad::Tape t;
    BoundParams bp = bind(t, theta);
    auto g = grad(batch_loss(spec, bp, b), bp).values;
    for (std::size_t i = 0; i < theta.size(); ++i)
        CHECK(next.values()[i] ==
              doctest::Approx(theta.values()[i] - 0.1 * g.values()[i]).epsilon(1e-15));
}

TEST_CASE("capture round-trips through the run directory format") {
    ModelSpec spec = ModelSpec::mlp({4, 5, 3});
    ParamVector theta = init_params(spec, InitScheme::Xavier, 71);
    Batch b = random_batch(3, 4, 3, 72);
    fl::GradientCapture cap = fl::client_gradient(spec, theta, b, true, 2, 1);

    auto prefix = std::filesystem::temp_directory_path() / "gl_cap_test";
    fl::save_capture(prefix, cap);
    fl::GradientCapture back = fl::load_capture(prefix, spec.param_layout());
    CHECK(back.round == 2);
    CHECK(back.client_id == 1);
    CHECK(back.batch_size == 3);
    CHECK(back.labels == cap.labels);
    for (std::size_t i = 0; i < theta.size(); ++i)
        CHECK(back.batch_grad.values()[i] == cap.batch_grad.values()[i]);
    REQUIRE(back.per_sample.has_value());
    REQUIRE(back.per_sample->size() == 3);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t i = 0; i < theta.size(); ++i)
            CHECK((*back.per_sample)[s].values()[i] == (*cap.per_sample)[s].values()[i]);
}
