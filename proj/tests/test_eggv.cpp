#include "doctest.h"
#include "gl/eggv.hpp"
#include "gl/flsim.hpp"
#include "gl/lambda.hpp"
#include "gl/metrics.hpp"
#include "gl/ops.hpp"
#include "gl/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace gl;
using namespace gl::eggv;

namespace {

std::vector<Batch> aux_batches(std::size_t count, std::size_t B, std::size_t m, std::size_t C,
                               std::uint64_t seed) {
    Dataset d = synth_dataset(SynthKind::GaussianBlobs, m, C, count * B, seed);
    return d.batches(B);
}

}  // namespace

TEST_CASE("projection plan construction") {
    ModelSpec spec = ModelSpec::mlp({16, 32, 4});
    ParamVector layout = spec.param_layout();

    SUBCASE("rho=1 selects everything in order") {
        ProjectionPlan plan = build_projection_plan(layout, 1.0, 1);
        REQUIRE(plan.dim() == layout.size());
        for (std::size_t i = 0; i < plan.dim(); ++i) CHECK(plan.flat_indices[i] == i);
    }
    SUBCASE("a 1000-parameter segment at rho=0.004 keeps 4 positions") {
        std::vector<ParamSegment> segs{{"W0", {1000}, 0}};
        ParamVector big(segs, std::vector<double>(1000, 0.0));
        ProjectionPlan plan = build_projection_plan(big, 0.004, 2);
        CHECK(plan.per_segment[0].positions.size() == 4);
    }
    SUBCASE("small segments keep at least one position") {
        ProjectionPlan plan = build_projection_plan(layout, 0.004, 3);
        for (const auto& sp : plan.per_segment) CHECK(sp.positions.size() >= 1);
        // W0 = 512 params -> 2, b0 = 32 -> 1, W1 = 128 -> 1, b1 = 4 -> 1
        CHECK(plan.dim() == 5);
    }
    SUBCASE("positions are unique, sorted, in range") {
        ProjectionPlan plan = build_projection_plan(layout, 0.05, 4);
        for (const auto& sp : plan.per_segment) {
            std::size_t seg_count = layout.segment(sp.segment).count();
            for (std::size_t i = 0; i < sp.positions.size(); ++i) {
                CHECK(sp.positions[i] < seg_count);
                if (i) CHECK(sp.positions[i] > sp.positions[i - 1]);
            }
        }
    }
    SUBCASE("determinism contract") {
        ProjectionPlan a = build_projection_plan(layout, 0.01, 5);
        ProjectionPlan b = build_projection_plan(layout, 0.01, 5);
        CHECK(a.flat_indices == b.flat_indices);
        ProjectionPlan c = build_projection_plan(layout, 0.01, 6);
        CHECK(a.dim() == c.dim());
        CHECK(a.flat_indices != c.flat_indices);
    }
    SUBCASE("rho out of range rejected") {
        CHECK_THROWS_AS(build_projection_plan(layout, 0.0, 1), std::invalid_argument);
        CHECK_THROWS_AS(build_projection_plan(layout, 1.5, 1), std::invalid_argument);
    }
}

TEST_CASE("projection") {
    ModelSpec spec = ModelSpec::mlp({8, 6, 3});
    ParamVector layout = spec.param_layout();
    Rng rng(7);
    std::vector<double> gv(layout.size());
    for (auto& v : gv) v = rng.uniform(-1, 1);
    ParamVector g(layout.segments(), gv);

    SUBCASE("rho=1 is the identity") {
        ProjectionPlan plan = build_projection_plan(layout, 1.0, 8);
        auto gt = project(g, plan);
        REQUIRE(gt.size() == g.size());
        for (std::size_t i = 0; i < gt.size(); ++i) CHECK(gt[i] == g.values()[i]);
    }
    SUBCASE("zero gradient projects to zeros") {
        ProjectionPlan plan = build_projection_plan(layout, 0.1, 9);
        auto gt = project(ParamVector::zeros_like(layout), plan);
        for (double v : gt) CHECK(v == 0.0);
    }
    SUBCASE("entries come from the plan's indices, walked independently") {
        ProjectionPlan plan = build_projection_plan(layout, 0.2, 10);
        auto gt = project(g, plan);
        std::size_t j = 0;
        for (const auto& sp : plan.per_segment) {
            std::size_t off = layout.segment(sp.segment).offset;
            for (std::size_t p : sp.positions) {
                CHECK(gt[j] == g.values()[off + p]);
                ++j;
            }
        }
        CHECK(j == gt.size());
    }
    SUBCASE("projection is linear") {
        ProjectionPlan plan = build_projection_plan(layout, 0.15, 11);
        std::vector<double> hv(layout.size());
        for (auto& v : hv) v = rng.uniform(-1, 1);
        ParamVector h(layout.segments(), hv);
        ParamVector combo = g.axpy(0.0, g);  // copy
        auto cv = combo.values();
        for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = 2.5 * gv[i] - 0.5 * hv[i];
        auto left = project(combo, plan);
        auto pg = project(g, plan), ph = project(h, plan);
        for (std::size_t i = 0; i < left.size(); ++i)
            CHECK(left[i] == 2.5 * pg[i] - 0.5 * ph[i]);
    }
    SUBCASE("length mismatch rejected") {
        ProjectionPlan plan = build_projection_plan(layout, 0.1, 12);
        std::vector<ParamSegment> other{{"w", {4}, 0}};
        ParamVector wrong(other, {1, 2, 3, 4});
        CHECK_THROWS_AS(project(wrong, plan), std::invalid_argument);
    }
}

TEST_CASE("decoder") {
    Decoder d = make_decoder(3, 4, 0, 13);
    std::vector<double> g{0.5, -1.0, 2.0};
    auto out = decode(d, g);
    REQUIRE(out.size() == 4);
    // Raw and recorded paths agree.
    ad::Tape t;
    BoundParams bphi = bind(t, d.phi);
    std::vector<ad::NodeId> gn;
    for (double v : g) gn.push_back(t.constant(v));
    auto outn = decode_nodes(t, d, bphi, gn);
    for (std::size_t i = 0; i < 4; ++i) CHECK(t.val(outn[i]) == doctest::Approx(out[i]).epsilon(1e-15));

    Decoder dh = make_decoder(3, 4, 8, 14);
    auto out_h = decode(dh, g);
    REQUIRE(out_h.size() == 4);
}

TEST_CASE("poison_model trivial modes") {
    ModelSpec spec = ModelSpec::mlp({8, 6, 3});
    ParamVector theta0 = init_params(spec, InitScheme::Xavier, 15);
    auto aux = aux_batches(4, 2, 8, 3, 16);

    SUBCASE("zero step sizes freeze theta and flatten the curve") {
        PoisonConfig pc;
        pc.iterations = 12;
        pc.alpha_theta = 0.0;
        pc.alpha_phi = 0.0;
        pc.rho = 0.05;
        pc.seed = 17;
        pc.epsilon = 0.0;
        PoisonRun run = poison_model(spec, theta0, aux, pc);
        for (std::size_t i = 0; i < theta0.size(); ++i)
            CHECK(run.theta_star.values()[i] == theta0.values()[i]);
        // Same batch -> same loss whenever the cycle revisits it.
        CHECK(run.loss_curve.at(0) == doctest::Approx(run.loss_curve.at(4)).epsilon(1e-15));
    }
    SUBCASE("zero iterations return the initial state with one evaluation") {
        PoisonConfig pc;
        pc.iterations = 0;
        pc.rho = 0.05;
        pc.seed = 18;
        PoisonRun run = poison_model(spec, theta0, aux, pc);
        CHECK(run.loss_curve.size() == 1);
        CHECK(run.final_moving_avg == doctest::Approx(run.initial_loss));
        for (std::size_t i = 0; i < theta0.size(); ++i)
            CHECK(run.theta_star.values()[i] == theta0.values()[i]);
    }
    SUBCASE("mixed batch sizes rejected") {
        std::vector<Batch> bad = aux;
        bad.push_back(bad[0].single(0));
        PoisonConfig pc;
        pc.rho = 0.05;
        CHECK_THROWS_AS(poison_model(spec, theta0, bad, pc), std::invalid_argument);
    }
}

TEST_CASE("short poisoning run lowers the decoder loss") {
    ModelSpec spec = ModelSpec::mlp({8, 12, 3});
    ParamVector theta0 = init_params(spec, InitScheme::Xavier, 19);
    auto aux = aux_batches(8, 2, 8, 3, 20);

    PoisonConfig pc;
    pc.iterations = 400;
    pc.rho = 0.02;
    pc.seed = 21;
    pc.epsilon = 1e-9;
    PoisonRun run = poison_model(spec, theta0, aux, pc);
    CHECK_FALSE(run.aborted);
    CHECK(run.final_moving_avg < run.initial_loss);

    SUBCASE("vulnerability score at theta* sits below theta0's") {
        double at_star = vulnerability_score(spec, run.theta_star, run.decoder, run.plan, aux[0]);
        double at_init = vulnerability_score(spec, theta0, run.decoder, run.plan, aux[0]);
        CHECK(at_star < at_init);
    }

    SUBCASE("gradient flows through unselected positions too") {
        // The theta gradient of L is generically nonzero off the plan:
        // selection happens on the gradient, not on the parameters.
        ad::Tape tape;
        BoundParams btheta = bind(tape, run.theta_star);
        Tensor ll = batch_loss(spec, btheta, aux[0]);
        auto g = tape.gradient(ll.node(), btheta.nodes);
        auto gt = project_nodes(g, run.plan);
        BoundParams bphi = bind(tape, run.decoder.phi);
        auto xhat = decode_nodes(tape, run.decoder, bphi, gt);
        auto x_flat = aux[0].flat_x();
        ad::NodeId L = ad::nodes_sq_l2_diff(tape, xhat, x_flat);
        auto dtheta = tape.gradient(L, btheta.nodes);

        std::vector<bool> selected(run.theta_star.size(), false);
        for (std::size_t i : run.plan.flat_indices) selected[i] = true;
        double off_plan = 0;
        for (std::size_t i = 0; i < selected.size(); ++i)
            if (!selected[i]) off_plan = std::max(off_plan, std::abs(tape.val(dtheta[i])));
        CHECK(off_plan > 0.0);
    }

    SUBCASE("poison run round-trips through the run directory") {
        auto dir = std::filesystem::temp_directory_path() / "gl_poison_rt";
        std::filesystem::remove_all(dir);
        save_poison_run(dir, run);
        PoisonRun back = load_poison_run(dir, spec);
        CHECK(back.plan.flat_indices == run.plan.flat_indices);
        for (std::size_t i = 0; i < run.theta_star.size(); ++i)
            CHECK(back.theta_star.values()[i] == run.theta_star.values()[i]);
        for (std::size_t i = 0; i < run.decoder.phi.size(); ++i)
            CHECK(back.decoder.phi.values()[i] == run.decoder.phi.values()[i]);
        double s1 = vulnerability_score(spec, run.theta_star, run.decoder, run.plan, aux[1]);
        double s2 = vulnerability_score(spec, back.theta_star, back.decoder, back.plan, aux[1]);
        CHECK(s1 == s2);
    }
}

TEST_CASE("vulnerability score is the recorded training loss") {
    // With a single auxiliary batch and one iteration, the first loss-curve
    // entry is exactly the score of the initial (theta0, phi0) pair.
    ModelSpec spec = ModelSpec::mlp({8, 6, 3});
    ParamVector theta0 = init_params(spec, InitScheme::Xavier, 88);
    std::vector<Batch> aux{aux_batches(2, 2, 8, 3, 89).front()};
    PoisonConfig pc;
    pc.iterations = 1;
    pc.rho = 0.05;
    pc.seed = 90;
    PoisonRun run = poison_model(spec, theta0, aux, pc);
    REQUIRE(run.loss_curve.size() == 1);

    ProjectionPlan plan = build_projection_plan(theta0, pc.rho, gl::Rng::derive(pc.seed, "plan"));
    Decoder dec0 = make_decoder(plan.dim(), 2 * 8, 0, gl::Rng::derive(pc.seed, "decoder"));
    double score = vulnerability_score(spec, theta0, dec0, plan, aux[0]);
    CHECK(score == run.loss_curve[0]);
}

TEST_CASE("landscape grid") {
    ModelSpec spec = ModelSpec::mlp({8, 6, 3});
    ParamVector theta0 = init_params(spec, InitScheme::Xavier, 22);
    auto aux = aux_batches(4, 2, 8, 3, 23);
    PoisonConfig pc;
    pc.iterations = 60;
    pc.rho = 0.05;
    pc.seed = 24;
    PoisonRun run = poison_model(spec, theta0, aux, pc);

    Dataset acc_data = synth_dataset(SynthKind::GaussianBlobs, 8, 3, 24, 25);
    LandscapeGrid grid = landscape_grid(spec, run.theta_star, run.decoder, run.plan, aux[0],
                                        0.5, 5, 26, &acc_data);
    CHECK(grid.scores.size() == 25);
    CHECK(grid.accuracy.size() == 25);
    CHECK(grid.coords[2] == 0.0);

    double center = vulnerability_score(spec, run.theta_star, run.decoder, run.plan, aux[0]);
    CHECK(grid.scores[2 * 5 + 2] == center);  // exact: the center cell is theta* itself

    SUBCASE("csv emission matches the cell count") {
        auto path = std::filesystem::temp_directory_path() / "gl_grid.csv";
        write_landscape_csv(path, grid);
        std::ifstream in(path);
        std::string line;
        std::size_t rows = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 26);  // header + 25 cells
    }
    SUBCASE("steps below 2 rejected") {
        CHECK_THROWS_AS(landscape_grid(spec, run.theta_star, run.decoder, run.plan, aux[0],
                                       0.5, 1, 26, nullptr),
                        std::invalid_argument);
    }
}

TEST_CASE("fishing baseline poison") {
    ModelSpec spec = ModelSpec::mlp({8, 16, 4});
    ParamVector theta = init_params(spec, InitScheme::Random, 27);

    SUBCASE("invalid class rejected") {
        CHECK_THROWS_AS(fishing_baseline_poison(spec, theta, 7), std::invalid_argument);
        CHECK_THROWS_AS(fishing_baseline_poison(spec, theta, -1), std::invalid_argument);
    }

    ParamVector poisoned = fishing_baseline_poison(spec, theta, 2);

    SUBCASE("final layer holds the 0/1 pattern and saturating biases") {
        auto w = poisoned.segment_values("W1");
        auto b = poisoned.segment_values("b1");
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t k = 0; k < 4; ++k) {
                double v = w[i * 4 + k];
                if (k == 2)
                    CHECK(v == ((i % 2 == 0) ? 1.0 : 0.0));
                else
                    CHECK(v == 0.0);
            }
        for (std::size_t k = 0; k < 4; ++k) CHECK(b[k] == (k == 2 ? 0.0 : 50.0));
    }

    SUBCASE("a batch without the target class leaves hidden layers dark") {
        Rng rng(28);
        auto make = [&](std::vector<int> y) {
            std::vector<double> x(y.size() * 8);
            for (auto& v : x) v = rng.uniform();
            return Batch{Tensor({y.size(), 8}, std::move(x)), std::move(y)};
        };
        Batch with_target = make({0, 2, 1, 3});
        Batch without = make({0, 1, 1, 3});

        auto g_with = fl::client_gradient(spec, poisoned, with_target, false).batch_grad;
        auto g_without = fl::client_gradient(spec, poisoned, without, false).batch_grad;
        auto norm_of = [](std::span<const double> v) {
            double s = 0;
            for (double x : v) s += x * x;
            return std::sqrt(s);
        };
        double dark = norm_of(g_without.segment_values("W0"));
        double lit = norm_of(g_with.segment_values("W0"));
        CHECK(dark < 1e-9);
        CHECK(lit > 1e-3);

        // And the lambda row for the target class is flagged invalid.
        LambdaMatrix lm = compute_lambda(spec, poisoned, without);
        CHECK_FALSE(lm.row_valid[2]);
    }

    SUBCASE("d-snr explodes against a single-target batch") {
        Rng rng(29);
        std::vector<double> x(4 * 8);
        for (auto& v : x) v = rng.uniform();
        Batch b{Tensor({4, 8}, std::move(x)), {1, 0, 2, 3}};
        auto cap_fish = fl::client_gradient(spec, poisoned, b, true);
        auto cap_rand = fl::client_gradient(spec, theta, b, true);
        double fish = metrics::d_snr(*cap_fish.per_sample).value;
        double rand = metrics::d_snr(*cap_rand.per_sample).value;
        CHECK(fish > 10.0 * rand);
    }
}
