#include "doctest.h"
#include "gl/tape.hpp"

#include <cmath>
#include <vector>

using gl::ad::NodeId;
using gl::ad::Tape;

TEST_CASE("tape evaluates forward values eagerly") {
    Tape t;
    NodeId x = t.leaf(3.0);
    NodeId y = t.leaf(4.0);
    NodeId z = t.add(t.mul(x, x), t.mul(y, y));
    CHECK(t.val(z) == doctest::Approx(25.0));
    CHECK(t.val(t.sqrt(z)) == doctest::Approx(5.0));
}

TEST_CASE("first-order gradients of each primitive") {
    Tape t;
    NodeId x = t.leaf(0.7);
    NodeId y = t.leaf(-1.3);

    NodeId f = t.add(t.mul(t.exp(x), t.tanh(y)), t.div(x, t.abs(y)));
    std::vector<NodeId> wrt{x, y};
    auto g = t.gradient(f, wrt);

    double ex = std::exp(0.7), th = std::tanh(-1.3);
    CHECK(t.val(g[0]) == doctest::Approx(ex * th + 1.0 / 1.3).epsilon(1e-12));
    CHECK(t.val(g[1]) ==
          doctest::Approx(ex * (1.0 - th * th) + 0.7 / (1.3 * 1.3)).epsilon(1e-12));
}

TEST_CASE("gradient of a gradient (second derivatives by re-sweeping)") {
    // f = x^3 -> f' = 3x^2 -> f'' = 6x
    Tape t;
    NodeId x = t.leaf(1.7);
    NodeId f = t.mul(t.mul(x, x), x);
    std::vector<NodeId> wrt{x};
    auto g1 = t.gradient(f, wrt);
    CHECK(t.val(g1[0]) == doctest::Approx(3 * 1.7 * 1.7).epsilon(1e-12));
    auto g2 = t.gradient(g1[0], wrt);
    CHECK(t.val(g2[0]) == doctest::Approx(6 * 1.7).epsilon(1e-12));
    auto g3 = t.gradient(g2[0], wrt);
    CHECK(t.val(g3[0]) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("detached leaves get zero gradients") {
    Tape t;
    NodeId x = t.leaf(2.0);
    NodeId unused = t.leaf(5.0);
    NodeId f = t.mul(x, x);
    std::vector<NodeId> wrt{x, unused};
    auto g = t.gradient(f, wrt);
    CHECK(t.val(g[0]) == doctest::Approx(4.0));
    CHECK(t.val(g[1]) == 0.0);
}

TEST_CASE("relu and abs propagate masks, not values") {
    Tape t;
    NodeId x = t.leaf(-0.5);
    NodeId y = t.leaf(2.0);
    NodeId f = t.add(t.relu(x), t.abs(t.mul(x, y)));  // relu(-0.5)=0, |x*y|=1
    std::vector<NodeId> wrt{x, y};
    auto g = t.gradient(f, wrt);
    CHECK(t.val(f) == doctest::Approx(1.0));
    CHECK(t.val(g[0]) == doctest::Approx(-2.0));  // d|xy|/dx = sign(xy)*y = -1*2... sign=-1 -> -y
    CHECK(t.val(g[1]) == doctest::Approx(0.5));
}

TEST_CASE("node helper reductions") {
    Tape t;
    std::vector<NodeId> a{t.leaf(1.0), t.leaf(2.0), t.leaf(3.0)};
    std::vector<double> b{4.0, 5.0, 6.0};
    CHECK(t.val(gl::ad::nodes_sum(t, a)) == doctest::Approx(6.0));
    CHECK(t.val(gl::ad::nodes_dot_const(t, a, b)) == doctest::Approx(32.0));
    CHECK(t.val(gl::ad::nodes_sq_l2_diff(t, a, b)) == doctest::Approx(27.0));
}
