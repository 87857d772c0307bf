#include "doctest.h"
#include "helpers.hpp"

#include "sympflow/diffeng.hpp"
#include "sympflow/potential.hpp"

using namespace sympflow;
using testutil::point;
using testutil::vec;

TEST_CASE("zero network potential vanishes")
{
    const PotentialNet v(2, zero_mlp(3, {5, 4}, 1, Activation::Tanh));
    CHECK(eval_potential(v, 0.3, vec({1.0, -2.0})) == 0.0);
    CHECK(eval_potential(v, -7.0, vec({0.0, 5.0})) == 0.0);
}

TEST_CASE("single linear layer potential")
{
    const auto v = testutil::linear_potential(vec({1.0, 2.0}));
    CHECK(eval_potential(v, 3.0, vec({4.0})) == 11.0);
    CHECK_THROWS_AS(eval_potential(v, 3.0, vec({4.0, 1.0})), InvalidArgument);
}

TEST_CASE("initialisation is deterministic and bounded")
{
    const auto a = init_potential(1, {16, 16}, Activation::Tanh, 42);
    const auto b = init_potential(1, {16, 16}, Activation::Tanh, 42);
    const auto c = init_potential(1, {16, 16}, Activation::Tanh, 43);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.parameters() != c.parameters());
    CHECK(a.parameter_count() == 337);
    CHECK(a.parameters().allFinite());
    CHECK(a.parameters().cwiseAbs().maxCoeff() <= 1.0);
    CHECK(eval_potential(a, 0.4, vec({0.2})) == eval_potential(b, 0.4, vec({0.2})));
    CHECK_THROWS_AS(init_potential(1, {}, Activation::Tanh, 1), InvalidArgument);
    CHECK_THROWS_AS(init_potential(1, {8, 0}, Activation::Tanh, 1), InvalidArgument);
}

TEST_CASE("parameter count formula over width configurations")
{
    for (int d = 1; d <= 3; ++d) {
        for (const auto& widths : std::vector<std::vector<int>>{{1}, {3}, {2, 5}, {4, 1, 3}}) {
            std::size_t expected = 0;
            int in = d + 1;
            for (int w : widths) {
                expected += static_cast<std::size_t>(in * w + w);
                in = w;
            }
            expected += static_cast<std::size_t>(in + 1);
            CHECK(init_potential(d, widths, Activation::Tanh, 0).parameter_count() == expected);
        }
    }
}

TEST_CASE("parameter vectors round-trip")
{
    auto v = init_potential(2, {3, 4}, Activation::Tanh, 9);
    Vector theta = v.parameters();
    theta(5) = 0.125;
    v.set_parameters(theta);
    CHECK(v.parameters() == theta);
    CHECK_THROWS_AS(v.set_parameters(Vector::Zero(3)), InvalidArgument);
}

TEST_CASE("non-finite parameters are reported")
{
    auto v = init_potential(1, {3}, Activation::Tanh, 1);
    Vector theta = v.parameters();
    theta(0) = NAN;
    v.set_parameters(theta);
    CHECK_THROWS_AS(eval_potential(v, 0.0, vec({0.0})), NumericalError);
}

TEST_CASE("baseline is the identity at t = 0 and for zero weights")
{
    const auto net = init_baseline(2, {8}, Activation::Tanh, 5);
    const auto x = point({0.3, -0.2, 0.9, 0.1});
    CHECK(eval_baseline(net, 0.0, x).state() == x.state());
    const BaselineFlowNet zero(2, zero_mlp(5, {8}, 4, Activation::Tanh));
    CHECK(eval_baseline(zero, 0.7, x).state() == x.state());
}

TEST_CASE("linear baseline by hand")
{
    // N(t, q, p) = W (t, q, p) + b with identity activation and no hidden layer.
    Mlp m;
    m.activation = Activation::Identity;
    Matrix w(2, 3);
    w << 1, 2, 0, 0, 1, -1;
    m.layers.push_back({w, Eigen::RowVector2d(0.5, 0.0)});
    const BaselineFlowNet net(1, m);
    // t = 2, x = (1, 3): N = (2 + 2 + 0.5, 1 - 3) = (4.5, -2); x + t N = (10, -1).
    const auto y = eval_baseline(net, 2.0, point({1.0, 3.0}));
    CHECK(y.q(0) == doctest::Approx(10.0));
    CHECK(y.p(0) == doctest::Approx(-1.0));
}

TEST_CASE("potential jets agree with forward-mode derivatives")
{
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 1 + trial % 2;
        const auto v = init_potential(d, {6, 5}, Activation::Tanh, rng.next());
        const double t = rng.uniform(0.0, 1.0);
        const Vector z = testutil::random_vector(rng, d);
        const Vector u = testutil::random_vector(rng, d + 1);

        ad::Tape tape;
        auto bound = bind_potential(tape, v, false);
        auto s = input_row(tape, t, z);
        auto jet = potential_jet(bound, s, tape.constant(Matrix(u.transpose())), true);
        CHECK(jet.value.value()(0, 0) == doctest::Approx(eval_potential(v, t, z)).epsilon(1e-13));
        const Vector g = jet.grad.value().row(0).transpose();
        CHECK(std::abs(g(0) - time_partial(v, t, z)) < 1e-13);
        CHECK((g.tail(d) - grad_input(v, t, z)).norm() < 1e-13);
        // Each column of grad_dot is u . grad of the matching column of grad.
        const Vector gd = jet.grad_dot->value().row(0).transpose();
        for (int k = 0; k <= d; ++k) {
            Vector e = Vector::Zero(d + 1);
            e(k) = 1.0;
            const double second = potential_directional(v, t, z, u, e).duw;
            CHECK(std::abs(gd(k) - second) < 1e-12);
        }
    }
}

TEST_CASE("quadratic test potential jets")
{
    const auto v = PotentialNet::quadratic(1, 1.0);
    ad::Tape tape;
    auto bound = bind_potential(tape, v, false);
    auto jet = potential_jet(bound, input_row(tape, 3.0, vec({2.0})), tape.constant(Matrix(vec({1.0, 0.5}).transpose())),
                             true);
    CHECK(jet.value.value()(0, 0) == doctest::Approx(6.0));
    CHECK(jet.grad.value()(0, 0) == doctest::Approx(2.0)); // z^2 / 2
    CHECK(jet.grad.value()(0, 1) == doctest::Approx(6.0)); // t z
    // d/dtau of (z^2/2, t z) along (1, 0.5): (z * 0.5, z + t * 0.5)
    CHECK(jet.grad_dot->value()(0, 0) == doctest::Approx(1.0));
    CHECK(jet.grad_dot->value()(0, 1) == doctest::Approx(3.5));
}
