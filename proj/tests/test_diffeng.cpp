#include "doctest.h"
#include "helpers.hpp"

#include "sympflow/diffeng.hpp"
#include "sympflow/dual.hpp"

using namespace sympflow;
using testutil::vec;

TEST_CASE("Dual2 arithmetic follows the truncated Taylor rules")
{
    const Dual2 a(2.0, 1.0, 0.5, 0.25);
    const Dual2 b(-3.0, 0.2, 4.0, 1.0);
    const Dual2 p = a * b;
    CHECK(p.value == -6.0);
    CHECK(p.du == doctest::Approx(1.0 * -3.0 + 2.0 * 0.2));
    CHECK(p.dw == doctest::Approx(0.5 * -3.0 + 2.0 * 4.0));
    CHECK(p.duw == doctest::Approx(0.25 * -3.0 + 1.0 * 4.0 + 0.5 * 0.2 + 2.0 * 1.0));
    // tanh along a single direction: d/dx tanh = 1 - tanh^2, d2 = -2 tanh (1 - tanh^2)
    const Dual2 th = tanh(Dual2(0.3, 1.0, 1.0, 0.0));
    const double y = std::tanh(0.3);
    CHECK(th.value == doctest::Approx(y));
    CHECK(th.du == doctest::Approx(1 - y * y));
    CHECK(th.duw == doctest::Approx(-2 * y * (1 - y * y)));
}

TEST_CASE("derivatives of the quadratic test potential")
{
    const auto v = PotentialNet::quadratic(1);
    CHECK(grad_input(v, 1.0, vec({2.0}))(0) == doctest::Approx(2.0));
    CHECK(time_partial(v, 3.0, vec({2.0})) == doctest::Approx(2.0));
    for (double t : {-1.0, 0.0, 0.4, 8.0}) {
        CHECK(mixed_grad_time(v, t, vec({5.0}))(0) == doctest::Approx(5.0));
    }
    CHECK_THROWS_AS(grad_input(v, 1.0, vec({1.0, 2.0})), InvalidArgument);
    CHECK_THROWS_AS(time_partial(v, 1.0, vec({1.0, 2.0})), InvalidArgument);
    CHECK_THROWS_AS(mixed_grad_time(v, 1.0, vec({1.0, 2.0})), InvalidArgument);
}

TEST_CASE("derivatives are pure")
{
    const auto v = init_potential(2, {6}, Activation::Tanh, 3);
    CHECK(grad_input(v, 0.2, vec({0.1, 0.4})) == grad_input(v, 0.2, vec({0.1, 0.4})));
    CHECK(time_partial(v, 0.2, vec({0.1, 0.4})) == time_partial(v, 0.2, vec({0.1, 0.4})));
}

TEST_CASE("time-independent and z-linear potentials")
{
    // V = 2 z1 - z2 + 0 t: no time dependence, linear in z
    const auto v = testutil::linear_potential(vec({0.0, 2.0, -1.0}), 0.5);
    CHECK(time_partial(v, 0.7, vec({1.0, 3.0})) == 0.0);
    CHECK(mixed_grad_time(v, 0.7, vec({1.0, 3.0})).isZero(0.0));
    // V = t (z1 + 3 z2) realised as tanh-free two-layer product is not linear; use the quadratic
    // family instead: d/dt grad_z of a t * |z|^2 / 2 is a z, linear so its z-gradient is constant.
    const auto q = PotentialNet::quadratic(2, 3.0);
    const Vector m1 = mixed_grad_time(q, 0.1, vec({1.0, 2.0}));
    const Vector m2 = mixed_grad_time(q, 0.9, vec({1.0, 2.0}));
    CHECK((m1 - m2).norm() == 0.0);
    CHECK((m1 - vec({3.0, 6.0})).norm() < 1e-15);
}

TEST_CASE("potential derivatives match central differences on random networks")
{
    Rng rng(23);
    const double h1 = 1e-5;
    const double h2 = 1e-4;
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + trial % 2;
        const auto v = init_potential(d, {8, 8}, Activation::Tanh, rng.next());
        const double t = rng.uniform(0.0, 1.0);
        const Vector z = testutil::random_vector(rng, d);
        Vector g(d), m(d);
        for (int j = 0; j < d; ++j) {
            Vector a = z, b = z;
            a(j) += h1;
            b(j) -= h1;
            g(j) = (eval_potential(v, t, a) - eval_potential(v, t, b)) / (2 * h1);
            Vector a2 = z, b2 = z;
            a2(j) += h2;
            b2(j) -= h2;
            m(j) = (eval_potential(v, t + h2, a2) - eval_potential(v, t + h2, b2) - eval_potential(v, t - h2, a2) +
                    eval_potential(v, t - h2, b2)) /
                   (4 * h2 * h2);
        }
        const double dt = (eval_potential(v, t + h1, z) - eval_potential(v, t - h1, z)) / (2 * h1);
        CHECK(testutil::rel_error(grad_input(v, t, z), g) <= 1e-6);
        CHECK(std::abs(time_partial(v, t, z) - dt) <= 1e-6 * std::abs(dt));
        CHECK(testutil::rel_error(mixed_grad_time(v, t, z), m) <= 1e-4);
    }
}

TEST_CASE("parameter gradient at a zero-output network is zero")
{
    const PotentialNet v(1, zero_mlp(2, {4}, 1, Activation::Tanh));
    const auto r = param_gradient(v, [](ad::Tape& tape, const BoundPotential& b) {
        auto jet = potential_jet(b, input_row(tape, 0.5, vec({0.3})), std::nullopt, true);
        return ad::sum(ad::square(jet.value));
    });
    CHECK(r.loss == 0.0);
    CHECK(r.gradient.isZero(0.0));
}

TEST_CASE("parameter gradient through an input gradient by hand")
{
    // loss = (grad_z V)^2 with V = a t z^2 / 2: dloss/da = 2 (a t z)(t z) = 8 at a = t = 1, z = 2.
    const auto v = PotentialNet::quadratic(1, 1.0);
    const auto r = param_gradient(v, [](ad::Tape& tape, const BoundPotential& b) {
        auto jet = potential_jet(b, input_row(tape, 1.0, vec({2.0})), std::nullopt);
        return ad::sum(ad::square(ad::col(jet.grad, 1)));
    });
    CHECK(r.loss == doctest::Approx(4.0));
    CHECK(r.gradient.size() == 1);
    CHECK(r.gradient(0) == doctest::Approx(8.0));
}

TEST_CASE("parameter gradient of a loss mixing all derivative kinds")
{
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const auto v = init_potential(2, {5, 4}, Activation::Tanh, rng.next());
        const double t = rng.uniform(0.0, 1.0);
        const Vector z = testutil::random_vector(rng, 2);
        const Vector zdot = testutil::random_vector(rng, 2);
        // value^2 + (dV/dt)^2 + |grad_z V|^2 + |d/dt grad_z V along (1, zdot)|^2
        auto loss_on_tape = [&](ad::Tape& tape, const BoundPotential& b) {
            Matrix sd(1, 3);
            sd << 1.0, zdot(0), zdot(1);
            auto jet = potential_jet(b, input_row(tape, t, z), tape.constant(sd), true);
            return ad::sum(ad::square(jet.value)) + ad::sum(ad::square(jet.grad)) +
                   ad::sum(ad::square(*jet.grad_dot));
        };
        const auto r = param_gradient(v, loss_on_tape);
        const Vector theta = v.parameters();
        Vector exact(theta.size()), fd(theta.size());
        const double h = 1e-5;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            auto at = [&](double delta) {
                PotentialNet w = v;
                Vector th = theta;
                th(k) += delta;
                w.set_parameters(th);
                ad::Tape tape;
                auto b = bind_potential(tape, w, false);
                return loss_on_tape(tape, b).value()(0, 0);
            };
            fd(k) = (at(h) - at(-h)) / (2 * h);
            exact(k) = r.gradient(k);
        }
        CHECK(testutil::rel_error(exact, fd) <= 1e-5);
    }
}

TEST_CASE("non-finite losses raise with the offending node")
{
    auto v = init_potential(1, {3}, Activation::Tanh, 1);
    CHECK_THROWS_AS(param_gradient(v,
                                   [](ad::Tape& tape, const BoundPotential& b) {
                                       auto jet = potential_jet(b, input_row(tape, 0.0, vec({0.0})), std::nullopt, true);
                                       return ad::affine(jet.value, std::numeric_limits<double>::infinity(), 0.0);
                                   }),
                    NumericalError);
}
