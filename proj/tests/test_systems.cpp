#include "doctest.h"
#include "helpers.hpp"

#include "sympflow/systems.hpp"

#include <numbers>

using namespace sympflow;
using testutil::point;
using testutil::vec;

TEST_CASE("harmonic oscillator energy")
{
    const auto h = harmonic_oscillator();
    CHECK(eval_energy(h, point({0, 0})) == 0.0);
    CHECK(eval_energy(h, point({3, 4})) == doctest::Approx(12.5).epsilon(1e-15));
    CHECK_THROWS_AS(eval_energy(h, point({1, 0, 0, 0})), InvalidArgument);
}

TEST_CASE("Henon-Heiles energy and gradient")
{
    const auto hh = henon_heiles();
    CHECK(eval_energy(hh, point({0, 1, 0, 0})) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(eval_energy_gradient(hh, point({0, 0, 0, 0})).isZero(0.0));
    CHECK(eval_energy_gradient(hh, point({0, 1, 0, 0})).isZero(1e-15));
    CHECK((eval_energy_gradient(hh, point({1, 0, 0, 0})) - vec({1, 1, 0, 0})).norm() < 1e-15);
    CHECK_THROWS_AS(eval_energy_gradient(hh, point({1, 0})), InvalidArgument);
}

TEST_CASE("vector field is J applied to the gradient")
{
    const auto h = harmonic_oscillator();
    CHECK((vector_field(h, point({1, 0})) - vec({0, -1})).norm() == 0.0);
    CHECK(vector_field(h, point({0, 0})).isZero(0.0));
    CHECK(vector_field(henon_heiles(), point({0, 1, 0, 0})).isZero(1e-15));

    Rng rng(5);
    for (const auto& sys : {harmonic_oscillator(), henon_heiles()}) {
        for (int i = 0; i < 20; ++i) {
            const auto x = PhasePoint::from_state(testutil::random_vector(rng, 2 * sys.dim));
            const Vector g = eval_energy_gradient(sys, x);
            const Vector f = vector_field(sys, x);
            CHECK((f.head(sys.dim) - g.tail(sys.dim)).norm() == 0.0);
            CHECK((f.tail(sys.dim) + g.head(sys.dim)).norm() == 0.0);
        }
    }
}

TEST_CASE("energy gradients match central differences")
{
    for (const auto& sys : {harmonic_oscillator(), henon_heiles()}) {
        const auto pts = sample_domain(sys.domain, 100, 11);
        for (const auto& x : pts) {
            const Vector s = x.state();
            Vector fd(s.size());
            for (Eigen::Index i = 0; i < s.size(); ++i) {
                Vector a = s, b = s;
                a(i) += 1e-5;
                b(i) -= 1e-5;
                fd(i) = (eval_energy(sys, PhasePoint::from_state(a)) - eval_energy(sys, PhasePoint::from_state(b))) /
                        2e-5;
            }
            const Vector g = eval_energy_gradient(sys, x);
            CHECK((fd - g).norm() <= 1e-6 * (1.0 + g.norm()));
        }
    }
}

TEST_CASE("exact harmonic flow")
{
    CHECK((exact_flow_harmonic(0.0, point({1, 0})).state() - vec({1, 0})).norm() == 0.0);
    CHECK((exact_flow_harmonic(std::numbers::pi / 2, point({1, 0})).state() - vec({0, -1})).norm() < 1e-15);
    CHECK((exact_flow_harmonic(2 * std::numbers::pi, point({0.3, -0.7})).state() - vec({0.3, -0.7})).norm() <
          1e-14);
    const auto h = harmonic_oscillator();
    const auto x0 = point({0.6, -0.2});
    const double e0 = eval_energy(h, x0);
    for (double t = -100.0; t <= 100.0; t += 0.37) {
        CHECK(std::abs(eval_energy(h, exact_flow_harmonic(t, x0)) - e0) <= 1e-12 * e0);
    }
    CHECK_THROWS_AS(exact_flow_harmonic(1.0, point({1, 0, 0, 0})), InvalidArgument);
}

TEST_CASE("domain sampling")
{
    const auto box = DomainBox::cube(2, 1.0);
    const auto pts = sample_domain(box, 100, 3);
    CHECK(pts.size() == 100);
    for (const auto& x : pts) {
        CHECK(box.contains(x.state()));
    }
    const auto again = sample_domain(box, 100, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].state() == again[i].state());
    }
    const auto many = sample_domain(box, 10000, 4);
    Vector mean = Vector::Zero(2);
    for (const auto& x : many) {
        mean += x.state();
    }
    mean /= 10000.0;
    CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
    CHECK_THROWS_AS(sample_domain(box, 0, 1), InvalidArgument);
}

TEST_CASE("phase points and boxes validate their inputs")
{
    CHECK_THROWS_AS(PhasePoint(vec({1}), vec({1, 2})), InvalidArgument);
    CHECK_THROWS_AS(PhasePoint(vec({NAN}), vec({1})), InvalidArgument);
    CHECK_THROWS_AS(PhasePoint::from_state(vec({1, 2, 3})), InvalidArgument);
    CHECK_THROWS_AS(DomainBox(vec({0, 0}), vec({1, 0})), InvalidArgument);
}

TEST_CASE("system registry")
{
    CHECK(make_system("harmonic").dim == 1);
    CHECK(make_system("henon-heiles").dim == 2);
    CHECK(make_system("henon-heiles").separable);
    CHECK_THROWS_AS(make_system("pendulum"), InvalidArgument);
    CHECK(registered_systems().size() == 2);
}
