#include "sympflow/systems.hpp"

#include "sympflow/errors.hpp"
#include "sympflow/random.hpp"

#include <cmath>

namespace sympflow {

PhasePoint::PhasePoint(Vector q_, Vector p_) : q(std::move(q_)), p(std::move(p_))
{
    if (q.size() != p.size() || q.size() < 1) {
        throw InvalidArgument("phase point needs equal-length q and p with d >= 1");
    }
    if (!q.allFinite() || !p.allFinite()) {
        throw InvalidArgument("phase point entries must be finite");
    }
}

PhasePoint PhasePoint::from_state(const Vector& x)
{
    if (x.size() < 2 || x.size() % 2 != 0) {
        throw InvalidArgument("state vector must have even length 2d >= 2, got " + std::to_string(x.size()));
    }
    const auto d = x.size() / 2;
    return PhasePoint(x.head(d), x.tail(d));
}

Vector PhasePoint::state() const
{
    Vector x(q.size() + p.size());
    x << q, p;
    return x;
}

DomainBox::DomainBox(Vector lower_, Vector upper_) : lower(std::move(lower_)), upper(std::move(upper_))
{
    if (lower.size() != upper.size() || lower.size() < 2 || lower.size() % 2 != 0) {
        throw InvalidArgument("domain box bounds must have equal even length");
    }
    if ((lower.array() >= upper.array()).any()) {
        throw InvalidArgument("domain box requires lower < upper componentwise");
    }
}

DomainBox DomainBox::cube(int phase_dim, double half_width)
{
    return DomainBox(Vector::Constant(phase_dim, -half_width), Vector::Constant(phase_dim, half_width));
}

bool DomainBox::contains(const Vector& x) const
{
    return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

namespace {

void check_dim(const HamiltonianSystem& system, const PhasePoint& x)
{
    if (x.dim() != system.dim || x.p.size() != system.dim) {
        throw InvalidArgument(system.name + ": expected phase dimension " + std::to_string(2 * system.dim) +
                              ", got " + std::to_string(x.q.size() + x.p.size()));
    }
}

} // namespace

HamiltonianSystem harmonic_oscillator()
{
    HamiltonianSystem s;
    s.name = "harmonic";
    s.dim = 1;
    s.domain = DomainBox::cube(2, 1.0);
    s.separable = true;
    s.energy = [](const PhasePoint& x) { return 0.5 * (x.q(0) * x.q(0) + x.p(0) * x.p(0)); };
    s.energy_gradient = [](const PhasePoint& x) {
        Vector g(2);
        g << x.q(0), x.p(0);
        return g;
    };
    s.exact_flow = [](double t, const PhasePoint& x0) { return exact_flow_harmonic(t, x0); };
    s.tape_energy = [](ad::Var q, ad::Var p) { return affine(square(q) + square(p), 0.5, 0.0); };
    s.tape_energy_gradient = [](ad::Var q, ad::Var p) { return concat(q, p); };
    return s;
}

HamiltonianSystem henon_heiles()
{
    HamiltonianSystem s;
    s.name = "henon-heiles";
    s.dim = 2;
    s.domain = DomainBox::cube(4, 0.5);
    s.separable = true;
    s.energy = [](const PhasePoint& x) {
        const double q1 = x.q(0), q2 = x.q(1);
        return 0.5 * x.p.squaredNorm() + 0.5 * (q1 * q1 + q2 * q2) + q1 * q1 * q2 - q2 * q2 * q2 / 3.0;
    };
    s.energy_gradient = [](const PhasePoint& x) {
        const double q1 = x.q(0), q2 = x.q(1);
        Vector g(4);
        g << q1 + 2.0 * q1 * q2, q2 + q1 * q1 - q2 * q2, x.p(0), x.p(1);
        return g;
    };
    s.tape_energy = [](ad::Var q, ad::Var p) {
        auto q1 = col(q, 0);
        auto q2 = col(q, 1);
        auto quad = affine(square(col(p, 0)) + square(col(p, 1)) + square(q1) + square(q2), 0.5, 0.0);
        return quad + square(q1) * q2 - affine(square(q2) * q2, 1.0 / 3.0, 0.0);
    };
    s.tape_energy_gradient = [](ad::Var q, ad::Var p) {
        auto q1 = col(q, 0);
        auto q2 = col(q, 1);
        auto g1 = q1 + affine(q1 * q2, 2.0, 0.0);
        auto g2 = q2 + square(q1) - square(q2);
        return concat(concat(g1, g2), p);
    };
    return s;
}

HamiltonianSystem make_system(const std::string& name)
{
    if (name == "harmonic") {
        return harmonic_oscillator();
    }
    if (name == "henon-heiles") {
        return henon_heiles();
    }
    throw InvalidArgument("unknown system '" + name + "' (expected harmonic or henon-heiles)");
}

std::vector<std::string> registered_systems()
{
    return {"harmonic", "henon-heiles"};
}

double eval_energy(const HamiltonianSystem& system, const PhasePoint& x)
{
    check_dim(system, x);
    return system.energy(x);
}

Vector eval_energy_gradient(const HamiltonianSystem& system, const PhasePoint& x)
{
    check_dim(system, x);
    return system.energy_gradient(x);
}

Vector apply_symplectic_j(const Vector& gradient)
{
    const auto d = gradient.size() / 2;
    Vector out(gradient.size());
    out << gradient.tail(d), -gradient.head(d);
    return out;
}

Vector vector_field(const HamiltonianSystem& system, const PhasePoint& x)
{
    return apply_symplectic_j(eval_energy_gradient(system, x));
}

PhasePoint exact_flow_harmonic(double t, const PhasePoint& x0)
{
    if (x0.dim() != 1) {
        throw InvalidArgument("harmonic exact flow expects a 2-dimensional state");
    }
    const double c = std::cos(t), s = std::sin(t);
    const double q0 = x0.q(0), p0 = x0.p(0);
    Vector q(1), p(1);
    q << q0 * c + p0 * s;
    p << -q0 * s + p0 * c;
    return PhasePoint(q, p);
}

std::vector<PhasePoint> sample_domain(const DomainBox& box, std::size_t n, std::uint64_t seed)
{
    if (n == 0) {
        throw InvalidArgument("sample_domain: n must be at least 1");
    }
    Rng rng(seed);
    std::vector<PhasePoint> out;
    out.reserve(n);
    const auto dim = box.phase_dim();
    Vector x(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) {
            x(j) = rng.uniform(box.lower(j), box.upper(j));
        }
        out.push_back(PhasePoint::from_state(x));
    }
    return out;
}

} // namespace sympflow
