#pragma once

#include "sympflow/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sympflow {

using Vector = Eigen::VectorXd;

// A point x = (q, p) of a 2d-dimensional phase space.
struct PhasePoint {
    Vector q;
    Vector p;

    PhasePoint() = default;
    PhasePoint(Vector q_, Vector p_);

    // Splits a 2d state vector ordered (q_1..q_d, p_1..p_d).
    static PhasePoint from_state(const Vector& x);

    int dim() const { return static_cast<int>(q.size()); }
    Vector state() const;
};

// Axis-aligned sampling region for initial conditions, in (q, p) ordering.
struct DomainBox {
    Vector lower;
    Vector upper;

    DomainBox() = default;
    DomainBox(Vector lower_, Vector upper_);
    static DomainBox cube(int phase_dim, double half_width);

    int phase_dim() const { return static_cast<int>(lower.size()); }
    bool contains(const Vector& x) const;
};

// Target system dx/dt = J grad H(x). Gradients are ordered (dH/dq..., dH/dp...).
// The tape_* members evaluate the same closed forms on batches (rows = samples),
// for use inside the training losses.
struct HamiltonianSystem {
    std::string name;
    int dim = 0;
    DomainBox domain;
    bool separable = false;

    std::function<double(const PhasePoint&)> energy;
    std::function<Vector(const PhasePoint&)> energy_gradient;
    std::optional<std::function<PhasePoint(double, const PhasePoint&)>> exact_flow;

    // (Q, P) -> B x 1 energies and B x 2d gradients.
    std::function<ad::Var(ad::Var, ad::Var)> tape_energy;
    std::function<ad::Var(ad::Var, ad::Var)> tape_energy_gradient;
};

// H = (q^2 + p^2) / 2, domain [-1, 1]^2.
HamiltonianSystem harmonic_oscillator();
// H = (p1^2 + p2^2)/2 + (q1^2 + q2^2)/2 + q1^2 q2 - q2^3/3, domain [-0.5, 0.5]^4.
HamiltonianSystem henon_heiles();

// Registry lookup: "harmonic" or "henon-heiles".
HamiltonianSystem make_system(const std::string& name);
std::vector<std::string> registered_systems();

double eval_energy(const HamiltonianSystem& system, const PhasePoint& x);
Vector eval_energy_gradient(const HamiltonianSystem& system, const PhasePoint& x);
// J grad H = (dH/dp, -dH/dq).
Vector vector_field(const HamiltonianSystem& system, const PhasePoint& x);
Vector apply_symplectic_j(const Vector& gradient);

// Rotation solution of the harmonic oscillator.
PhasePoint exact_flow_harmonic(double t, const PhasePoint& x0);

// n i.i.d. uniform points in the box; deterministic per (seed, n).
std::vector<PhasePoint> sample_domain(const DomainBox& box, std::size_t n, std::uint64_t seed);

} // namespace sympflow
