#pragma once

#include "sympflow/dual.hpp"
#include "sympflow/errors.hpp"
#include "sympflow/potential.hpp"
#include "sympflow/tape.hpp"

#include <cmath>
#include <string>

namespace sympflow {

// Single-point derivatives of a potential by forward-mode Dual2 propagation.
// Inputs are (t, z); none of these use finite differences.

// u^T D V and u^T D^2 V w at (t, z), with u, w directions in (t, z) space.
Dual2 potential_directional(const PotentialNet& v, double t, const Vector& z, const Vector& u, const Vector& w);

Vector grad_input(const PotentialNet& v, double t, const Vector& z);
double time_partial(const PotentialNet& v, double t, const Vector& z);
// grad_z dV/dt.
Vector mixed_grad_time(const PotentialNet& v, double t, const Vector& z);

struct GradientResult {
    double loss = 0.0;
    Vector gradient;
};

// Binds the parameters of `model` as leaves of a fresh tape, evaluates
// loss(tape, bound) -> 1 x 1 Var, and sweeps back to dLoss/dtheta in the model's
// flat parameter order. loss may contain input and time derivatives built from
// potential_jet; the sweep differentiates through them.
//
// Model needs bind_parameters(Tape&, const Model&, bool) and
// gather_gradient(const Tape&, const Bound&) overloads.
template <typename Model, typename LossFn>
GradientResult param_gradient(const Model& model, LossFn&& loss)
{
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, true);
    ad::Var out = loss(tape, bound);
    if (out.rows() != 1 || out.cols() != 1) {
        throw InvalidArgument("param_gradient: loss must be a 1x1 value");
    }
    const double value = out.value()(0, 0);
    if (!std::isfinite(value)) {
        const auto where = tape.first_non_finite();
        throw NumericalError("loss evaluation produced a non-finite value (first at " +
                             where.value_or(std::string("output")) + ")");
    }
    tape.backward(out);
    GradientResult r{value, gather_gradient(tape, bound)};
    if (!r.gradient.allFinite()) {
        throw NumericalError("parameter gradient is not finite");
    }
    return r;
}

inline BoundPotential bind_parameters(ad::Tape& tape, const PotentialNet& v, bool trainable)
{
    return bind_potential(tape, v, trainable);
}

inline Vector gather_gradient(const ad::Tape& tape, const BoundPotential& bound)
{
    return gather_potential_gradient(tape, bound);
}

// Row-wise [t | z] on a tape from a single point.
ad::Var input_row(ad::Tape& tape, double t, const Vector& z);

} // namespace sympflow
