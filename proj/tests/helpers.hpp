#pragma once

#include "sympflow/potential.hpp"
#include "sympflow/random.hpp"
#include "sympflow/sympflow.hpp"

#include <cmath>

namespace testutil {

using sympflow::Vector;

inline Vector vec(std::initializer_list<double> v)
{
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out(i++) = x;
    }
    return out;
}

inline sympflow::PhasePoint point(std::initializer_list<double> state)
{
    return sympflow::PhasePoint::from_state(vec(state));
}

inline Vector random_vector(sympflow::Rng& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0)
{
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = rng.uniform(lo, hi);
    }
    return v;
}

inline double rel_error(const Vector& a, const Vector& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-12);
}

// L = 1 model with V_p = t q^2 / 2 and V_m = t p^2 / 2.
inline sympflow::SympFlowModel quadratic_model(int dim = 1)
{
    return sympflow::SympFlowModel(dim, 1.0, {sympflow::PotentialNet::quadratic(dim)},
                                   {sympflow::PotentialNet::quadratic(dim)});
}

// A single dense layer V = w . (t, z) + b.
inline sympflow::PotentialNet linear_potential(const Vector& w, double b = 0.0)
{
    sympflow::Mlp m;
    m.activation = sympflow::Activation::Identity;
    sympflow::DenseLayer l{sympflow::Matrix(w.transpose()), Eigen::RowVectorXd::Constant(1, b)};
    m.layers.push_back(l);
    return sympflow::PotentialNet(static_cast<int>(w.size()) - 1, m);
}

} // namespace testutil
