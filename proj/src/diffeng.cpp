#include "sympflow/diffeng.hpp"

#include <vector>

namespace sympflow {

namespace {

void check_input(const PotentialNet& v, const Vector& z)
{
    if (z.size() != v.dim()) {
        throw InvalidArgument("expected z of dimension " + std::to_string(v.dim()) + ", got " +
                              std::to_string(z.size()));
    }
}

Vector unit(int n, int i)
{
    Vector e = Vector::Zero(n);
    e(i) = 1.0;
    return e;
}

} // namespace

Dual2 potential_directional(const PotentialNet& v, double t, const Vector& z, const Vector& u, const Vector& w)
{
    check_input(v, z);
    const int n = v.input_dim();
    if (u.size() != n || w.size() != n) {
        throw InvalidArgument("direction vectors must have dimension d + 1");
    }
    Dual2 td(t, u(0), w(0), 0.0);
    std::vector<Dual2> zd(static_cast<std::size_t>(v.dim()));
    for (int j = 0; j < v.dim(); ++j) {
        zd[static_cast<std::size_t>(j)] = Dual2(z(j), u(j + 1), w(j + 1), 0.0);
    }
    const Dual2 out = v.evaluate(td, zd);
    if (!std::isfinite(out.value) || !std::isfinite(out.du) || !std::isfinite(out.dw) || !std::isfinite(out.duw)) {
        throw NumericalError("potential derivative evaluation is not finite");
    }
    return out;
}

Vector grad_input(const PotentialNet& v, double t, const Vector& z)
{
    check_input(v, z);
    const int n = v.input_dim();
    Vector g(v.dim());
    for (int j = 0; j < v.dim(); ++j) {
        g(j) = potential_directional(v, t, z, unit(n, j + 1), Vector::Zero(n)).du;
    }
    return g;
}

double time_partial(const PotentialNet& v, double t, const Vector& z)
{
    check_input(v, z);
    const int n = v.input_dim();
    return potential_directional(v, t, z, unit(n, 0), Vector::Zero(n)).du;
}

Vector mixed_grad_time(const PotentialNet& v, double t, const Vector& z)
{
    check_input(v, z);
    const int n = v.input_dim();
    Vector g(v.dim());
    for (int j = 0; j < v.dim(); ++j) {
        g(j) = potential_directional(v, t, z, unit(n, j + 1), unit(n, 0)).duw;
    }
    return g;
}

ad::Var input_row(ad::Tape& tape, double t, const Vector& z)
{
    Matrix row(1, z.size() + 1);
    row(0, 0) = t;
    row.rightCols(z.size()) = z.transpose();
    return tape.constant(std::move(row));
}

} // namespace sympflow
