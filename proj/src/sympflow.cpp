#include "sympflow/sympflow.hpp"

#include "sympflow/errors.hpp"
#include "sympflow/random.hpp"

#include <cmath>

namespace sympflow {

SympFlowModel::SympFlowModel(int dim, double dt, std::vector<PotentialNet> position, std::vector<PotentialNet> momentum)
    : dim_(dim), dt_(dt), position_(std::move(position)), momentum_(std::move(momentum))
{
    if (dim < 1) {
        throw InvalidArgument("SympFlow dimension must be at least 1");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw InvalidArgument("SympFlow horizon dt must be positive and finite");
    }
    if (position_.empty() || position_.size() != momentum_.size()) {
        throw InvalidArgument("SympFlow needs L >= 1 (position, momentum) pairs");
    }
    for (std::size_t i = 0; i < position_.size(); ++i) {
        if (position_[i].dim() != dim || momentum_[i].dim() != dim) {
            throw InvalidArgument("SympFlow potential " + std::to_string(i + 1) + " has the wrong dimension");
        }
    }
}

SympFlowModel SympFlowModel::random(int dim, int pairs, const std::vector<int>& widths, Activation act,
                                    std::uint64_t seed, double dt)
{
    if (pairs < 1) {
        throw InvalidArgument("SympFlow needs at least one pair");
    }
    std::vector<PotentialNet> pos, mom;
    for (int i = 0; i < pairs; ++i) {
        pos.push_back(init_potential(dim, widths, act, derive_seed(seed, 2 * static_cast<std::uint64_t>(i))));
        mom.push_back(init_potential(dim, widths, act, derive_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1)));
    }
    return SympFlowModel(dim, dt, std::move(pos), std::move(mom));
}

SympFlowModel SympFlowModel::zeros(int dim, int pairs, const std::vector<int>& widths, Activation act, double dt)
{
    if (pairs < 1) {
        throw InvalidArgument("SympFlow needs at least one pair");
    }
    std::vector<PotentialNet> pos, mom;
    for (int i = 0; i < pairs; ++i) {
        pos.emplace_back(dim, zero_mlp(dim + 1, widths, 1, act));
        mom.emplace_back(dim, zero_mlp(dim + 1, widths, 1, act));
    }
    return SympFlowModel(dim, dt, std::move(pos), std::move(mom));
}

FlowLayer SympFlowModel::position_layer(int pair) const
{
    return {LayerKind::Position, position_.at(static_cast<std::size_t>(pair))};
}

FlowLayer SympFlowModel::momentum_layer(int pair) const
{
    return {LayerKind::Momentum, momentum_.at(static_cast<std::size_t>(pair))};
}

std::size_t SympFlowModel::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < position_.size(); ++i) {
        n += position_[i].parameter_count() + momentum_[i].parameter_count();
    }
    return n;
}

Vector SympFlowModel::parameters() const
{
    Vector theta(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < position_.size(); ++i) {
        for (const auto* v : {&position_[i], &momentum_[i]}) {
            const Vector part = v->parameters();
            theta.segment(k, part.size()) = part;
            k += part.size();
        }
    }
    return theta;
}

void SympFlowModel::set_parameters(const Vector& theta)
{
    if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
        throw InvalidArgument("SympFlow parameter vector has length " + std::to_string(theta.size()) +
                              ", expected " + std::to_string(parameter_count()));
    }
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < position_.size(); ++i) {
        for (auto* v : {&position_[i], &momentum_[i]}) {
            const auto n = static_cast<Eigen::Index>(v->parameter_count());
            v->set_parameters(theta.segment(k, n));
            k += n;
        }
    }
}

bool SympFlowModel::all_finite() const
{
    for (std::size_t i = 0; i < position_.size(); ++i) {
        if (!position_[i].all_finite() || !momentum_[i].all_finite()) {
            return false;
        }
    }
    return true;
}

void SympFlowModel::inject_sign_fault(int pair)
{
    if (pair < 0 || pair >= pairs()) {
        throw InvalidArgument("fault pair index out of range");
    }
    fault_ = pair;
}

// ---------------------------------------------------------------------------

namespace {

struct Increment {
    ad::Var value;
    std::optional<ad::Var> dot;
};

// grad_z V(t, z) - grad_z V(0, z), plus its total time derivative when z moves with z_dot.
Increment flow_increment(const BoundPotential& v, ad::Var t, ad::Var z, const std::optional<ad::Var>& z_dot,
                         bool with_dot)
{
    using namespace ad;
    Tape& tape = *z.tape();
    const auto rows = z.rows();
    const auto d = z.cols();
    auto zero = tape.constant(rows, 1, 0.0);
    std::optional<Var> sd_t, sd_0;
    if (with_dot) {
        Var zd = z_dot ? *z_dot : tape.constant(rows, d, 0.0);
        sd_t = concat(tape.constant(rows, 1, 1.0), zd);
        sd_0 = concat(zero, zd);
    }
    auto jet_t = potential_jet(v, concat(t, z), sd_t);
    auto jet_0 = potential_jet(v, concat(zero, z), sd_0);
    Increment inc;
    inc.value = cols(jet_t.grad, 1, d) - cols(jet_0.grad, 1, d);
    if (with_dot) {
        inc.dot = cols(*jet_t.grad_dot, 1, d) - cols(*jet_0.grad_dot, 1, d);
    }
    return inc;
}

void apply_position_batch(const BoundPotential& v, bool fault, ad::Var t, BatchState& s, bool with_dot)
{
    auto inc = flow_increment(v, t, s.q, s.q_dot, with_dot);
    s.p = fault ? -s.p - inc.value : s.p - inc.value;
    if (with_dot) {
        if (s.p_dot) {
            s.p_dot = fault ? -*s.p_dot - *inc.dot : *s.p_dot - *inc.dot;
        } else {
            s.p_dot = -*inc.dot;
        }
    }
}

void apply_momentum_batch(const BoundPotential& v, ad::Var t, BatchState& s, bool with_dot)
{
    auto inc = flow_increment(v, t, s.p, s.p_dot, with_dot);
    s.q = s.q + inc.value;
    if (with_dot) {
        s.q_dot = s.q_dot ? *s.q_dot + *inc.dot : *inc.dot;
    }
}

void invert_position_batch(const BoundPotential& v, bool fault, ad::Var t, BatchState& s)
{
    auto inc = flow_increment(v, t, s.q, std::nullopt, false);
    s.p = fault ? -(s.p + inc.value) : s.p + inc.value;
}

void invert_momentum_batch(const BoundPotential& v, ad::Var t, BatchState& s)
{
    auto inc = flow_increment(v, t, s.p, std::nullopt, false);
    s.q = s.q - inc.value;
}

ad::Var row_of(ad::Tape& tape, const Vector& v)
{
    return tape.constant(Matrix(v.transpose()));
}

PhasePoint point_of(const BatchState& s)
{
    const Matrix& q = s.q.value();
    const Matrix& p = s.p.value();
    if (!q.allFinite() || !p.allFinite()) {
        throw NumericalError("SympFlow evaluation produced a non-finite state");
    }
    return PhasePoint(q.row(0).transpose(), p.row(0).transpose());
}

void check_point(const PotentialNet& v, const PhasePoint& x)
{
    if (x.dim() != v.dim()) {
        throw InvalidArgument("flow layer expects phase dimension " + std::to_string(2 * v.dim()) + ", got " +
                              std::to_string(2 * x.dim()));
    }
}

void check_point(const SympFlowModel& m, const PhasePoint& x, double t)
{
    if (x.dim() != m.dim()) {
        throw InvalidArgument("SympFlow expects phase dimension " + std::to_string(2 * m.dim()) + ", got " +
                              std::to_string(2 * x.dim()));
    }
    if (!std::isfinite(t)) {
        throw InvalidArgument("time must be finite");
    }
}

PhasePoint single_layer(const FlowLayer& layer, double t, const PhasePoint& x, bool invert)
{
    check_point(layer.potential, x);
    ad::Tape tape;
    auto v = bind_potential(tape, layer.potential, false);
    auto tv = tape.constant(1, 1, t);
    BatchState s{row_of(tape, x.q), row_of(tape, x.p), std::nullopt, std::nullopt};
    if (layer.kind == LayerKind::Position) {
        invert ? invert_position_batch(v, false, tv, s) : apply_position_batch(v, false, tv, s, false);
    } else {
        invert ? invert_momentum_batch(v, tv, s) : apply_momentum_batch(v, tv, s, false);
    }
    return point_of(s);
}

} // namespace

BoundSympFlow bind_parameters(ad::Tape& tape, const SympFlowModel& model, bool trainable)
{
    BoundSympFlow b;
    b.dim = model.dim();
    b.fault = model.sign_fault();
    for (int i = 0; i < model.pairs(); ++i) {
        b.position.push_back(bind_potential(tape, model.position_potential(i), trainable));
        b.momentum.push_back(bind_potential(tape, model.momentum_potential(i), trainable));
    }
    return b;
}

Vector gather_gradient(const ad::Tape& tape, const BoundSympFlow& bound)
{
    std::vector<Vector> parts;
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < bound.position.size(); ++i) {
        parts.push_back(gather_potential_gradient(tape, bound.position[i]));
        n += parts.back().size();
        parts.push_back(gather_potential_gradient(tape, bound.momentum[i]));
        n += parts.back().size();
    }
    Vector g(n);
    Eigen::Index k = 0;
    for (const auto& part : parts) {
        g.segment(k, part.size()) = part;
        k += part.size();
    }
    return g;
}

BatchState forward_batch(const BoundSympFlow& model, ad::Var t, ad::Var q, ad::Var p, bool with_time_derivative)
{
    BatchState s{q, p, std::nullopt, std::nullopt};
    for (std::size_t i = 0; i < model.position.size(); ++i) {
        const bool fault = model.fault && *model.fault == static_cast<int>(i);
        apply_position_batch(model.position[i], fault, t, s, with_time_derivative);
        apply_momentum_batch(model.momentum[i], t, s, with_time_derivative);
    }
    return s;
}

ad::Var pair_hamiltonian_batch(const BoundSympFlow& model, int pair, ad::Var t, ad::Var q, ad::Var p)
{
    using namespace ad;
    if (pair < 0 || pair >= static_cast<int>(model.position.size())) {
        throw InvalidArgument("pair index out of range");
    }
    Tape& tape = *q.tape();
    const auto d = q.cols();
    const auto& vm = model.momentum[static_cast<std::size_t>(pair)];
    const auto& vp = model.position[static_cast<std::size_t>(pair)];
    auto zero = tape.constant(q.rows(), 1, 0.0);
    auto jet_m = potential_jet(vm, concat(t, p), std::nullopt);
    auto jet_m0 = potential_jet(vm, concat(zero, p), std::nullopt);
    auto q_back = q - (cols(jet_m.grad, 1, d) - cols(jet_m0.grad, 1, d));
    auto jet_p = potential_jet(vp, concat(t, q_back), std::nullopt);
    return col(jet_m.grad, 0) + col(jet_p.grad, 0);
}

ad::Var network_hamiltonian_batch(const BoundSympFlow& model, ad::Var t, ad::Var q, ad::Var p)
{
    using namespace ad;
    Tape& tape = *q.tape();
    const auto d = q.cols();
    auto zero = tape.constant(q.rows(), 1, 0.0);
    std::optional<Var> acc;
    // H^{L:i}(x) = H^{L:i+1}(x) + H^i(inverse of pairs L..i+1 applied to x)
    for (auto i = static_cast<int>(model.position.size()); i-- > 0;) {
        const auto& vm = model.momentum[static_cast<std::size_t>(i)];
        const auto& vp = model.position[static_cast<std::size_t>(i)];
        auto jet_m = potential_jet(vm, concat(t, p), std::nullopt);
        auto jet_m0 = potential_jet(vm, concat(zero, p), std::nullopt);
        // Inverting the momentum layer gives the point where pair i's position Hamiltonian is read.
        auto q_back = q - (cols(jet_m.grad, 1, d) - cols(jet_m0.grad, 1, d));
        auto jet_p = potential_jet(vp, concat(t, q_back), std::nullopt);
        auto h = col(jet_m.grad, 0) + col(jet_p.grad, 0);
        acc = acc ? *acc + h : h;
        if (i > 0) {
            auto jet_p0 = potential_jet(vp, concat(zero, q_back), std::nullopt);
            auto p_back = p + (cols(jet_p.grad, 1, d) - cols(jet_p0.grad, 1, d));
            const bool fault = model.fault && *model.fault == i;
            p = fault ? -p_back : p_back;
            q = q_back;
        }
    }
    return *acc;
}

// ---------------------------------------------------------------------------

PhasePoint apply_position_flow(const FlowLayer& layer, double t, const PhasePoint& x)
{
    if (layer.kind != LayerKind::Position) {
        throw InvalidArgument("apply_position_flow called on a momentum layer");
    }
    return single_layer(layer, t, x, false);
}

PhasePoint apply_momentum_flow(const FlowLayer& layer, double t, const PhasePoint& x)
{
    if (layer.kind != LayerKind::Momentum) {
        throw InvalidArgument("apply_momentum_flow called on a position layer");
    }
    return single_layer(layer, t, x, false);
}

PhasePoint apply_layer(const FlowLayer& layer, double t, const PhasePoint& x)
{
    return single_layer(layer, t, x, false);
}

PhasePoint invert_layer(const FlowLayer& layer, double t, const PhasePoint& y)
{
    return single_layer(layer, t, y, true);
}

PhasePoint forward(const SympFlowModel& model, double t, const PhasePoint& x)
{
    check_point(model, x, t);
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    auto s = forward_batch(bound, tape.constant(1, 1, t), row_of(tape, x.q), row_of(tape, x.p), false);
    return point_of(s);
}

PhasePoint inverse(const SympFlowModel& model, double t, const PhasePoint& y)
{
    check_point(model, y, t);
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    auto tv = tape.constant(1, 1, t);
    BatchState s{row_of(tape, y.q), row_of(tape, y.p), std::nullopt, std::nullopt};
    for (auto i = model.pairs(); i-- > 0;) {
        invert_momentum_batch(bound.momentum[static_cast<std::size_t>(i)], tv, s);
        const bool fault = bound.fault && *bound.fault == i;
        invert_position_batch(bound.position[static_cast<std::size_t>(i)], fault, tv, s);
    }
    return point_of(s);
}

Vector time_derivative(const SympFlowModel& model, double t, const PhasePoint& x)
{
    check_point(model, x, t);
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    auto s = forward_batch(bound, tape.constant(1, 1, t), row_of(tape, x.q), row_of(tape, x.p), true);
    Vector out(2 * model.dim());
    out << s.q_dot->value().row(0).transpose(), s.p_dot->value().row(0).transpose();
    if (!out.allFinite()) {
        throw NumericalError("SympFlow time derivative is not finite");
    }
    return out;
}

double pair_hamiltonian(int pair_index, const SympFlowModel& model, double t, const PhasePoint& x)
{
    if (pair_index < 1 || pair_index > model.pairs()) {
        throw InvalidArgument("pair index " + std::to_string(pair_index) + " out of range 1.." +
                              std::to_string(model.pairs()));
    }
    check_point(model, x, t);
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    auto h = pair_hamiltonian_batch(bound, pair_index - 1, tape.constant(1, 1, t), row_of(tape, x.q),
                                    row_of(tape, x.p));
    return h.value()(0, 0);
}

double network_hamiltonian(const SympFlowModel& model, double t, const PhasePoint& x)
{
    check_point(model, x, t);
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    auto h = network_hamiltonian_batch(bound, tape.constant(1, 1, t), row_of(tape, x.q), row_of(tape, x.p));
    const double value = h.value()(0, 0);
    if (!std::isfinite(value)) {
        throw NumericalError("extracted Hamiltonian is not finite");
    }
    return value;
}

Matrix finite_difference_jacobian(const std::function<PhasePoint(const PhasePoint&)>& map, const PhasePoint& x,
                                  double step)
{
    const Vector x0 = x.state();
    const auto n = x0.size();
    Matrix m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector plus = x0, minus = x0;
        plus(j) += step;
        minus(j) -= step;
        m.col(j) = (map(PhasePoint::from_state(plus)).state() - map(PhasePoint::from_state(minus)).state()) /
                   (2.0 * step);
    }
    return m;
}

Matrix jacobian(const SympFlowModel& model, double t, const PhasePoint& x)
{
    check_point(model, x, t);
    return finite_difference_jacobian([&](const PhasePoint& y) { return forward(model, t, y); }, x);
}

Matrix symplectic_j(int dim)
{
    Matrix j = Matrix::Zero(2 * dim, 2 * dim);
    j.topRightCorner(dim, dim).setIdentity();
    j.bottomLeftCorner(dim, dim) = -Matrix::Identity(dim, dim);
    return j;
}

double symplecticity_defect(const Matrix& m)
{
    if (m.rows() != m.cols() || m.rows() % 2 != 0) {
        throw InvalidArgument("symplecticity check needs a square matrix of even size");
    }
    const Matrix j = symplectic_j(static_cast<int>(m.rows() / 2));
    return (m.transpose() * j * m - j).cwiseAbs().maxCoeff();
}

std::vector<double> sample_times(double t_final, std::size_t n)
{
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
        throw InvalidArgument("final time must be finite and non-negative");
    }
    if (n == 0) {
        throw InvalidArgument("sample count must be at least 1");
    }
    if (n == 1) {
        return {t_final};
    }
    std::vector<double> times(n);
    for (std::size_t k = 0; k < n; ++k) {
        times[k] = t_final * static_cast<double>(k) / static_cast<double>(n - 1);
    }
    times.back() = t_final;
    return times;
}

std::vector<TrajectoryPoint> rollout_windows(const std::function<PhasePoint(double, const PhasePoint&)>& window,
                                             double dt, const std::vector<double>& times, const PhasePoint& x0)
{
    if (!(dt > 0.0)) {
        throw InvalidArgument("rollout needs a positive window length");
    }
    std::vector<TrajectoryPoint> out;
    out.reserve(times.size());
    long long windows_done = 0;
    PhasePoint base = x0; // window(dt)^windows_done (x0)
    double previous = 0.0;
    for (double t : times) {
        if (!(t >= 0.0) || t < previous) {
            throw InvalidArgument("rollout times must be non-negative and non-decreasing");
        }
        previous = t;
        const auto k = static_cast<long long>(std::floor(t / dt));
        while (windows_done < k) {
            base = window(dt, base);
            ++windows_done;
        }
        const double rest = t - dt * static_cast<double>(k);
        out.push_back({t, rest == 0.0 ? base : window(rest, base)});
    }
    return out;
}

std::vector<TrajectoryPoint> rollout(const SympFlowModel& model, double t_final, const PhasePoint& x0,
                                     std::size_t n_samples)
{
    if (t_final < 0.0) {
        throw InvalidArgument("rollout: t_final must be non-negative");
    }
    check_point(model, x0, t_final);
    return rollout_windows([&](double t, const PhasePoint& x) { return forward(model, t, x); }, model.dt(),
                           sample_times(t_final, n_samples), x0);
}

} // namespace sympflow
