#pragma once

#include "sympflow/potential.hpp"
#include "sympflow/systems.hpp"
#include "sympflow/tape.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace sympflow {

enum class LayerKind { Position, Momentum };

// Exact flow (from time 0) of a Hamiltonian that depends on q only (Position:
// H = dV/dt(t, q), kicks p) or on p only (Momentum: H = dV/dt(t, p), drifts q).
struct FlowLayer {
    LayerKind kind = LayerKind::Position;
    PotentialNet potential;
};

// psi_t = m_L o p_L o ... o m_1 o p_1, valid on t in [0, dt].
class SympFlowModel {
public:
    SympFlowModel() = default;
    // position[i], momentum[i] form pair i + 1.
    SympFlowModel(int dim, double dt, std::vector<PotentialNet> position, std::vector<PotentialNet> momentum);

    static SympFlowModel random(int dim, int pairs, const std::vector<int>& widths, Activation act,
                                std::uint64_t seed, double dt = 1.0);
    static SympFlowModel zeros(int dim, int pairs, const std::vector<int>& widths, Activation act, double dt = 1.0);

    int dim() const { return dim_; }
    int pairs() const { return static_cast<int>(position_.size()); }
    double dt() const { return dt_; }

    // 0-based pair index.
    FlowLayer position_layer(int pair) const;
    FlowLayer momentum_layer(int pair) const;
    const PotentialNet& position_potential(int pair) const { return position_.at(static_cast<std::size_t>(pair)); }
    const PotentialNet& momentum_potential(int pair) const { return momentum_.at(static_cast<std::size_t>(pair)); }

    // Pair by pair, position potential first.
    std::size_t parameter_count() const;
    Vector parameters() const;
    void set_parameters(const Vector& theta);
    bool all_finite() const;

    // Test hook for the invariant checker: the position layer of `pair` flips the
    // sign of the momentum it passes through, which makes the map anti-symplectic.
    void inject_sign_fault(int pair);
    std::optional<int> sign_fault() const { return fault_; }

private:
    int dim_ = 0;
    double dt_ = 1.0;
    std::vector<PotentialNet> position_;
    std::vector<PotentialNet> momentum_;
    std::optional<int> fault_;
};

// ---------------------------------------------------------------------------
// Single-point operations.

PhasePoint apply_position_flow(const FlowLayer& layer, double t, const PhasePoint& x);
PhasePoint apply_momentum_flow(const FlowLayer& layer, double t, const PhasePoint& x);
PhasePoint apply_layer(const FlowLayer& layer, double t, const PhasePoint& x);
PhasePoint invert_layer(const FlowLayer& layer, double t, const PhasePoint& y);

PhasePoint forward(const SympFlowModel& model, double t, const PhasePoint& x);
// Applies every layer inverse in reverse order.
PhasePoint inverse(const SympFlowModel& model, double t, const PhasePoint& y);
// d/dt forward(model, t, x) at fixed x, ordered (dq/dt, dp/dt).
Vector time_derivative(const SympFlowModel& model, double t, const PhasePoint& x);

// pair_index is 1-based, 1 <= i <= L.
double pair_hamiltonian(int pair_index, const SympFlowModel& model, double t, const PhasePoint& x);
// Time-dependent Hamiltonian whose exact flow is forward(model, t, .), assembled
// from the last pair to the first.
double network_hamiltonian(const SympFlowModel& model, double t, const PhasePoint& x);

// Central finite differences of x -> map(x).
Matrix finite_difference_jacobian(const std::function<PhasePoint(const PhasePoint&)>& map, const PhasePoint& x,
                                  double step = 1e-5);
Matrix jacobian(const SympFlowModel& model, double t, const PhasePoint& x);

// ||M^T J M - J||_inf.
double symplecticity_defect(const Matrix& m);
Matrix symplectic_j(int dim);

struct TrajectoryPoint {
    double t = 0.0;
    PhasePoint x;
};

// n evenly spaced times in [0, t_final] (n = 1 -> {t_final}).
std::vector<double> sample_times(double t_final, std::size_t n);

// Long-horizon extension psi_t = window(t - dt floor(t/dt)) o window(dt)^floor(t/dt).
// `times` must be non-decreasing; window powers are advanced incrementally.
std::vector<TrajectoryPoint> rollout_windows(const std::function<PhasePoint(double, const PhasePoint&)>& window,
                                             double dt, const std::vector<double>& times, const PhasePoint& x0);
std::vector<TrajectoryPoint> rollout(const SympFlowModel& model, double t_final, const PhasePoint& x0,
                                     std::size_t n_samples);

// ---------------------------------------------------------------------------
// Batched evaluation on a tape (rows = samples).

struct BoundSympFlow {
    int dim = 0;
    std::vector<BoundPotential> position;
    std::vector<BoundPotential> momentum;
    std::optional<int> fault;
};

BoundSympFlow bind_parameters(ad::Tape& tape, const SympFlowModel& model, bool trainable);
Vector gather_gradient(const ad::Tape& tape, const BoundSympFlow& bound);

struct BatchState {
    ad::Var q;
    ad::Var p;
    std::optional<ad::Var> q_dot;
    std::optional<ad::Var> p_dot;
};

// t is B x 1; q, p are B x d. With with_time_derivative, q_dot/p_dot hold d/dt psi_t(x).
BatchState forward_batch(const BoundSympFlow& model, ad::Var t, ad::Var q, ad::Var p, bool with_time_derivative);
// B x 1 extracted Hamiltonian values.
ad::Var network_hamiltonian_batch(const BoundSympFlow& model, ad::Var t, ad::Var q, ad::Var p);
// 0-based pair index.
ad::Var pair_hamiltonian_batch(const BoundSympFlow& model, int pair, ad::Var t, ad::Var q, ad::Var p);

} // namespace sympflow
