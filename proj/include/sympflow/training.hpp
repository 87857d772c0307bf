#pragma once

#include "sympflow/diffeng.hpp"
#include "sympflow/potential.hpp"
#include "sympflow/sympflow.hpp"
#include "sympflow/systems.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace sympflow {

struct TrainingConfig {
    double dt = 1.0;
    std::size_t n_collocation = 2048; // physics-informed samples per epoch
    std::size_t n_matching = 2048;    // Hamiltonian-matching samples per epoch
    std::size_t epochs = 5000;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    double w_pi = 1.0;
    double w_match = 1.0;
    int threads = 1;
    std::size_t chunk_rows = 32; // rows per gradient tape; fixes the summation order

    void validate() const;
};

struct AdamState {
    Vector m;
    Vector v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(Vector::Zero(static_cast<Eigen::Index>(n))), v(m) {}
};

// Bias-corrected Adam update of params in place.
void adam_step(Vector& params, const Vector& grads, AdamState& state, const TrainingConfig& config);

// Collocation samples (t_i, x_i): times in [0, dt], states rows of x (B x 2d).
struct TimedBatch {
    Vector t;
    Matrix x;

    std::size_t size() const { return static_cast<std::size_t>(t.size()); }
    TimedBatch slice(std::size_t begin, std::size_t count) const;
};

TimedBatch make_batch(const std::vector<std::pair<double, PhasePoint>>& samples);
// Uniform t in [0, dt] and x in the box; deterministic per seed.
TimedBatch sample_collocation(const DomainBox& box, double dt, std::size_t n, std::uint64_t seed);

// Tape losses. `scale` multiplies the summed squared residuals (1/N for a mean).
ad::Var pi_loss_tape(ad::Tape& tape, const BoundSympFlow& model, const HamiltonianSystem& system, const TimedBatch& batch,
                     double scale);
ad::Var pi_loss_tape(ad::Tape& tape, const BoundMlp& baseline, const HamiltonianSystem& system, const TimedBatch& batch,
                     double scale);
ad::Var matching_loss_tape(ad::Tape& tape, const BoundSympFlow& model, const HamiltonianSystem& system, const TimedBatch& batch,
                           double scale);

BoundMlp bind_parameters(ad::Tape& tape, const BaselineFlowNet& net, bool trainable);
Vector gather_gradient(const ad::Tape& tape, const BoundMlp& bound);

// Mean squared residual of d/dt psi_t(x0) = J grad H(psi_t(x0)).
double pi_loss(const SympFlowModel& model, const HamiltonianSystem& system, const TimedBatch& batch);
double pi_loss(const BaselineFlowNet& net, const HamiltonianSystem& system, const TimedBatch& batch);
// Same residual for an arbitrary flow, with a central-difference time derivative.
double pi_loss(const std::function<PhasePoint(double, const PhasePoint&)>& flow, const HamiltonianSystem& system,
               const TimedBatch& batch, double fd_step = 1e-5);
// Mean of (H_network(t_i, x_i) - H(x_i))^2.
double hamiltonian_matching_loss(const SympFlowModel& model, const HamiltonianSystem& system,
                                 const TimedBatch& batch);

struct LossBreakdown {
    double total = 0.0;
    double pi = 0.0;
    double match = 0.0;
};

LossBreakdown total_loss(const SympFlowModel& model, const HamiltonianSystem& system, const TimedBatch& pi_batch,
                         const TimedBatch& match_batch, double w_pi = 1.0, double w_match = 1.0);

struct LossGradient {
    LossBreakdown loss;
    Vector gradient;
};

// w_pi L1 + w_match L2 and its parameter gradient (baseline: w_pi L1 only).
LossGradient total_loss_gradient(const SympFlowModel& model, const HamiltonianSystem& system,
                                 const TimedBatch& pi_batch, const TimedBatch& match_batch,
                                 const TrainingConfig& config);
LossGradient total_loss_gradient(const BaselineFlowNet& net, const HamiltonianSystem& system,
                                 const TimedBatch& pi_batch, const TrainingConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double total = 0.0;
    double pi = 0.0;
    double match = 0.0;
};

// Divergence during training. parameters holds the last state with a finite loss.
class TrainingError : public NumericalError {
public:
    TrainingError(const std::string& what, Vector parameters, std::size_t epoch)
        : NumericalError(what), parameters_(std::move(parameters)), epoch_(epoch)
    {
    }
    const Vector& parameters() const { return parameters_; }
    std::size_t epoch() const { return epoch_; } // 1-based, like EpochRecord

private:
    Vector parameters_;
    std::size_t epoch_;
};

template <typename Model>
struct TrainResult {
    Model model;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult<SympFlowModel> train(SympFlowModel model, const HamiltonianSystem& system, const TrainingConfig& config,
                                 const EpochCallback& on_epoch = {});
TrainResult<BaselineFlowNet> train(BaselineFlowNet net, const HamiltonianSystem& system,
                                   const TrainingConfig& config, const EpochCallback& on_epoch = {});

} // namespace sympflow
