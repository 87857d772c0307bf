#include "sympflow/training.hpp"

#include "sympflow/random.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sympflow {

void TrainingConfig::validate() const
{
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw InvalidArgument("training: dt must be positive");
    }
    if (n_collocation < 1 || n_matching < 1) {
        throw InvalidArgument("training: sample counts N and M must be at least 1");
    }
    if (batch_size < 1) {
        throw InvalidArgument("training: batch size must be at least 1");
    }
    if (!(learning_rate > 0.0)) {
        throw InvalidArgument("training: learning rate must be positive");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw InvalidArgument("training: Adam betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw InvalidArgument("training: Adam epsilon must be positive");
    }
    if (w_pi < 0.0 || w_match < 0.0) {
        throw InvalidArgument("training: loss weights must be non-negative");
    }
    if (threads < 1) {
        throw InvalidArgument("training: threads must be at least 1");
    }
    if (chunk_rows < 1) {
        throw InvalidArgument("training: chunk_rows must be at least 1");
    }
}

void adam_step(Vector& params, const Vector& grads, AdamState& state, const TrainingConfig& config)
{
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw InvalidArgument("adam_step: parameter, gradient and moment lengths differ");
    }
    for (Eigen::Index i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads(i))) {
            throw NumericalError("adam_step: non-finite gradient at parameter index " + std::to_string(i));
        }
    }
    state.step += 1;
    const double k = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, k);
    const double c2 = 1.0 - std::pow(config.beta2, k);
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
    const Vector m_hat = state.m / c1;
    const Vector v_hat = state.v / c2;
    params.array() -= config.learning_rate * m_hat.array() / (v_hat.array().sqrt() + config.epsilon);
}

TimedBatch TimedBatch::slice(std::size_t begin, std::size_t count) const
{
    if (begin + count > size()) {
        throw InvalidArgument("batch slice out of range");
    }
    const auto b = static_cast<Eigen::Index>(begin);
    const auto n = static_cast<Eigen::Index>(count);
    return {t.segment(b, n), x.middleRows(b, n)};
}

TimedBatch make_batch(const std::vector<std::pair<double, PhasePoint>>& samples)
{
    if (samples.empty()) {
        throw InvalidArgument("batch must be non-empty");
    }
    const auto n = static_cast<Eigen::Index>(samples.size());
    const auto dim = 2 * samples.front().second.dim();
    TimedBatch b{Vector(n), Matrix(n, dim)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& [t, x] = samples[static_cast<std::size_t>(i)];
        if (2 * x.dim() != dim) {
            throw InvalidArgument("batch samples have inconsistent dimensions");
        }
        b.t(i) = t;
        b.x.row(i) = x.state().transpose();
    }
    return b;
}

TimedBatch sample_collocation(const DomainBox& box, double dt, std::size_t n, std::uint64_t seed)
{
    if (n == 0) {
        throw InvalidArgument("sample_collocation: n must be at least 1");
    }
    const auto points = sample_domain(box, n, derive_seed(seed, 0));
    Rng rng(derive_seed(seed, 1));
    const auto rows = static_cast<Eigen::Index>(n);
    TimedBatch b{Vector(rows), Matrix(rows, box.phase_dim())};
    for (Eigen::Index i = 0; i < rows; ++i) {
        b.t(i) = rng.uniform(0.0, dt);
        b.x.row(i) = points[static_cast<std::size_t>(i)].state().transpose();
    }
    return b;
}

namespace {

void check_batch(const TimedBatch& batch, const HamiltonianSystem& system)
{
    if (batch.size() == 0) {
        throw InvalidArgument("loss batch must be non-empty");
    }
    if (batch.x.cols() != 2 * system.dim || batch.x.rows() != batch.t.size()) {
        throw InvalidArgument("loss batch does not match the system dimension " + std::to_string(2 * system.dim));
    }
}

struct BatchVars {
    ad::Var t;
    ad::Var q;
    ad::Var p;
    ad::Var x;
};

BatchVars batch_vars(ad::Tape& tape, const TimedBatch& batch, int dim)
{
    BatchVars v;
    v.t = tape.constant(Matrix(batch.t));
    v.x = tape.constant(batch.x);
    v.q = tape.constant(Matrix(batch.x.leftCols(dim)));
    v.p = tape.constant(Matrix(batch.x.rightCols(dim)));
    return v;
}

// Sum over rows of ||(q_dot, p_dot) - J grad H(q, p)||^2.
ad::Var residual_sum(const HamiltonianSystem& system, ad::Var q, ad::Var p, ad::Var q_dot, ad::Var p_dot)
{
    using namespace ad;
    const auto d = q.cols();
    auto grad = system.tape_energy_gradient(q, p);
    auto res_q = q_dot - cols(grad, d, d);
    auto res_p = p_dot + cols(grad, 0, d);
    return sum(square(res_q)) + sum(square(res_p));
}

} // namespace

ad::Var pi_loss_tape(ad::Tape& tape, const BoundSympFlow& model, const HamiltonianSystem& system, const TimedBatch& batch,
                     double scale)
{
    check_batch(batch, system);
    auto v = batch_vars(tape, batch, system.dim);
    auto s = forward_batch(model, v.t, v.q, v.p, true);
    return affine(residual_sum(system, s.q, s.p, *s.q_dot, *s.p_dot), scale, 0.0);
}

ad::Var pi_loss_tape(ad::Tape& tape, const BoundMlp& baseline, const HamiltonianSystem& system, const TimedBatch& batch,
                     double scale)
{
    check_batch(batch, system);
    auto v = batch_vars(tape, batch, system.dim);
    auto jet = baseline_jet(baseline, v.t, v.x);
    const auto d = system.dim;
    return affine(residual_sum(system, cols(jet.out, 0, d), cols(jet.out, d, d), cols(jet.out_dot, 0, d),
                               cols(jet.out_dot, d, d)),
                  scale, 0.0);
}

ad::Var matching_loss_tape(ad::Tape& tape, const BoundSympFlow& model, const HamiltonianSystem& system, const TimedBatch& batch,
                           double scale)
{
    check_batch(batch, system);
    auto v = batch_vars(tape, batch, system.dim);
    Matrix target(static_cast<Eigen::Index>(batch.size()), 1);
    for (Eigen::Index i = 0; i < target.rows(); ++i) {
        target(i, 0) = system.energy(PhasePoint::from_state(batch.x.row(i).transpose()));
    }
    auto h = network_hamiltonian_batch(model, v.t, v.q, v.p);
    return affine(sum(square(h - tape.constant(target))), scale, 0.0);
}

double pi_loss(const SympFlowModel& model, const HamiltonianSystem& system, const TimedBatch& batch)
{
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    return pi_loss_tape(tape, bound, system, batch, 1.0 / static_cast<double>(batch.size())).value()(0, 0);
}

double pi_loss(const BaselineFlowNet& net, const HamiltonianSystem& system, const TimedBatch& batch)
{
    ad::Tape tape;
    auto bound = bind_mlp(tape, net.mlp(), false);
    return pi_loss_tape(tape, bound, system, batch, 1.0 / static_cast<double>(batch.size())).value()(0, 0);
}

double pi_loss(const std::function<PhasePoint(double, const PhasePoint&)>& flow, const HamiltonianSystem& system,
               const TimedBatch& batch, double fd_step)
{
    check_batch(batch, system);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double t = batch.t(ii);
        const auto x0 = PhasePoint::from_state(batch.x.row(ii).transpose());
        const Vector x_dot = (flow(t + fd_step, x0).state() - flow(t - fd_step, x0).state()) / (2.0 * fd_step);
        total += (x_dot - vector_field(system, flow(t, x0))).squaredNorm();
    }
    return total / static_cast<double>(batch.size());
}

double hamiltonian_matching_loss(const SympFlowModel& model, const HamiltonianSystem& system,
                                 const TimedBatch& batch)
{
    ad::Tape tape;
    auto bound = bind_parameters(tape, model, false);
    return matching_loss_tape(tape, bound, system, batch, 1.0 / static_cast<double>(batch.size())).value()(0, 0);
}

LossBreakdown total_loss(const SympFlowModel& model, const HamiltonianSystem& system, const TimedBatch& pi_batch,
                         const TimedBatch& match_batch, double w_pi, double w_match)
{
    LossBreakdown l;
    l.pi = pi_loss(model, system, pi_batch);
    l.match = hamiltonian_matching_loss(model, system, match_batch);
    l.total = w_pi * l.pi + w_match * l.match;
    return l;
}

// ---------------------------------------------------------------------------

BoundMlp bind_parameters(ad::Tape& tape, const BaselineFlowNet& net, bool trainable)
{
    return bind_mlp(tape, net.mlp(), trainable);
}

Vector gather_gradient(const ad::Tape& tape, const BoundMlp& bound)
{
    return gather_mlp_gradient(tape, bound);
}

namespace {

struct ChunkRange {
    std::size_t begin = 0;
    std::size_t count = 0;
};

// Fixed-size row chunks. Small tapes stay cache-resident, and the chunking does not
// depend on the thread count, so sums are identical for any number of workers.
std::vector<ChunkRange> split(std::size_t n, std::size_t rows)
{
    std::vector<ChunkRange> out;
    for (std::size_t b = 0; b < n; b += rows) {
        out.push_back({b, std::min(rows, n - b)});
    }
    return out;
}

// Runs chunk(i) -> LossGradient for every chunk, possibly on worker threads, and
// sums the results in chunk order.
template <typename ChunkFn>
LossGradient reduce_chunks(std::size_t chunks, int threads, ChunkFn&& chunk)
{
    std::vector<LossGradient> parts(chunks);
    if (threads <= 1 || chunks <= 1) {
        for (std::size_t i = 0; i < chunks; ++i) {
            parts[i] = chunk(i);
        }
    } else {
        std::vector<std::exception_ptr> errors(chunks);
        std::vector<std::thread> workers;
        const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), chunks);
        for (std::size_t w = 0; w < n_workers; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t i = w; i < chunks; i += n_workers) {
                    try {
                        parts[i] = chunk(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& w : workers) {
            w.join();
        }
        for (auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    LossGradient total = parts.front();
    for (std::size_t i = 1; i < chunks; ++i) {
        total.loss.total += parts[i].loss.total;
        total.loss.pi += parts[i].loss.pi;
        total.loss.match += parts[i].loss.match;
        total.gradient += parts[i].gradient;
    }
    return total;
}

} // namespace

LossGradient total_loss_gradient(const SympFlowModel& model, const HamiltonianSystem& system,
                                 const TimedBatch& pi_batch, const TimedBatch& match_batch,
                                 const TrainingConfig& config)
{
    const auto pi_chunks = split(pi_batch.size(), config.chunk_rows);
    const auto match_chunks = split(match_batch.size(), config.chunk_rows);
    const std::size_t chunks = std::max(pi_chunks.size(), match_chunks.size());
    const double pi_scale = 1.0 / static_cast<double>(pi_batch.size());
    const double match_scale = 1.0 / static_cast<double>(match_batch.size());
    return reduce_chunks(chunks, config.threads, [&](std::size_t i) {
        LossBreakdown parts_loss;
        auto r = param_gradient(model, [&](ad::Tape& tape, const BoundSympFlow& bound) {
            std::optional<ad::Var> total;
            if (i < pi_chunks.size()) {
                auto l1 = pi_loss_tape(tape, bound, system, pi_batch.slice(pi_chunks[i].begin, pi_chunks[i].count),
                                       pi_scale);
                parts_loss.pi = l1.value()(0, 0);
                total = affine(l1, config.w_pi, 0.0);
            }
            if (i < match_chunks.size() && config.w_match != 0.0) {
                auto l2 = matching_loss_tape(
                    tape, bound, system, match_batch.slice(match_chunks[i].begin, match_chunks[i].count), match_scale);
                parts_loss.match = l2.value()(0, 0);
                auto weighted = affine(l2, config.w_match, 0.0);
                total = total ? *total + weighted : weighted;
            }
            return total ? *total : tape.constant(1, 1, 0.0);
        });
        parts_loss.total = r.loss;
        return LossGradient{parts_loss, r.gradient};
    });
}

LossGradient total_loss_gradient(const BaselineFlowNet& net, const HamiltonianSystem& system,
                                 const TimedBatch& pi_batch, const TrainingConfig& config)
{
    const auto chunks = split(pi_batch.size(), config.chunk_rows);
    const double scale = 1.0 / static_cast<double>(pi_batch.size());
    return reduce_chunks(chunks.size(), config.threads, [&](std::size_t i) {
        LossBreakdown parts_loss;
        auto r = param_gradient(net, [&](ad::Tape& tape, const BoundMlp& bound) {
            auto l1 = pi_loss_tape(tape, bound, system, pi_batch.slice(chunks[i].begin, chunks[i].count), scale);
            parts_loss.pi = l1.value()(0, 0);
            return affine(l1, config.w_pi, 0.0);
        });
        parts_loss.total = r.loss;
        return LossGradient{parts_loss, r.gradient};
    });
}

namespace {

struct StepPlan {
    std::size_t steps = 0;
    std::size_t pi_rows = 0;
    std::size_t match_rows = 0;
};

StepPlan plan_steps(const TrainingConfig& c, bool with_match)
{
    const std::size_t largest = with_match ? std::max(c.n_collocation, c.n_matching) : c.n_collocation;
    StepPlan plan;
    plan.steps = (largest + c.batch_size - 1) / c.batch_size;
    plan.pi_rows = (c.n_collocation + plan.steps - 1) / plan.steps;
    plan.match_rows = (c.n_matching + plan.steps - 1) / plan.steps;
    return plan;
}

TimedBatch step_slice(const TimedBatch& b, std::size_t step, std::size_t rows)
{
    const std::size_t begin = std::min(step * rows, b.size() - 1);
    const std::size_t count = std::min(rows, b.size() - begin);
    return b.slice(begin, count);
}

template <typename Model, typename StepFn>
TrainResult<Model> run_training(Model model, const HamiltonianSystem& system, const TrainingConfig& config,
                                bool with_match, const EpochCallback& on_epoch, StepFn&& step_gradient)
{
    config.validate();
    if (model.dim() != system.dim) {
        throw InvalidArgument("model dimension does not match system " + system.name);
    }
    TrainResult<Model> result{std::move(model), {}};
    Vector theta = result.model.parameters();
    AdamState adam(static_cast<std::size_t>(theta.size()));
    const auto plan = plan_steps(config, with_match);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto pi_all = sample_collocation(system.domain, config.dt, config.n_collocation,
                                               derive_seed(config.seed, 2 * epoch));
        const auto match_all = sample_collocation(system.domain, config.dt, config.n_matching,
                                                  derive_seed(config.seed, 2 * epoch + 1));
        EpochRecord rec;
        rec.epoch = epoch + 1;
        for (std::size_t step = 0; step < plan.steps; ++step) {
            LossGradient lg;
            try {
                lg = step_gradient(result.model, step_slice(pi_all, step, plan.pi_rows),
                                   step_slice(match_all, step, plan.match_rows));
            } catch (const NumericalError& e) {
                throw TrainingError(std::string("training diverged at epoch ") + std::to_string(epoch + 1) + ": " +
                                        e.what(),
                                    theta, epoch + 1);
            }
            rec.total += lg.loss.total;
            rec.pi += lg.loss.pi;
            rec.match += lg.loss.match;
            Vector next = theta;
            adam_step(next, lg.gradient, adam, config);
            if (!next.allFinite()) {
                throw TrainingError("training produced non-finite parameters at epoch " + std::to_string(epoch + 1),
                                    theta, epoch + 1);
            }
            theta = std::move(next);
            result.model.set_parameters(theta);
        }
        const auto steps = static_cast<double>(plan.steps);
        rec.total /= steps;
        rec.pi /= steps;
        rec.match /= steps;
        result.history.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
    }
    return result;
}

} // namespace

TrainResult<SympFlowModel> train(SympFlowModel model, const HamiltonianSystem& system, const TrainingConfig& config,
                                 const EpochCallback& on_epoch)
{
    return run_training(std::move(model), system, config, true, on_epoch,
                        [&](const SympFlowModel& m, const TimedBatch& pi, const TimedBatch& match) {
                            return total_loss_gradient(m, system, pi, match, config);
                        });
}

TrainResult<BaselineFlowNet> train(BaselineFlowNet net, const HamiltonianSystem& system,
                                   const TrainingConfig& config, const EpochCallback& on_epoch)
{
    return run_training(std::move(net), system, config, false, on_epoch,
                        [&](const BaselineFlowNet& m, const TimedBatch& pi, const TimedBatch&) {
                            return total_loss_gradient(m, system, pi, config);
                        });
}

} // namespace sympflow
