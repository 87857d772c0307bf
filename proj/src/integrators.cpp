#include "sympflow/integrators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>

namespace sympflow {

namespace {

// Dormand-Prince 5(4) tableau; the last row of kA is the 5th-order weight vector.
constexpr double kA[6][6] = {
    {1.0 / 5.0, 0, 0, 0, 0, 0},
    {3.0 / 40.0, 9.0 / 40.0, 0, 0, 0, 0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0, 0, 0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0, 0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0},
};
// b5 - b4 (with the FSAL stage).
constexpr std::array<double, 7> kE{-71.0 / 57600.0, 0.0, 71.0 / 16695.0, -71.0 / 1920.0,
                                   17253.0 / 339200.0, -22.0 / 525.0, 1.0 / 40.0};
// Continuous extension: x(t + s h) = x + h sum_i k_i sum_j P[i][j] s^(j+1).
constexpr double kP[7][4] = {
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0},
};

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;

using Stages = std::array<Vector, 7>;

Vector field(const HamiltonianSystem& system, const Vector& x)
{
    return vector_field(system, PhasePoint::from_state(x));
}

// Stages 2..7 given k[0] = f(x); returns the 5th-order solution.
Vector dopri_stages(const HamiltonianSystem& system, const Vector& x, double h, Stages& k)
{
    for (int s = 1; s < 7; ++s) {
        Vector y = x;
        for (int j = 0; j < s; ++j) {
            if (kA[s - 1][j] != 0.0) {
                y += h * kA[s - 1][j] * k[static_cast<std::size_t>(j)];
            }
        }
        if (s == 6) {
            k[6] = field(system, y);
            return y;
        }
        k[static_cast<std::size_t>(s)] = field(system, y);
    }
    return x;
}

Vector error_estimate(const Stages& k, double h)
{
    Vector e = Vector::Zero(k[0].size());
    for (std::size_t i = 0; i < 7; ++i) {
        e += kE[i] * k[i];
    }
    return h * e;
}

// RMS of err / (atol + rtol max(|x|, |y|)).
double error_norm(const Vector& err, const Vector& x, const Vector& y, const AdaptiveConfig& cfg)
{
    const Vector scale = (cfg.atol + cfg.rtol * x.cwiseAbs().cwiseMax(y.cwiseAbs()).array()).matrix();
    return std::sqrt((err.array() / scale.array()).square().mean());
}

// Hairer, Norsett & Wanner starting-step heuristic for a 5th-order method.
double initial_step(const HamiltonianSystem& system, const Vector& x, const Vector& f0, double span,
                    const AdaptiveConfig& cfg)
{
    const Vector scale = (cfg.atol + cfg.rtol * x.cwiseAbs().array()).matrix();
    const double d0 = std::sqrt((x.array() / scale.array()).square().mean());
    const double d1 = std::sqrt((f0.array() / scale.array()).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    const Vector f1 = field(system, x + h0 * f0);
    const double d2 = std::sqrt(((f1 - f0).array() / scale.array()).square().mean()) / h0;
    const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    return std::min({100.0 * h0, h1, span});
}

struct Accepted {
    double t0;
    double h;
    const Vector& x0;
    const Vector& x1;
    const Stages& k;
};

// Adaptive driver; on_step sees every accepted step with its stages.
void integrate(const HamiltonianSystem& system, const Vector& x0, double t_final, const AdaptiveConfig& cfg,
               std::vector<StepRecord>& records, const std::function<void(const Accepted&)>& on_step)
{
    double t = 0.0;
    Vector x = x0;
    Stages k;
    k[0] = field(system, x);
    double h = cfg.initial_step > 0.0 ? std::min(cfg.initial_step, t_final)
                                      : initial_step(system, x, k[0], t_final, cfg);
    std::size_t steps = 0;
    bool rejected = false;
    while (t < t_final) {
        if (steps >= cfg.max_steps) {
            throw IntegrationError("rk45: exceeded max_steps=" + std::to_string(cfg.max_steps) + " at t=" +
                                       std::to_string(t),
                                   std::move(records));
        }
        ++steps;
        const bool last = t + h >= t_final;
        const double step = last ? t_final - t : h;
        const Vector y = dopri_stages(system, x, step, k);
        const double err = error_norm(error_estimate(k, step), x, y, cfg);
        if (!std::isfinite(err) || !y.allFinite()) {
            throw IntegrationError("rk45: non-finite state at t=" + std::to_string(t), std::move(records));
        }
        if (err <= 1.0) {
            const double t_next = last ? t_final : t + step;
            on_step({t, step, x, y, k});
            records.push_back({t_next, PhasePoint::from_state(y), step});
            t = t_next;
            x = y;
            k[0] = k[6];
            const double factor = err == 0.0 ? kMaxFactor : kSafety * std::pow(err, -1.0 / 5.0);
            h = step * std::min(factor, rejected ? 1.0 : kMaxFactor);
            rejected = false;
        } else {
            const double factor = kSafety * std::pow(err, -1.0 / 5.0);
            h = step * std::clamp(factor, kMinFactor, 1.0);
            rejected = true;
            if (h < 1e-14 * std::max(1.0, std::abs(t))) {
                throw IntegrationError("rk45: step size underflow at t=" + std::to_string(t), std::move(records));
            }
        }
    }
}

void check_rk45_inputs(const HamiltonianSystem& system, const PhasePoint& x0, double t_final,
                       const AdaptiveConfig& cfg)
{
    cfg.validate();
    if (x0.dim() != system.dim) {
        throw InvalidArgument("rk45: initial state has dimension " + std::to_string(2 * x0.dim()) + ", expected " +
                              std::to_string(2 * system.dim));
    }
    if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
        throw InvalidArgument("rk45: t_final must be finite and non-negative");
    }
}

Vector interpolate(const Accepted& s, double t)
{
    const double theta = (t - s.t0) / s.h;
    const std::array<double, 4> pw{theta, theta * theta, theta * theta * theta, theta * theta * theta * theta};
    Vector out = s.x0;
    for (std::size_t i = 0; i < 7; ++i) {
        double c = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            c += kP[i][j] * pw[j];
        }
        if (c != 0.0) {
            out += s.h * c * s.k[i];
        }
    }
    return out;
}

} // namespace

void AdaptiveConfig::validate() const
{
    if (!(rtol > 0.0) || !(atol > 0.0)) {
        throw InvalidArgument("rk45: rtol and atol must be positive");
    }
    if (!(initial_step >= 0.0)) {
        throw InvalidArgument("rk45: initial_step must be non-negative");
    }
    if (max_steps == 0) {
        throw InvalidArgument("rk45: max_steps must be positive");
    }
}

DopriStep dopri5_step(const HamiltonianSystem& system, double /*t*/, const Vector& x, double h)
{
    Stages k;
    k[0] = field(system, x);
    Vector y = dopri_stages(system, x, h, k);
    return {std::move(y), error_estimate(k, h)};
}

std::vector<StepRecord> rk45_integrate(const HamiltonianSystem& system, const PhasePoint& x0, double t_final,
                                       const AdaptiveConfig& cfg)
{
    check_rk45_inputs(system, x0, t_final, cfg);
    std::vector<StepRecord> records{{0.0, x0, 0.0}};
    if (t_final == 0.0) {
        return records;
    }
    integrate(system, x0.state(), t_final, cfg, records, [](const Accepted&) {});
    return records;
}

std::vector<TrajectoryPoint> rk45_sample(const HamiltonianSystem& system, const PhasePoint& x0,
                                         const std::vector<double>& times, const AdaptiveConfig& cfg)
{
    if (times.empty()) {
        return {};
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 0.0) || (i > 0 && times[i] < times[i - 1])) {
            throw InvalidArgument("rk45: sample times must be non-negative and non-decreasing");
        }
    }
    const double t_final = times.back();
    check_rk45_inputs(system, x0, t_final, cfg);

    std::vector<TrajectoryPoint> out;
    out.reserve(times.size());
    std::size_t next = 0;
    while (next < times.size() && times[next] == 0.0) {
        out.push_back({0.0, x0});
        ++next;
    }
    if (next == times.size()) {
        return out;
    }
    std::vector<StepRecord> records{{0.0, x0, 0.0}};
    integrate(system, x0.state(), t_final, cfg, records, [&](const Accepted& s) {
        const double t1 = s.t0 + s.h;
        while (next < times.size() && (times[next] <= t1 || t1 >= t_final)) {
            const double t = times[next];
            out.push_back({t, PhasePoint::from_state(t == t1 ? s.x1 : interpolate(s, t))});
            ++next;
        }
    });
    return out;
}

PhasePoint stormer_verlet_step(const HamiltonianSystem& system, const PhasePoint& x, double h)
{
    const int d = system.dim;
    PhasePoint y = x;
    y.p -= 0.5 * h * eval_energy_gradient(system, y).head(d);
    y.q += h * eval_energy_gradient(system, y).tail(d);
    y.p -= 0.5 * h * eval_energy_gradient(system, y).head(d);
    return y;
}

std::vector<StepRecord> stormer_verlet(const HamiltonianSystem& system, const PhasePoint& x0, double h,
                                       std::size_t n)
{
    if (!system.separable) {
        throw UnsupportedError("stormer_verlet: system '" + system.name + "' is not separable");
    }
    if (x0.dim() != system.dim) {
        throw InvalidArgument("stormer_verlet: initial state has dimension " + std::to_string(2 * x0.dim()) +
                              ", expected " + std::to_string(2 * system.dim));
    }
    if (!std::isfinite(h) || h == 0.0) {
        throw InvalidArgument("stormer_verlet: step must be finite and non-zero");
    }
    std::vector<StepRecord> records;
    records.reserve(n + 1);
    records.push_back({0.0, x0, 0.0});
    PhasePoint x = x0;
    for (std::size_t i = 1; i <= n; ++i) {
        x = stormer_verlet_step(system, x, h);
        if (!x.q.allFinite() || !x.p.allFinite()) {
            throw IntegrationError("stormer_verlet: non-finite state at step " + std::to_string(i),
                                   std::move(records));
        }
        records.push_back({static_cast<double>(i) * h, x, h});
    }
    return records;
}

} // namespace sympflow
