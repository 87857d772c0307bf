#pragma once

#include "sympflow/errors.hpp"
#include "sympflow/sympflow.hpp"
#include "sympflow/systems.hpp"

#include <cstddef>
#include <vector>

namespace sympflow {

struct AdaptiveConfig {
    double rtol = 1e-3;
    double atol = 1e-6;
    double initial_step = 0.0; // 0 selects the first step automatically
    std::size_t max_steps = 100000;

    void validate() const;
};

struct StepRecord {
    double t = 0.0;
    PhasePoint x;
    double h = 0.0; // accepted step that reached t (0 for the initial record)
};

// Failure inside an integrator; records holds every step accepted before it.
class IntegrationError : public NumericalError {
public:
    IntegrationError(const std::string& what, std::vector<StepRecord> records)
        : NumericalError(what), records_(std::move(records))
    {
    }
    const std::vector<StepRecord>& records() const { return records_; }

private:
    std::vector<StepRecord> records_;
};

// One Dormand-Prince 5(4) step of size h from (t, x). error is the embedded
// 5th-minus-4th order difference.
struct DopriStep {
    Vector x;
    Vector error;
};
DopriStep dopri5_step(const HamiltonianSystem& system, double t, const Vector& x, double h);

// Adaptive Dormand-Prince 5(4). Starts with the record (0, x0); t_final = 0 returns
// just that record.
std::vector<StepRecord> rk45_integrate(const HamiltonianSystem& system, const PhasePoint& x0, double t_final,
                                       const AdaptiveConfig& cfg = {});

// Same integration, reported at the given non-decreasing times in [0, t_final] through
// the 4th-order continuous extension.
std::vector<TrajectoryPoint> rk45_sample(const HamiltonianSystem& system, const PhasePoint& x0,
                                         const std::vector<double>& times, const AdaptiveConfig& cfg = {});

// Kick-drift-kick leapfrog for separable H = T(p) + U(q). A negative h steps backwards
// and undoes a forward run. Returns n + 1 records starting at x0.
std::vector<StepRecord> stormer_verlet(const HamiltonianSystem& system, const PhasePoint& x0, double h,
                                       std::size_t n);
PhasePoint stormer_verlet_step(const HamiltonianSystem& system, const PhasePoint& x, double h);

} // namespace sympflow
