#pragma once

#include "sympflow/checkpoint.hpp"
#include "sympflow/config.hpp"
#include "sympflow/io.hpp"
#include "sympflow/sympflow.hpp"
#include "sympflow/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sympflow {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2, kExitCheckFailed = 3 };

struct TrainOutcome {
    std::filesystem::path checkpoint;
    std::filesystem::path loss_csv;
    std::vector<EpochRecord> history;
};

// Trains per config and writes <out_dir>/checkpoint.json and <out_dir>/loss.csv
// together. A failed run writes neither. Epochs = 0 saves the initialisation.
TrainOutcome cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

// Window map of a checkpointed model and the long-horizon trajectory built from it.
std::vector<TrajectoryPoint> rollout_checkpoint(const Checkpoint& c, double t_final, const PhasePoint& x0,
                                                std::size_t samples);

struct RolloutRequest {
    std::filesystem::path checkpoint;
    double t_final = 10.0;
    std::size_t samples = 101;
    std::optional<Vector> x0;
    bool with_rk45 = false;
    std::filesystem::path out_dir = ".";
};

struct RolloutOutcome {
    std::vector<TrajectoryPoint> model;
    std::vector<TrajectoryPoint> rk45; // empty unless requested
    std::filesystem::path csv;
    std::optional<std::filesystem::path> rk45_csv;
};

// <out_dir>/trajectory.csv and, with with_rk45, <out_dir>/trajectory_rk45.csv.
RolloutOutcome cmd_rollout(const RolloutRequest& req);

struct DriftRequest {
    std::vector<std::filesystem::path> checkpoints;
    double t_final = 100.0;
    std::size_t samples = 1001;
    std::optional<Vector> x0;
    std::optional<std::string> system; // required when no checkpoint is given
    bool exact = false;                 // harmonic only
    bool rk45 = false;
    bool verlet = false;
    double verlet_step = 0.01;
    std::filesystem::path out_dir = ".";
};

// H(x(t)) - H(x0) on the sample grid per method; writes <out_dir>/drift.csv.
std::vector<DriftRow> cmd_energy_drift(const DriftRequest& req);

struct CheckItem {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::size_t cases = 0;
};

struct CheckReport {
    std::vector<CheckItem> items;
    bool all_pass() const;
};

// Invariant suite on random small models. inject_fault corrupts a layer sign in every
// model used by the map-level checks.
CheckReport cmd_check(std::uint64_t seed, bool inject_fault = false);
std::string format_check_report(const CheckReport& r);

// Full command-line front end; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace sympflow
