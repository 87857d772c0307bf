#pragma once

#include "sympflow/sympflow.hpp"
#include "sympflow/systems.hpp"
#include "sympflow/training.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sympflow {

// Error reading or writing an output artifact.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Writes to a sibling temp file and renames it over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Stages several files and publishes them together: nothing is renamed into place
// until commit(), and anything still staged is removed on destruction.
class AtomicOutputs {
public:
    AtomicOutputs() = default;
    AtomicOutputs(const AtomicOutputs&) = delete;
    AtomicOutputs& operator=(const AtomicOutputs&) = delete;
    ~AtomicOutputs();

    void stage(const std::filesystem::path& path, const std::string& contents);
    void commit();

private:
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_; // (temp, final)
};

std::string read_file(const std::filesystem::path& path);

// Shortest text that parses back to the same double.
std::string format_double(double x);

// t,q1..qd,p1..pd,energy
std::string trajectory_csv(const HamiltonianSystem& system, const std::vector<TrajectoryPoint>& points);
// epoch,loss_total,loss_pi,loss_match
std::string loss_history_csv(const std::vector<EpochRecord>& history);

struct DriftRow {
    std::string method;
    double t = 0.0;
    double drift = 0.0;
};
// method,t,drift
std::string drift_csv(const std::vector<DriftRow>& rows);

} // namespace sympflow
