#pragma once

#include "sympflow/potential.hpp"
#include "sympflow/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sympflow {

// Malformed or inconsistent run configuration.
class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

struct ModelSpec {
    std::string kind = "sympflow"; // or "baseline"
    int pairs = 3;
    std::vector<int> widths{32, 32};
    Activation activation = Activation::Tanh;
};

struct RolloutSpec {
    double t_final = 100.0;
    std::size_t samples = 1001;
    std::optional<Vector> x0; // defaults per system
};

struct RunConfig {
    std::string system = "harmonic";
    std::uint64_t seed = 0;
    std::string output_dir = "runs";
    ModelSpec model;
    TrainingConfig training;
    RolloutSpec rollout;

    void validate() const;
    Vector initial_state() const;
    // Seeds for the weight initialisation and for the collocation sampler.
    std::uint64_t init_seed() const { return seed; }
    std::uint64_t sampling_seed() const;
};

// Harmonic (1, 0); Henon-Heiles (0.1, -0.1, 0.1, 0.1), in (q, p) order.
Vector default_initial_state(const std::string& system);

// Missing keys keep their defaults; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& c);

} // namespace sympflow
