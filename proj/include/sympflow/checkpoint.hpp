#pragma once

#include "sympflow/potential.hpp"
#include "sympflow/sympflow.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

namespace sympflow {

// Malformed or incompatible checkpoint document.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
    std::string system;
    std::uint64_t seed = 0;
    double dt = 1.0; // training window; SympFlow models carry their own copy
    std::variant<SympFlowModel, BaselineFlowNet> model;

    bool is_sympflow() const { return std::holds_alternative<SympFlowModel>(model); }
    int dim() const;
};

// JSON document; doubles are written in shortest round-trip form, so
// from_json(to_json(c)) reproduces every parameter bit for bit.
std::string checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace sympflow
