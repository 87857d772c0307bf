#include "sympflow/config.hpp"

#include "sympflow/io.hpp"
#include "sympflow/random.hpp"
#include "sympflow/systems.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>
#include <type_traits>

namespace sympflow {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where)
{
    if (!j.is_object()) {
        throw ConfigError(where + " must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out)
{
    if (!j.contains(key)) {
        return;
    }
    if constexpr (std::is_unsigned_v<T>) {
        if (!j.at(key).is_number_unsigned()) {
            throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
        }
    }
    out = j.at(key).get<T>();
}

} // namespace

void RunConfig::validate() const
{
    const auto names = registered_systems();
    if (std::find(names.begin(), names.end(), system) == names.end()) {
        throw ConfigError("unknown system '" + system + "'");
    }
    if (model.kind != "sympflow" && model.kind != "baseline") {
        throw ConfigError("model.kind must be 'sympflow' or 'baseline', got '" + model.kind + "'");
    }
    if (model.pairs < 1) {
        throw ConfigError("model.pairs must be at least 1");
    }
    if (model.widths.empty()) {
        throw ConfigError("model.widths must be non-empty");
    }
    for (int w : model.widths) {
        if (w < 1) {
            throw ConfigError("model.widths entries must be positive");
        }
    }
    try {
        training.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    if (!(rollout.t_final >= 0.0)) {
        throw ConfigError("rollout.t_final must be non-negative");
    }
    if (rollout.samples < 1) {
        throw ConfigError("rollout.samples must be at least 1");
    }
    if (rollout.x0 && rollout.x0->size() != 2 * make_system(system).dim) {
        throw ConfigError("rollout.x0 has " + std::to_string(rollout.x0->size()) + " entries, system '" + system +
                          "' needs " + std::to_string(2 * make_system(system).dim));
    }
}

Vector RunConfig::initial_state() const
{
    return rollout.x0 ? *rollout.x0 : default_initial_state(system);
}

std::uint64_t RunConfig::sampling_seed() const
{
    // Separate stream from the per-layer initialisation seeds.
    return derive_seed(seed, 0x5eed5a3b1e000000ULL);
}

Vector default_initial_state(const std::string& system)
{
    if (system == "harmonic") {
        return Vector{{1.0, 0.0}};
    }
    if (system == "henon-heiles") {
        return Vector{{0.1, -0.1, 0.1, 0.1}};
    }
    throw ConfigError("unknown system '" + system + "'");
}

RunConfig parse_run_config(const std::string& json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    try {
        reject_unknown(j, {"system", "seed", "output_dir", "model", "training", "rollout"}, "config");
        read(j, "system", c.system);
        read(j, "seed", c.seed);
        read(j, "output_dir", c.output_dir);
        if (j.contains("model")) {
            const auto& m = j.at("model");
            reject_unknown(m, {"kind", "pairs", "widths", "activation"}, "model");
            read(m, "kind", c.model.kind);
            read(m, "pairs", c.model.pairs);
            read(m, "widths", c.model.widths);
            if (m.contains("activation")) {
                c.model.activation = parse_activation(m.at("activation").get<std::string>());
            }
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            reject_unknown(t,
                           {"dt", "n_collocation", "n_matching", "epochs", "batch_size", "learning_rate", "beta1",
                            "beta2", "epsilon", "w_pi", "w_match", "threads", "chunk_rows"},
                           "training");
            auto& tc = c.training;
            read(t, "dt", tc.dt);
            read(t, "n_collocation", tc.n_collocation);
            read(t, "n_matching", tc.n_matching);
            read(t, "epochs", tc.epochs);
            read(t, "batch_size", tc.batch_size);
            read(t, "learning_rate", tc.learning_rate);
            read(t, "beta1", tc.beta1);
            read(t, "beta2", tc.beta2);
            read(t, "epsilon", tc.epsilon);
            read(t, "w_pi", tc.w_pi);
            read(t, "w_match", tc.w_match);
            read(t, "threads", tc.threads);
            read(t, "chunk_rows", tc.chunk_rows);
        }
        if (j.contains("rollout")) {
            const auto& r = j.at("rollout");
            reject_unknown(r, {"t_final", "samples", "x0"}, "rollout");
            read(r, "t_final", c.rollout.t_final);
            read(r, "samples", c.rollout.samples);
            if (r.contains("x0")) {
                const auto x = r.at("x0").get<std::vector<double>>();
                c.rollout.x0 = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& c)
{
    const auto& t = c.training;
    json j{
        {"system", c.system},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"model",
         {{"kind", c.model.kind},
          {"pairs", c.model.pairs},
          {"widths", c.model.widths},
          {"activation", to_string(c.model.activation)}}},
        {"training",
         {{"dt", t.dt},
          {"n_collocation", t.n_collocation},
          {"n_matching", t.n_matching},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"w_pi", t.w_pi},
          {"w_match", t.w_match},
          {"threads", t.threads},
          {"chunk_rows", t.chunk_rows}}},
        {"rollout", {{"t_final", c.rollout.t_final}, {"samples", c.rollout.samples}}},
    };
    if (c.rollout.x0) {
        j["rollout"]["x0"] = std::vector<double>(c.rollout.x0->data(), c.rollout.x0->data() + c.rollout.x0->size());
    }
    return j.dump(2) + "\n";
}

} // namespace sympflow
