#include "sympflow/checkpoint.hpp"

#include "sympflow/io.hpp"
#include "sympflow/systems.hpp"

#include "json.hpp"

namespace sympflow {

using nlohmann::json;

namespace {

json dense_to_json(const DenseLayer& l)
{
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
            w.push_back(l.weight(i, j));
        }
    }
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    return {{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"weight", w}, {"bias", b}};
}

DenseLayer dense_from_json(const json& j)
{
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto w = j.at("weight").get<std::vector<double>>();
    const auto b = j.at("bias").get<std::vector<double>>();
    if (rows < 1 || cols < 1 || w.size() != static_cast<std::size_t>(rows * cols) ||
        b.size() != static_cast<std::size_t>(rows)) {
        throw CheckpointError("dense layer arrays do not match rows=" + std::to_string(rows) +
                              " cols=" + std::to_string(cols));
    }
    DenseLayer l{Matrix(rows, cols), Eigen::RowVectorXd(rows)};
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j2 = 0; j2 < cols; ++j2) {
            l.weight(i, j2) = w[k++];
        }
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
        l.bias(i) = b[static_cast<std::size_t>(i)];
    }
    return l;
}

json mlp_to_json(const Mlp& m)
{
    json dense = json::array();
    for (const auto& l : m.layers) {
        dense.push_back(dense_to_json(l));
    }
    return dense;
}

Mlp mlp_from_json(const json& dense, Activation act, int in_dim, int out_dim)
{
    Mlp m;
    m.activation = act;
    for (const auto& l : dense) {
        m.layers.push_back(dense_from_json(l));
    }
    if (m.layers.empty()) {
        throw CheckpointError("network has no layers");
    }
    for (std::size_t k = 1; k < m.layers.size(); ++k) {
        if (m.layers[k].in_dim() != m.layers[k - 1].out_dim()) {
            throw CheckpointError("layer " + std::to_string(k + 1) + " does not chain with the previous layer");
        }
    }
    if (m.in_dim() != in_dim || m.out_dim() != out_dim) {
        throw CheckpointError("network maps R^" + std::to_string(m.in_dim()) + " -> R^" +
                              std::to_string(m.out_dim()) + ", expected R^" + std::to_string(in_dim) + " -> R^" +
                              std::to_string(out_dim));
    }
    return m;
}

json potential_to_json(const PotentialNet& v, const char* role, int pair)
{
    json j{{"role", role}, {"pair", pair}};
    if (v.kind() == PotentialNet::Kind::Quadratic) {
        j["kind"] = "quadratic";
        j["scale"] = v.quadratic_scale();
    } else {
        j["kind"] = "mlp";
        j["widths"] = v.mlp().hidden_widths();
        j["activation"] = to_string(v.mlp().activation);
        j["dense"] = mlp_to_json(v.mlp());
    }
    return j;
}

PotentialNet potential_from_json(const json& j, int d)
{
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "quadratic") {
        return PotentialNet::quadratic(d, j.at("scale").get<double>());
    }
    if (kind != "mlp") {
        throw CheckpointError("unknown potential kind '" + kind + "'");
    }
    const auto act = parse_activation(j.at("activation").get<std::string>());
    return PotentialNet(d, mlp_from_json(j.at("dense"), act, d + 1, 1));
}

} // namespace

int Checkpoint::dim() const
{
    return std::visit([](const auto& m) { return m.dim(); }, model);
}

std::string checkpoint_to_json(const Checkpoint& c)
{
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["system"] = c.system;
    j["seed"] = c.seed;
    j["d"] = c.dim();
    if (const auto* m = std::get_if<SympFlowModel>(&c.model)) {
        if (m->sign_fault()) {
            throw CheckpointError("refusing to save a model with an injected fault");
        }
        j["kind"] = "sympflow";
        j["L"] = m->pairs();
        j["dt"] = m->dt();
        const auto& first = m->position_potential(0);
        if (first.kind() == PotentialNet::Kind::Mlp) {
            j["widths"] = first.mlp().hidden_widths();
            j["activation"] = to_string(first.mlp().activation);
        }
        json layers = json::array();
        for (int i = 0; i < m->pairs(); ++i) {
            layers.push_back(potential_to_json(m->position_potential(i), "position", i + 1));
            layers.push_back(potential_to_json(m->momentum_potential(i), "momentum", i + 1));
        }
        j["layers"] = std::move(layers);
    } else {
        const auto& b = std::get<BaselineFlowNet>(c.model);
        j["kind"] = "baseline";
        j["dt"] = c.dt;
        j["widths"] = b.mlp().hidden_widths();
        j["activation"] = to_string(b.mlp().activation);
        j["dense"] = mlp_to_json(b.mlp());
    }
    return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version));
        }
        Checkpoint c;
        c.system = j.at("system").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        const int d = j.at("d").get<int>();
        if (d < 1) {
            throw CheckpointError("checkpoint dimension d must be positive");
        }
        if (make_system(c.system).dim != d) {
            throw CheckpointError("checkpoint d=" + std::to_string(d) + " does not match system '" + c.system + "'");
        }
        const auto kind = j.at("kind").get<std::string>();
        c.dt = j.at("dt").get<double>();
        if (!(c.dt > 0.0)) {
            throw CheckpointError("checkpoint dt must be positive");
        }
        if (kind == "sympflow") {
            const int pairs = j.at("L").get<int>();
            const auto& layers = j.at("layers");
            if (pairs < 1 || layers.size() != static_cast<std::size_t>(2 * pairs)) {
                throw CheckpointError("expected " + std::to_string(2 * pairs) + " layers for L=" +
                                      std::to_string(pairs));
            }
            std::vector<PotentialNet> pos, mom;
            for (std::size_t i = 0; i < layers.size(); ++i) {
                const auto& l = layers[i];
                const char* want = i % 2 == 0 ? "position" : "momentum";
                if (l.at("role").get<std::string>() != want ||
                    l.at("pair").get<std::size_t>() != i / 2 + 1) {
                    throw CheckpointError("layer " + std::to_string(i) + " should be the " + want +
                                          " potential of pair " + std::to_string(i / 2 + 1));
                }
                (i % 2 == 0 ? pos : mom).push_back(potential_from_json(l, d));
            }
            c.model = SympFlowModel(d, c.dt, std::move(pos), std::move(mom));
        } else if (kind == "baseline") {
            const auto act = parse_activation(j.at("activation").get<std::string>());
            c.model = BaselineFlowNet(d, mlp_from_json(j.at("dense"), act, 2 * d + 1, 2 * d));
        } else {
            throw CheckpointError("unknown checkpoint kind '" + kind + "'");
        }
        return c;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c)
{
    write_file_atomic(path, checkpoint_to_json(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    return checkpoint_from_json(read_file(path));
}

} // namespace sympflow
