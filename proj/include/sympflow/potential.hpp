#pragma once

#include "sympflow/dual.hpp"
#include "sympflow/errors.hpp"
#include "sympflow/systems.hpp"
#include "sympflow/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sympflow {

using Matrix = Eigen::MatrixXd;

enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

// Affine map y = W x + b. weight is out x in.
struct DenseLayer {
    Matrix weight;
    Eigen::RowVectorXd bias;

    int in_dim() const { return static_cast<int>(weight.cols()); }
    int out_dim() const { return static_cast<int>(weight.rows()); }
};

// Dense MLP with a shared activation on every hidden layer and a linear output.
struct Mlp {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::Tanh;

    int in_dim() const { return layers.front().in_dim(); }
    int out_dim() const { return layers.back().out_dim(); }
    std::vector<int> hidden_widths() const;
    std::size_t parameter_count() const;

    // Weights row-major then bias, layer by layer.
    Vector parameters() const;
    void set_parameters(const Vector& theta);
    bool all_finite() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias; deterministic per seed.
Mlp init_mlp(int in_dim, const std::vector<int>& widths, int out_dim, Activation act, std::uint64_t seed);
Mlp zero_mlp(int in_dim, const std::vector<int>& widths, int out_dim, Activation act);

// Scalar potential V(t, z), z in R^d, with the time prepended to the network input.
// A quadratic form V = a t |z|^2 / 2 is also available for hand-checkable tests.
class PotentialNet {
public:
    enum class Kind { Mlp, Quadratic };

    PotentialNet() = default;
    PotentialNet(int dim, Mlp mlp);
    static PotentialNet quadratic(int dim, double scale = 1.0);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    int input_dim() const { return dim_ + 1; }
    const Mlp& mlp() const { return mlp_; }
    Mlp& mlp() { return mlp_; }
    double quadratic_scale() const { return scale_; }

    std::size_t parameter_count() const;
    Vector parameters() const;
    void set_parameters(const Vector& theta);
    bool all_finite() const;

    // Forward pass for any scalar type with +, * and tanh (double, Dual2).
    template <typename S>
    S evaluate(const S& t, const std::vector<S>& z) const;

private:
    Kind kind_ = Kind::Mlp;
    int dim_ = 0;
    Mlp mlp_;
    double scale_ = 1.0;
};

double eval_potential(const PotentialNet& v, double t, const Vector& z);
PotentialNet init_potential(int dim, const std::vector<int>& widths, Activation act, std::uint64_t seed);

// Unconstrained flow approximator x + t N(t, x), N an MLP R^{2d+1} -> R^{2d}.
class BaselineFlowNet {
public:
    BaselineFlowNet() = default;
    BaselineFlowNet(int dim, Mlp mlp);

    int dim() const { return dim_; }
    const Mlp& mlp() const { return mlp_; }
    Mlp& mlp() { return mlp_; }
    std::size_t parameter_count() const { return mlp_.parameter_count(); }
    Vector parameters() const { return mlp_.parameters(); }
    void set_parameters(const Vector& theta) { mlp_.set_parameters(theta); }

private:
    int dim_ = 0;
    Mlp mlp_;
};

BaselineFlowNet init_baseline(int dim, const std::vector<int>& widths, Activation act, std::uint64_t seed);
PhasePoint eval_baseline(const BaselineFlowNet& net, double t, const PhasePoint& x);

// ---------------------------------------------------------------------------
// Batched evaluation on a tape.

struct BoundMlp {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
    Activation activation = Activation::Tanh;
};

BoundMlp bind_mlp(ad::Tape& tape, const Mlp& mlp, bool trainable);
// Flat gradient in Mlp::parameters() order.
Vector gather_mlp_gradient(const ad::Tape& tape, const BoundMlp& bound);

struct BoundPotential {
    PotentialNet::Kind kind = PotentialNet::Kind::Mlp;
    int dim = 0;
    BoundMlp mlp;
    ad::Var scale;
};

BoundPotential bind_potential(ad::Tape& tape, const PotentialNet& v, bool trainable);
Vector gather_potential_gradient(const ad::Tape& tape, const BoundPotential& bound);

// Derivatives of V at rows s = [t | z] (B x (d+1)).
//   grad:     B x (d+1), column 0 is dV/dt, columns 1..d are grad_z V.
//   grad_dot: derivative of grad along the row-wise direction s_dot, i.e.
//             d/dtau grad(s + tau s_dot) at tau = 0, when s_dot is given.
struct PotentialJet {
    ad::Var value;
    ad::Var grad;
    std::optional<ad::Var> grad_dot;
};

PotentialJet potential_jet(const BoundPotential& v, ad::Var s, const std::optional<ad::Var>& s_dot,
                           bool with_value = false);

// Baseline output rows and their time derivative at rows s = [t | x].
struct BaselineJet {
    ad::Var out;
    ad::Var out_dot;
};

BaselineJet baseline_jet(const BoundMlp& net, ad::Var t, ad::Var x);

// ---------------------------------------------------------------------------

template <typename S>
S PotentialNet::evaluate(const S& t, const std::vector<S>& z) const
{
    if (static_cast<int>(z.size()) != dim_) {
        throw InvalidArgument("potential expects z of dimension " + std::to_string(dim_) + ", got " +
                              std::to_string(z.size()));
    }
    if (kind_ == Kind::Quadratic) {
        S sq(0.0);
        for (const auto& zi : z) {
            sq += zi * zi;
        }
        return S(0.5 * scale_) * t * sq;
    }
    std::vector<S> h;
    h.reserve(z.size() + 1);
    h.push_back(t);
    h.insert(h.end(), z.begin(), z.end());
    for (std::size_t k = 0; k < mlp_.layers.size(); ++k) {
        const auto& layer = mlp_.layers[k];
        const bool hidden = k + 1 < mlp_.layers.size();
        std::vector<S> next(static_cast<std::size_t>(layer.out_dim()));
        for (int i = 0; i < layer.out_dim(); ++i) {
            S acc(layer.bias(i));
            for (int j = 0; j < layer.in_dim(); ++j) {
                acc += S(layer.weight(i, j)) * h[static_cast<std::size_t>(j)];
            }
            if (hidden && mlp_.activation == Activation::Tanh) {
                using std::tanh;
                acc = tanh(acc);
            }
            next[static_cast<std::size_t>(i)] = acc;
        }
        h = std::move(next);
    }
    return h.front();
}

} // namespace sympflow
