#include "sympflow/potential.hpp"

#include "sympflow/random.hpp"

#include <cmath>

namespace sympflow {

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
    }
    return "unknown";
}

Activation parse_activation(const std::string& name)
{
    if (name == "tanh") {
        return Activation::Tanh;
    }
    if (name == "identity") {
        return Activation::Identity;
    }
    throw InvalidArgument("unknown activation '" + name + "' (expected tanh or identity)");
}

std::vector<int> Mlp::hidden_widths() const
{
    std::vector<int> w;
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
        w.push_back(layers[k].out_dim());
    }
    return w;
}

std::size_t Mlp::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
}

Vector Mlp::parameters() const
{
    Vector theta(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (const auto& l : layers) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
                theta(k++) = l.weight(i, j);
            }
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            theta(k++) = l.bias(i);
        }
    }
    return theta;
}

void Mlp::set_parameters(const Vector& theta)
{
    if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
        throw InvalidArgument("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                              std::to_string(parameter_count()));
    }
    Eigen::Index k = 0;
    for (auto& l : layers) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
                l.weight(i, j) = theta(k++);
            }
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            l.bias(i) = theta(k++);
        }
    }
}

bool Mlp::all_finite() const
{
    for (const auto& l : layers) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) {
            return false;
        }
    }
    return true;
}

namespace {

std::vector<int> layer_dims(int in_dim, const std::vector<int>& widths, int out_dim)
{
    if (in_dim < 1 || out_dim < 1) {
        throw InvalidArgument("network input and output dimensions must be positive");
    }
    std::vector<int> dims{in_dim};
    for (int w : widths) {
        if (w <= 0) {
            throw InvalidArgument("layer widths must be positive, got " + std::to_string(w));
        }
        dims.push_back(w);
    }
    dims.push_back(out_dim);
    return dims;
}

} // namespace

Mlp zero_mlp(int in_dim, const std::vector<int>& widths, int out_dim, Activation act)
{
    const auto dims = layer_dims(in_dim, widths, out_dim);
    Mlp m;
    m.activation = act;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        m.layers.push_back({Matrix::Zero(dims[k + 1], dims[k]), Eigen::RowVectorXd::Zero(dims[k + 1])});
    }
    return m;
}

Mlp init_mlp(int in_dim, const std::vector<int>& widths, int out_dim, Activation act, std::uint64_t seed)
{
    Mlp m = zero_mlp(in_dim, widths, out_dim, act);
    Rng rng(seed);
    for (auto& l : m.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim()));
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
                l.weight(i, j) = rng.uniform(-bound, bound);
            }
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            l.bias(i) = rng.uniform(-bound, bound);
        }
    }
    return m;
}

PotentialNet::PotentialNet(int dim, Mlp mlp) : kind_(Kind::Mlp), dim_(dim), mlp_(std::move(mlp))
{
    if (dim < 1) {
        throw InvalidArgument("potential dimension must be at least 1");
    }
    if (mlp_.layers.empty() || mlp_.in_dim() != dim + 1 || mlp_.out_dim() != 1) {
        throw InvalidArgument("potential network must map R^(d+1) to R");
    }
    for (std::size_t k = 1; k < mlp_.layers.size(); ++k) {
        if (mlp_.layers[k].in_dim() != mlp_.layers[k - 1].out_dim()) {
            throw InvalidArgument("potential network layers are not chained consistently");
        }
    }
}

PotentialNet PotentialNet::quadratic(int dim, double scale)
{
    if (dim < 1) {
        throw InvalidArgument("potential dimension must be at least 1");
    }
    PotentialNet v;
    v.kind_ = Kind::Quadratic;
    v.dim_ = dim;
    v.scale_ = scale;
    return v;
}

std::size_t PotentialNet::parameter_count() const
{
    return kind_ == Kind::Quadratic ? 1 : mlp_.parameter_count();
}

Vector PotentialNet::parameters() const
{
    if (kind_ == Kind::Quadratic) {
        return Vector::Constant(1, scale_);
    }
    return mlp_.parameters();
}

void PotentialNet::set_parameters(const Vector& theta)
{
    if (kind_ == Kind::Quadratic) {
        if (theta.size() != 1) {
            throw InvalidArgument("quadratic potential has exactly one parameter");
        }
        scale_ = theta(0);
        return;
    }
    mlp_.set_parameters(theta);
}

bool PotentialNet::all_finite() const
{
    return kind_ == Kind::Quadratic ? std::isfinite(scale_) : mlp_.all_finite();
}

double eval_potential(const PotentialNet& v, double t, const Vector& z)
{
    if (z.size() != v.dim()) {
        throw InvalidArgument("potential expects z of dimension " + std::to_string(v.dim()) + ", got " +
                              std::to_string(z.size()));
    }
    if (!v.all_finite()) {
        throw NumericalError("potential has non-finite parameters");
    }
    std::vector<double> zz(z.data(), z.data() + z.size());
    return v.evaluate(t, zz);
}

PotentialNet init_potential(int dim, const std::vector<int>& widths, Activation act, std::uint64_t seed)
{
    if (widths.empty()) {
        throw InvalidArgument("init_potential: widths must be non-empty");
    }
    return PotentialNet(dim, init_mlp(dim + 1, widths, 1, act, seed));
}

BaselineFlowNet::BaselineFlowNet(int dim, Mlp mlp) : dim_(dim), mlp_(std::move(mlp))
{
    if (dim < 1) {
        throw InvalidArgument("baseline dimension must be at least 1");
    }
    if (mlp_.layers.empty() || mlp_.in_dim() != 2 * dim + 1 || mlp_.out_dim() != 2 * dim) {
        throw InvalidArgument("baseline network must map R^(2d+1) to R^(2d)");
    }
}

BaselineFlowNet init_baseline(int dim, const std::vector<int>& widths, Activation act, std::uint64_t seed)
{
    if (widths.empty()) {
        throw InvalidArgument("init_baseline: widths must be non-empty");
    }
    return BaselineFlowNet(dim, init_mlp(2 * dim + 1, widths, 2 * dim, act, seed));
}

// ---------------------------------------------------------------------------

BoundMlp bind_mlp(ad::Tape& tape, const Mlp& mlp, bool trainable)
{
    BoundMlp b;
    b.activation = mlp.activation;
    for (const auto& l : mlp.layers) {
        if (trainable) {
            b.weights.push_back(tape.leaf(l.weight));
            b.biases.push_back(tape.leaf(l.bias));
        } else {
            b.weights.push_back(tape.constant(l.weight));
            b.biases.push_back(tape.constant(l.bias));
        }
    }
    return b;
}

Vector gather_mlp_gradient(const ad::Tape& tape, const BoundMlp& bound)
{
    std::size_t n = 0;
    for (std::size_t k = 0; k < bound.weights.size(); ++k) {
        n += static_cast<std::size_t>(bound.weights[k].value().size() + bound.biases[k].value().size());
    }
    Vector g(static_cast<Eigen::Index>(n));
    Eigen::Index idx = 0;
    for (std::size_t k = 0; k < bound.weights.size(); ++k) {
        const Matrix gw = tape.grad(bound.weights[k]);
        for (Eigen::Index i = 0; i < gw.rows(); ++i) {
            for (Eigen::Index j = 0; j < gw.cols(); ++j) {
                g(idx++) = gw(i, j);
            }
        }
        const Matrix gb = tape.grad(bound.biases[k]);
        for (Eigen::Index j = 0; j < gb.size(); ++j) {
            g(idx++) = gb(0, j);
        }
    }
    return g;
}

BoundPotential bind_potential(ad::Tape& tape, const PotentialNet& v, bool trainable)
{
    BoundPotential b;
    b.kind = v.kind();
    b.dim = v.dim();
    if (v.kind() == PotentialNet::Kind::Quadratic) {
        const Matrix a = Matrix::Constant(1, 1, v.quadratic_scale());
        b.scale = trainable ? tape.leaf(a) : tape.constant(a);
    } else {
        b.mlp = bind_mlp(tape, v.mlp(), trainable);
    }
    return b;
}

Vector gather_potential_gradient(const ad::Tape& tape, const BoundPotential& bound)
{
    if (bound.kind == PotentialNet::Kind::Quadratic) {
        return Vector::Constant(1, tape.grad(bound.scale)(0, 0));
    }
    return gather_mlp_gradient(tape, bound.mlp);
}

namespace {

PotentialJet quadratic_jet(const BoundPotential& v, ad::Var s, const std::optional<ad::Var>& s_dot, bool with_value)
{
    using namespace ad;
    auto t = col(s, 0);
    auto z = cols(s, 1, v.dim);
    auto sq = square(col(z, 0));
    for (int j = 1; j < v.dim; ++j) {
        sq = sq + square(col(z, j));
    }
    PotentialJet jet;
    jet.grad = concat(mul_scalar(affine(sq, 0.5, 0.0), v.scale), mul_scalar(mul_col(z, t), v.scale));
    if (with_value) {
        jet.value = mul_scalar(affine(t * sq, 0.5, 0.0), v.scale);
    }
    if (s_dot) {
        auto t_dot = col(*s_dot, 0);
        auto z_dot = cols(*s_dot, 1, v.dim);
        auto zz = col(z, 0) * col(z_dot, 0);
        for (int j = 1; j < v.dim; ++j) {
            zz = zz + col(z, j) * col(z_dot, j);
        }
        jet.grad_dot = concat(mul_scalar(zz, v.scale), mul_scalar(mul_col(z, t_dot) + mul_col(z_dot, t), v.scale));
    }
    return jet;
}

PotentialJet mlp_jet(const BoundMlp& net, ad::Var s, const std::optional<ad::Var>& s_dot, bool with_value)
{
    using namespace ad;
    Tape& tape = *s.tape();
    const bool smooth = net.activation == Activation::Tanh;
    const std::size_t hidden = net.weights.size() - 1;
    const auto batch = s.rows();

    // h_k = sigma(W_k h_{k-1} + b_k); slope_k = sigma'(.) = 1 - h_k^2 for tanh.
    std::vector<Var> slope(hidden), slope_dot(hidden);
    Var x = s;
    std::optional<Var> x_dot = s_dot;
    for (std::size_t k = 0; k < hidden; ++k) {
        auto pre = add_row(matmul_t(x, net.weights[k]), net.biases[k]);
        Var h = smooth ? tanh(pre) : pre;
        if (smooth) {
            slope[k] = affine(square(h), -1.0, 1.0);
        }
        if (x_dot) {
            auto pre_dot = matmul_t(*x_dot, net.weights[k]);
            Var h_dot = smooth ? slope[k] * pre_dot : pre_dot;
            if (smooth) {
                slope_dot[k] = affine(h * h_dot, -2.0, 0.0);
            }
            x_dot = h_dot;
        }
        x = h;
    }

    PotentialJet jet;
    const auto& w_out = net.weights.back();
    if (with_value) {
        jet.value = add_row(matmul_t(x, w_out), net.biases.back());
    }

    // Reverse through the layers for grad_s V; its tangent follows by the product rule.
    if (hidden == 0) {
        jet.grad = mul_row(tape.constant(batch, s.cols(), 1.0), w_out);
        if (s_dot) {
            jet.grad_dot = tape.constant(batch, s.cols(), 0.0);
        }
        return jet;
    }
    const auto top = hidden - 1;
    Var delta = smooth ? mul_row(slope[top], w_out) : mul_row(tape.constant(batch, x.cols(), 1.0), w_out);
    std::optional<Var> delta_dot;
    if (s_dot) {
        delta_dot = smooth ? mul_row(slope_dot[top], w_out) : tape.constant(batch, x.cols(), 0.0);
    }
    for (std::size_t k = hidden; k-- > 0;) {
        auto g = matmul(delta, net.weights[k]);
        std::optional<Var> g_dot;
        if (delta_dot) {
            g_dot = matmul(*delta_dot, net.weights[k]);
        }
        if (k == 0) {
            jet.grad = g;
            jet.grad_dot = g_dot;
            break;
        }
        if (smooth) {
            delta = g * slope[k - 1];
            if (g_dot) {
                delta_dot = *g_dot * slope[k - 1] + g * slope_dot[k - 1];
            }
        } else {
            delta = g;
            delta_dot = g_dot;
        }
    }
    return jet;
}

// Forward pass with a tangent, for the vector-valued baseline network.
std::pair<ad::Var, ad::Var> mlp_forward_tangent(const BoundMlp& net, ad::Var x, ad::Var x_dot)
{
    using namespace ad;
    const bool smooth = net.activation == Activation::Tanh;
    const std::size_t hidden = net.weights.size() - 1;
    for (std::size_t k = 0; k < hidden; ++k) {
        auto pre = add_row(matmul_t(x, net.weights[k]), net.biases[k]);
        auto pre_dot = matmul_t(x_dot, net.weights[k]);
        if (smooth) {
            x = tanh(pre);
            x_dot = affine(square(x), -1.0, 1.0) * pre_dot;
        } else {
            x = pre;
            x_dot = pre_dot;
        }
    }
    return {add_row(matmul_t(x, net.weights.back()), net.biases.back()), matmul_t(x_dot, net.weights.back())};
}

} // namespace

PotentialJet potential_jet(const BoundPotential& v, ad::Var s, const std::optional<ad::Var>& s_dot, bool with_value)
{
    if (s.cols() != v.dim + 1) {
        throw InvalidArgument("potential_jet: expected rows of width " + std::to_string(v.dim + 1) + ", got " +
                              std::to_string(s.cols()));
    }
    if (s_dot && (s_dot->rows() != s.rows() || s_dot->cols() != s.cols())) {
        throw InvalidArgument("potential_jet: tangent shape does not match input");
    }
    if (v.kind == PotentialNet::Kind::Quadratic) {
        return quadratic_jet(v, s, s_dot, with_value);
    }
    return mlp_jet(v.mlp, s, s_dot, with_value);
}

BaselineJet baseline_jet(const BoundMlp& net, ad::Var t, ad::Var x)
{
    using namespace ad;
    Tape& tape = *x.tape();
    auto s = concat(t, x);
    auto s_dot = concat(tape.constant(x.rows(), 1, 1.0), tape.constant(x.rows(), x.cols(), 0.0));
    auto [n, n_dot] = mlp_forward_tangent(net, s, s_dot);
    // d/dt (x + t N(t, x)) = N + t dN/dt
    return {x + mul_col(n, t), n + mul_col(n_dot, t)};
}

PhasePoint eval_baseline(const BaselineFlowNet& net, double t, const PhasePoint& x)
{
    if (x.dim() != net.dim()) {
        throw InvalidArgument("baseline expects phase dimension " + std::to_string(2 * net.dim()));
    }
    if (!net.mlp().all_finite()) {
        throw NumericalError("baseline network has non-finite parameters");
    }
    ad::Tape tape;
    auto bound = bind_mlp(tape, net.mlp(), false);
    auto tv = tape.constant(1, 1, t);
    auto xv = tape.constant(Matrix(x.state().transpose()));
    auto jet = baseline_jet(bound, tv, xv);
    return PhasePoint::from_state(jet.out.value().row(0).transpose());
}

} // namespace sympflow
