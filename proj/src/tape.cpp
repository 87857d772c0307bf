#include "sympflow/tape.hpp"

#include "sympflow/errors.hpp"

#include <sstream>

namespace sympflow::ad {

namespace {

std::string shape(const Matrix& m)
{
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InvalidArgument(std::string(what) + ": shape mismatch " + shape(a) + " vs " + shape(b));
    }
}

} // namespace

std::string op_name(Op op)
{
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Affine: return "affine";
    case Op::AddRow: return "add_row";
    case Op::MulRow: return "mul_row";
    case Op::MulCol: return "mul_col";
    case Op::MulScalar: return "mul_scalar";
    case Op::MatMulT: return "matmul_t";
    case Op::MatMul: return "matmul";
    case Op::Tanh: return "tanh";
    case Op::Cols: return "cols";
    case Op::Concat: return "concat";
    case Op::Sum: return "sum";
    }
    return "unknown";
}

const Matrix& Var::value() const
{
    return tape_->value(id_);
}

const Tape::Node& Tape::node(Var v) const
{
    check_same_tape(v);
    return nodes_[static_cast<std::size_t>(v.id_)];
}

void Tape::check_same_tape(Var a) const
{
    if (a.tape_ != this || a.id_ < 0 || static_cast<std::size_t>(a.id_) >= nodes_.size()) {
        throw InvalidArgument("variable does not belong to this tape");
    }
}

Var Tape::push(Op op, int a, int b, Matrix value, double alpha, double beta, Eigen::Index offset)
{
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.alpha = alpha;
    n.beta = beta;
    n.offset = offset;
    n.value = std::move(value);
    if (op == Op::Leaf) {
        n.needs_grad = true;
    } else if (op != Op::Constant) {
        n.needs_grad = (a >= 0 && nodes_[static_cast<std::size_t>(a)].needs_grad) ||
                       (b >= 0 && nodes_[static_cast<std::size_t>(b)].needs_grad);
    }
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Matrix value)
{
    return push(Op::Leaf, -1, -1, std::move(value));
}

Var Tape::constant(Matrix value)
{
    return push(Op::Constant, -1, -1, std::move(value));
}

Var Tape::constant(Eigen::Index rows, Eigen::Index cols, double fill)
{
    return push(Op::Constant, -1, -1, Matrix::Constant(rows, cols, fill));
}

Var Tape::add(Var a, Var b)
{
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    require_same_shape(x, y, "add");
    return push(Op::Add, a.id_, b.id_, x + y);
}

Var Tape::sub(Var a, Var b)
{
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    require_same_shape(x, y, "sub");
    return push(Op::Sub, a.id_, b.id_, x - y);
}

Var Tape::mul(Var a, Var b)
{
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    require_same_shape(x, y, "mul");
    return push(Op::Mul, a.id_, b.id_, x.cwiseProduct(y));
}

Var Tape::affine(Var a, double alpha, double beta)
{
    const auto& x = node(a).value;
    Matrix out = (alpha * x.array() + beta).matrix();
    return push(Op::Affine, a.id_, -1, std::move(out), alpha, beta);
}

Var Tape::add_row(Var a, Var row)
{
    const auto& x = node(a).value;
    const auto& r = node(row).value;
    if (r.rows() != 1 || r.cols() != x.cols()) {
        throw InvalidArgument("add_row: shape mismatch " + shape(x) + " vs " + shape(r));
    }
    Matrix out = x.rowwise() + r.row(0);
    return push(Op::AddRow, a.id_, row.id_, std::move(out));
}

Var Tape::mul_row(Var a, Var row)
{
    const auto& x = node(a).value;
    const auto& r = node(row).value;
    if (r.rows() != 1 || r.cols() != x.cols()) {
        throw InvalidArgument("mul_row: shape mismatch " + shape(x) + " vs " + shape(r));
    }
    Matrix out = x.array().rowwise() * r.row(0).array();
    return push(Op::MulRow, a.id_, row.id_, std::move(out));
}

Var Tape::mul_col(Var a, Var col)
{
    const auto& x = node(a).value;
    const auto& c = node(col).value;
    if (c.cols() != 1 || c.rows() != x.rows()) {
        throw InvalidArgument("mul_col: shape mismatch " + shape(x) + " vs " + shape(c));
    }
    Matrix out = x.array().colwise() * c.col(0).array();
    return push(Op::MulCol, a.id_, col.id_, std::move(out));
}

Var Tape::mul_scalar(Var a, Var s)
{
    const auto& x = node(a).value;
    const auto& c = node(s).value;
    if (c.rows() != 1 || c.cols() != 1) {
        throw InvalidArgument("mul_scalar: expected 1x1 factor, got " + shape(c));
    }
    Matrix out = x * c(0, 0);
    return push(Op::MulScalar, a.id_, s.id_, std::move(out));
}

Var Tape::matmul_t(Var a, Var w)
{
    const auto& x = node(a).value;
    const auto& m = node(w).value;
    if (x.cols() != m.cols()) {
        throw InvalidArgument("matmul_t: shape mismatch " + shape(x) + " vs " + shape(m));
    }
    Matrix out(x.rows(), m.rows());
    out.noalias() = x * m.transpose();
    return push(Op::MatMulT, a.id_, w.id_, std::move(out));
}

Var Tape::matmul(Var a, Var w)
{
    const auto& x = node(a).value;
    const auto& m = node(w).value;
    if (x.cols() != m.rows()) {
        throw InvalidArgument("matmul: shape mismatch " + shape(x) + " vs " + shape(m));
    }
    Matrix out(x.rows(), m.cols());
    out.noalias() = x * m;
    return push(Op::MatMul, a.id_, w.id_, std::move(out));
}

Var Tape::tanh(Var a)
{
    // 1 - 2 / (exp(2x) + 1): Eigen vectorizes exp for doubles but not tanh.
    // Saturates cleanly to +-1; absolute error stays within a few ulp of 1.
    Matrix out = (1.0 - 2.0 / ((2.0 * node(a).value.array()).exp() + 1.0)).matrix();
    return push(Op::Tanh, a.id_, -1, std::move(out));
}

Var Tape::cols(Var a, Eigen::Index offset, Eigen::Index count)
{
    const auto& x = node(a).value;
    if (offset < 0 || count < 0 || offset + count > x.cols()) {
        throw InvalidArgument("cols: block out of range for " + shape(x));
    }
    Matrix out = x.middleCols(offset, count);
    return push(Op::Cols, a.id_, -1, std::move(out), 0.0, 0.0, offset);
}

Var Tape::concat(Var a, Var b)
{
    const auto& x = node(a).value;
    const auto& y = node(b).value;
    if (x.rows() != y.rows()) {
        throw InvalidArgument("concat: row mismatch " + shape(x) + " vs " + shape(y));
    }
    Matrix out(x.rows(), x.cols() + y.cols());
    out << x, y;
    return push(Op::Concat, a.id_, b.id_, std::move(out));
}

Var Tape::sum(Var a)
{
    Matrix out(1, 1);
    out(0, 0) = node(a).value.sum();
    return push(Op::Sum, a.id_, -1, std::move(out));
}

void Tape::accumulate(int id, const Matrix& g)
{
    accumulate_expr(id, g);
}

template <typename Expr>
void Tape::accumulate_expr(int id, const Expr& g)
{
    const auto i = static_cast<std::size_t>(id);
    if (!nodes_[i].needs_grad) {
        return;
    }
    if (has_grad_[i]) {
        grads_[i] += g;
    } else {
        grads_[i] = g;
        has_grad_[i] = true;
    }
}

void Tape::backward(Var output)
{
    const auto& out = node(output).value;
    if (out.rows() != 1 || out.cols() != 1) {
        throw InvalidArgument("backward: output must be 1x1, got " + shape(out));
    }
    grads_.assign(nodes_.size(), Matrix());
    has_grad_.assign(nodes_.size(), false);
    if (!nodes_[static_cast<std::size_t>(output.id_)].needs_grad) {
        return;
    }
    grads_[static_cast<std::size_t>(output.id_)] = Matrix::Ones(1, 1);
    has_grad_[static_cast<std::size_t>(output.id_)] = true;

    for (int id = output.id_; id >= 0; --id) {
        const auto i = static_cast<std::size_t>(id);
        if (!has_grad_[i]) {
            continue;
        }
        const Node& n = nodes_[i];
        const Matrix& g = grads_[i];
        switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::Add:
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        case Op::Sub:
            accumulate(n.a, g);
            accumulate_expr(n.b, -g);
            break;
        case Op::Mul:
            accumulate_expr(n.a, g.cwiseProduct(value(n.b)));
            accumulate_expr(n.b, g.cwiseProduct(value(n.a)));
            break;
        case Op::Affine:
            accumulate_expr(n.a, n.alpha * g);
            break;
        case Op::AddRow:
            accumulate(n.a, g);
            accumulate_expr(n.b, g.colwise().sum());
            break;
        case Op::MulRow: {
            const Matrix& r = value(n.b);
            accumulate_expr(n.a, (g.array().rowwise() * r.row(0).array()).matrix());
            accumulate_expr(n.b, g.cwiseProduct(value(n.a)).colwise().sum());
            break;
        }
        case Op::MulCol: {
            const Matrix& c = value(n.b);
            accumulate_expr(n.a, (g.array().colwise() * c.col(0).array()).matrix());
            accumulate_expr(n.b, g.cwiseProduct(value(n.a)).rowwise().sum());
            break;
        }
        case Op::MulScalar: {
            const double c = value(n.b)(0, 0);
            accumulate_expr(n.a, c * g);
            if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
                Matrix gs(1, 1);
                gs(0, 0) = g.cwiseProduct(value(n.a)).sum();
                accumulate(n.b, gs);
            }
            break;
        }
        case Op::MatMulT:
            // out = a w^T
            if (nodes_[static_cast<std::size_t>(n.a)].needs_grad) {
                Matrix ga(g.rows(), value(n.b).cols());
                ga.noalias() = g * value(n.b);
                accumulate(n.a, ga);
            }
            if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
                Matrix gw(g.cols(), value(n.a).cols());
                gw.noalias() = g.transpose() * value(n.a);
                accumulate(n.b, gw);
            }
            break;
        case Op::MatMul:
            // out = a w
            if (nodes_[static_cast<std::size_t>(n.a)].needs_grad) {
                Matrix ga(g.rows(), value(n.b).rows());
                ga.noalias() = g * value(n.b).transpose();
                accumulate(n.a, ga);
            }
            if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) {
                Matrix gw(value(n.a).cols(), g.cols());
                gw.noalias() = value(n.a).transpose() * g;
                accumulate(n.b, gw);
            }
            break;
        case Op::Tanh:
            accumulate_expr(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
            break;
        case Op::Cols: {
            const auto src = static_cast<std::size_t>(n.a);
            if (nodes_[src].needs_grad) {
                if (!has_grad_[src]) {
                    grads_[src] = Matrix::Zero(nodes_[src].value.rows(), nodes_[src].value.cols());
                    has_grad_[src] = true;
                }
                grads_[src].middleCols(n.offset, g.cols()) += g;
            }
            break;
        }
        case Op::Concat: {
            const auto left = value(n.a).cols();
            accumulate_expr(n.a, g.leftCols(left));
            accumulate_expr(n.b, g.rightCols(g.cols() - left));
            break;
        }
        case Op::Sum: {
            const auto& src = value(n.a);
            accumulate_expr(n.a, Matrix::Constant(src.rows(), src.cols(), g(0, 0)));
            break;
        }
        }
    }
}

Matrix Tape::grad(Var v) const
{
    const auto& n = node(v);
    const auto i = static_cast<std::size_t>(v.id_);
    if (i < has_grad_.size() && has_grad_[i]) {
        return grads_[i];
    }
    return Matrix::Zero(n.value.rows(), n.value.cols());
}

std::optional<std::string> Tape::first_non_finite() const
{
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].value.allFinite()) {
            return op_name(nodes_[i].op) + " at tape node " + std::to_string(i);
        }
    }
    return std::nullopt;
}

} // namespace sympflow::ad
