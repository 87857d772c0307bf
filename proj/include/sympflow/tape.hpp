#pragma once

// Reverse-mode differentiation over dense matrix operations.
//
// Every node on the tape holds a B x n matrix (B = batch rows). Forward-mode
// quantities (time derivatives, input gradients of a potential) are built
// explicitly out of these same operations, so a single reverse sweep returns
// exact parameter gradients of anything assembled from them, nested derivatives
// included.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace sympflow::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape_ != nullptr; }

    Tape* tape() const { return tape_; }
    int id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

enum class Op : std::uint8_t {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Affine,  // alpha * a + beta
    AddRow,  // a (B x n) + row b (1 x n)
    MulRow,  // a (B x n) .* row r (1 x n)
    MulCol,  // a (B x n) .* column c (B x 1)
    MulScalar, // a (B x n) * s (1 x 1)
    MatMulT, // a (B x k) * w^T, w is n x k
    MatMul,  // a (B x n) * w, w is n x k
    Tanh,
    Cols,    // column block [offset, offset + n)
    Concat,  // [a | b]
    Sum,     // 1 x 1 total
};

std::string op_name(Op op);

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Differentiable input (parameters).
    Var leaf(Matrix value);
    Var constant(Matrix value);
    Var constant(Eigen::Index rows, Eigen::Index cols, double fill);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var affine(Var a, double alpha, double beta);
    Var add_row(Var a, Var row);
    Var mul_row(Var a, Var row);
    Var mul_col(Var a, Var col);
    Var mul_scalar(Var a, Var s);
    Var matmul_t(Var a, Var w);
    Var matmul(Var a, Var w);
    Var tanh(Var a);
    Var cols(Var a, Eigen::Index offset, Eigen::Index count);
    Var concat(Var a, Var b);
    Var sum(Var a);

    // Reverse sweep from a 1 x 1 output. Nodes are visited once, newest first.
    void backward(Var output);

    // Gradient accumulated into v by the last backward(); zeros if none reached it.
    Matrix grad(Var v) const;

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].needs_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Earliest node whose value is not finite, as "op_name at tape node N".
    std::optional<std::string> first_non_finite() const;

private:
    struct Node {
        Op op = Op::Constant;
        int a = -1;
        int b = -1;
        double alpha = 0.0;
        double beta = 0.0;
        Eigen::Index offset = 0;
        bool needs_grad = false;
        Matrix value;
    };

    Var push(Op op, int a, int b, Matrix value, double alpha = 0.0, double beta = 0.0,
             Eigen::Index offset = 0);
    const Node& node(Var v) const;
    void check_same_tape(Var a) const;
    void accumulate(int id, const Matrix& g);
    template <typename Expr>
    void accumulate_expr(int id, const Expr& g);

    std::deque<Node> nodes_;
    std::vector<Matrix> grads_;
    std::vector<bool> has_grad_;
};

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape()->affine(a, s, 0.0); }
inline Var operator-(Var a) { return a.tape()->affine(a, -1.0, 0.0); }
inline Var affine(Var a, double alpha, double beta) { return a.tape()->affine(a, alpha, beta); }
inline Var add_row(Var a, Var row) { return a.tape()->add_row(a, row); }
inline Var mul_row(Var a, Var row) { return a.tape()->mul_row(a, row); }
inline Var mul_col(Var a, Var col) { return a.tape()->mul_col(a, col); }
inline Var mul_scalar(Var a, Var s) { return a.tape()->mul_scalar(a, s); }
inline Var matmul_t(Var a, Var w) { return a.tape()->matmul_t(a, w); }
inline Var matmul(Var a, Var w) { return a.tape()->matmul(a, w); }
inline Var tanh(Var a) { return a.tape()->tanh(a); }
inline Var cols(Var a, Eigen::Index offset, Eigen::Index count) { return a.tape()->cols(a, offset, count); }
inline Var col(Var a, Eigen::Index j) { return a.tape()->cols(a, j, 1); }
inline Var concat(Var a, Var b) { return a.tape()->concat(a, b); }
inline Var sum(Var a) { return a.tape()->sum(a); }
inline Var square(Var a) { return a.tape()->mul(a, a); }

} // namespace sympflow::ad
