#pragma once

#include <cmath>

namespace sympflow {

// Truncated second-order Taylor number along two seed directions u and w:
//   f(x + a u + b w) = value + a du + b dw + a b duw + O(a^2, b^2).
// duw is the mixed second directional derivative u^T (D^2 f) w.
struct Dual2 {
    double value = 0.0;
    double du = 0.0;
    double dw = 0.0;
    double duw = 0.0;

    constexpr Dual2() = default;
    constexpr Dual2(double v) : value(v) {} // NOLINT(google-explicit-constructor)
    constexpr Dual2(double v, double u, double w, double uw) : value(v), du(u), dw(w), duw(uw) {}

    Dual2& operator+=(const Dual2& o)
    {
        value += o.value;
        du += o.du;
        dw += o.dw;
        duw += o.duw;
        return *this;
    }
};

inline Dual2 operator+(Dual2 a, const Dual2& b) { return a += b; }
inline Dual2 operator-(const Dual2& a, const Dual2& b)
{
    return {a.value - b.value, a.du - b.du, a.dw - b.dw, a.duw - b.duw};
}
inline Dual2 operator-(const Dual2& a) { return {-a.value, -a.du, -a.dw, -a.duw}; }

inline Dual2 operator*(const Dual2& a, const Dual2& b)
{
    return {a.value * b.value,
            a.du * b.value + a.value * b.du,
            a.dw * b.value + a.value * b.dw,
            a.duw * b.value + a.du * b.dw + a.dw * b.du + a.value * b.duw};
}

// Chain rule for a scalar function with derivatives f0, f1, f2 at a.value.
inline Dual2 apply_unary(const Dual2& a, double f0, double f1, double f2)
{
    return {f0, f1 * a.du, f1 * a.dw, f1 * a.duw + f2 * a.du * a.dw};
}

inline Dual2 tanh(const Dual2& a)
{
    const double t = std::tanh(a.value);
    const double s = 1.0 - t * t;
    return apply_unary(a, t, s, -2.0 * t * s);
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual2& x) { return x.value; }

} // namespace sympflow
