#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace charlab {

/**
 * Forward-mode dual number: carries a value and one directional derivative.
 *
 * Nesting gives higher order: Dual<Dual<double>> propagates exact second
 * derivatives (seed the outer tangent for one direction and the inner for
 * the other; the mixed partial lands in .dot.dot).
 */
template <class T>
struct Dual {
    T val{};
    T dot{};

    constexpr Dual() = default;
    constexpr Dual(T v) : val(std::move(v)) {}
    constexpr Dual(T v, T d) : val(std::move(v)), dot(std::move(d)) {}
};

using dual1 = Dual<double>;
using dual2 = Dual<Dual<double>>;

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// Innermost (plain double) value of a possibly nested dual.
constexpr double scalar_value(double x) { return x; }
template <class T>
constexpr double scalar_value(const Dual<T>& x) {
    return scalar_value(x.val);
}

namespace detail {
constexpr bool deriv_free(double) { return true; }
template <class T>
constexpr bool deriv_free(const Dual<T>& x);
constexpr bool all_zero(double x) { return x == 0.0; }
template <class T>
constexpr bool all_zero(const Dual<T>& x) {
    return all_zero(x.val) && all_zero(x.dot);
}
template <class T>
constexpr bool deriv_free(const Dual<T>& x) {
    return all_zero(x.dot) && deriv_free(x.val);
}
}  // namespace detail

/// True when the argument carries no derivative information (a constant).
template <class T>
constexpr bool is_derivative_free(const T& x) {
    return detail::deriv_free(x);
}

template <class T>
constexpr T make_scalar(double v) {
    if constexpr (is_dual<T>::value) {
        return T(make_scalar<typename std::remove_cvref_t<decltype(std::declval<T>().val)>>(v));
    } else {
        return v;
    }
}

// -- arithmetic -------------------------------------------------------------

template <class T>
constexpr Dual<T> operator-(const Dual<T>& a) {
    return {-a.val, -a.dot};
}

template <class T>
constexpr Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
    return {a.val + b.val, a.dot + b.dot};
}
template <class T>
constexpr Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
    return {a.val - b.val, a.dot - b.dot};
}
template <class T>
constexpr Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return {a.val * b.val, a.dot * b.val + a.val * b.dot};
}
template <class T>
constexpr Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    T q = a.val / b.val;
    return {q, (a.dot - q * b.dot) / b.val};
}

template <class T>
constexpr Dual<T> operator+(const Dual<T>& a, double b) {
    return {a.val + make_scalar<T>(b), a.dot};
}
template <class T>
constexpr Dual<T> operator+(double a, const Dual<T>& b) {
    return b + a;
}
template <class T>
constexpr Dual<T> operator-(const Dual<T>& a, double b) {
    return {a.val - make_scalar<T>(b), a.dot};
}
template <class T>
constexpr Dual<T> operator-(double a, const Dual<T>& b) {
    return {make_scalar<T>(a) - b.val, -b.dot};
}
template <class T>
constexpr Dual<T> operator*(const Dual<T>& a, double b) {
    T s = make_scalar<T>(b);
    return {a.val * s, a.dot * s};
}
template <class T>
constexpr Dual<T> operator*(double a, const Dual<T>& b) {
    return b * a;
}
template <class T>
constexpr Dual<T> operator/(const Dual<T>& a, double b) {
    T s = make_scalar<T>(b);
    return {a.val / s, a.dot / s};
}
template <class T>
constexpr Dual<T> operator/(double a, const Dual<T>& b) {
    return Dual<T>(make_scalar<T>(a)) / b;
}

// -- elementary functions ---------------------------------------------------

using std::abs;
using std::cos;
using std::cosh;
using std::exp;
using std::log;
using std::max;
using std::min;
using std::sin;
using std::sinh;
using std::sqrt;
using std::tan;
using std::tanh;

template <class T>
Dual<T> sin(const Dual<T>& x) {
    return {sin(x.val), cos(x.val) * x.dot};
}
template <class T>
Dual<T> cos(const Dual<T>& x) {
    return {cos(x.val), -(sin(x.val) * x.dot)};
}
template <class T>
Dual<T> tan(const Dual<T>& x) {
    T c = cos(x.val);
    return {tan(x.val), x.dot / (c * c)};
}
template <class T>
Dual<T> exp(const Dual<T>& x) {
    T e = exp(x.val);
    return {e, e * x.dot};
}
template <class T>
Dual<T> log(const Dual<T>& x) {
    return {log(x.val), x.dot / x.val};
}
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
    T r = sqrt(x.val);
    return {r, x.dot / (2.0 * r)};
}
template <class T>
Dual<T> sinh(const Dual<T>& x) {
    return {sinh(x.val), cosh(x.val) * x.dot};
}
template <class T>
Dual<T> cosh(const Dual<T>& x) {
    return {cosh(x.val), sinh(x.val) * x.dot};
}
template <class T>
Dual<T> tanh(const Dual<T>& x) {
    T t = tanh(x.val);
    return {t, (1.0 - t * t) * x.dot};
}

// |x| propagates sign(x) as the derivative; the subgradient at 0 is taken
// to be 0.
template <class T>
Dual<T> abs(const Dual<T>& x) {
    double s = scalar_value(x.val);
    if (s > 0.0) return x;
    if (s < 0.0) return -x;
    return {abs(x.val), make_scalar<T>(0.0)};
}

/// Binary min/max pick the branch by value; derivatives follow the winner
/// (ties resolve to the first argument).
template <class T>
Dual<T> min(const Dual<T>& a, const Dual<T>& b) {
    return scalar_value(a.val) <= scalar_value(b.val) ? a : b;
}
template <class T>
Dual<T> max(const Dual<T>& a, const Dual<T>& b) {
    return scalar_value(a.val) >= scalar_value(b.val) ? a : b;
}

}  // namespace charlab
