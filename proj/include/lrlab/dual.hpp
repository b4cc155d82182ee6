#pragma once

#include <cmath>
#include <type_traits>

namespace lrlab {

// First-order dual number: carries a value and a directional derivative.
// Running an algorithm on Dual<T> inputs with seeded `dot` parts yields the
// exact Jacobian-vector product of that algorithm alongside its value.
template <typename S>
struct Dual {
  S val{};
  S dot{};

  constexpr Dual() = default;
  constexpr Dual(S v) : val(v), dot(S(0)) {}
  constexpr Dual(S v, S d) : val(v), dot(d) {}

  Dual& operator+=(const Dual& o) { val += o.val; dot += o.dot; return *this; }
  Dual& operator-=(const Dual& o) { val -= o.val; dot -= o.dot; return *this; }
  Dual& operator*=(const Dual& o) {
    dot = dot * o.val + val * o.dot;
    val *= o.val;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    val /= o.val;
    dot = (dot - val * o.dot) / o.val;
    return *this;
  }
};

template <typename S>
constexpr Dual<S> operator+(Dual<S> a, const Dual<S>& b) { return a += b; }
template <typename S>
constexpr Dual<S> operator-(Dual<S> a, const Dual<S>& b) { return a -= b; }
template <typename S>
constexpr Dual<S> operator*(Dual<S> a, const Dual<S>& b) { return a *= b; }
template <typename S>
constexpr Dual<S> operator/(Dual<S> a, const Dual<S>& b) { return a /= b; }
template <typename S>
constexpr Dual<S> operator-(const Dual<S>& a) { return {-a.val, -a.dot}; }

template <typename S>
constexpr bool operator<(const Dual<S>& a, const Dual<S>& b) { return a.val < b.val; }
template <typename S>
constexpr bool operator>(const Dual<S>& a, const Dual<S>& b) { return a.val > b.val; }
template <typename S>
constexpr bool operator==(const Dual<S>& a, const Dual<S>& b) { return a.val == b.val; }

template <typename S>
inline Dual<S> sqrt(const Dual<S>& a) {
  S r = std::sqrt(a.val);
  return {r, r > S(0) ? a.dot / (S(2) * r) : S(0)};
}
template <typename S>
inline Dual<S> exp(const Dual<S>& a) {
  S e = std::exp(a.val);
  return {e, a.dot * e};
}
template <typename S>
inline Dual<S> log(const Dual<S>& a) {
  return {std::log(a.val), a.dot / a.val};
}
template <typename S>
inline Dual<S> abs(const Dual<S>& a) {
  return a.val < S(0) ? -a : a;
}

template <typename T>
struct is_dual : std::false_type {};
template <typename S>
struct is_dual<Dual<S>> : std::true_type {};
template <typename T>
inline constexpr bool is_dual_v = is_dual<T>::value;

// Underlying real type of a (possibly dual) scalar.
template <typename T>
struct real_of { using type = T; };
template <typename S>
struct real_of<Dual<S>> { using type = S; };
template <typename T>
using real_of_t = typename real_of<T>::type;

template <typename T>
inline real_of_t<T> value_part(const T& x) {
  if constexpr (is_dual_v<T>) return x.val;
  else return x;
}

template <typename T>
inline bool finite(const T& x) {
  if constexpr (is_dual_v<T>) return std::isfinite(x.val) && std::isfinite(x.dot);
  else return std::isfinite(x);
}

// sqrt/exp/log on plain scalars, found by ADL alongside the dual overloads.
using std::abs;
using std::exp;
using std::log;
using std::sqrt;

}  // namespace lrlab
