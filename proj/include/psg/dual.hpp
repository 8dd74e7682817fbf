// Copyright 2026 The PSG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PSG_DUAL_HPP_
#define PSG_DUAL_HPP_

#include <cmath>
#include <type_traits>

namespace psg {

// Forward-mode dual number: value plus one directional derivative. The
// network code is templated on its scalar type, so instantiating it with
// Dual<T> yields exact Jacobian-vector products of any quantity it computes,
// including the backward pass itself.
template <typename T>
struct Dual {
  T val{};
  T tan{};

  constexpr Dual() = default;
  constexpr Dual(T v) : val(v) {}  // NOLINT: implicit by design of the algebra
  constexpr Dual(T v, T t) : val(v), tan(t) {}

  Dual& operator+=(const Dual& o) {
    val += o.val;
    tan += o.tan;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    val -= o.val;
    tan -= o.tan;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    tan = tan * o.val + val * o.tan;
    val *= o.val;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    tan = (tan * o.val - val * o.tan) / (o.val * o.val);
    val /= o.val;
    return *this;
  }
};

template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a) {
  return {-a.val, -a.tan};
}
template <typename T>
inline Dual<T> operator+(Dual<T> a, const Dual<T>& b) {
  return a += b;
}
template <typename T>
inline Dual<T> operator-(Dual<T> a, const Dual<T>& b) {
  return a -= b;
}
template <typename T>
inline Dual<T> operator*(Dual<T> a, const Dual<T>& b) {
  return a *= b;
}
template <typename T>
inline Dual<T> operator/(Dual<T> a, const Dual<T>& b) {
  return a /= b;
}

// Comparisons look at the value only; branches (ReLU masks, max-subtraction)
// are therefore locally constant, matching the almost-everywhere derivative.
template <typename T>
constexpr bool operator<(const Dual<T>& a, const Dual<T>& b) {
  return a.val < b.val;
}
template <typename T>
constexpr bool operator>(const Dual<T>& a, const Dual<T>& b) {
  return a.val > b.val;
}
template <typename T>
constexpr bool operator<=(const Dual<T>& a, const Dual<T>& b) {
  return a.val <= b.val;
}
template <typename T>
constexpr bool operator>=(const Dual<T>& a, const Dual<T>& b) {
  return a.val >= b.val;
}

template <typename T>
inline Dual<T> exp(const Dual<T>& a) {
  const T e = std::exp(a.val);
  return {e, e * a.tan};
}
template <typename T>
inline Dual<T> log(const Dual<T>& a) {
  return {std::log(a.val), a.tan / a.val};
}
template <typename T>
inline Dual<T> sqrt(const Dual<T>& a) {
  const T s = std::sqrt(a.val);
  return {s, a.tan / (T(2) * s)};
}
template <typename T>
inline Dual<T> tanh(const Dual<T>& a) {
  const T t = std::tanh(a.val);
  return {t, (T(1) - t * t) * a.tan};
}

template <typename T>
inline bool isfinite(const Dual<T>& a) {
  return std::isfinite(a.val) && std::isfinite(a.tan);
}

template <typename T>
struct is_dual : std::false_type {};
template <typename T>
struct is_dual<Dual<T>> : std::true_type {};

// Value part of a scalar, as double, for reporting.
template <typename T>
inline double value_of(const T& x) {
  if constexpr (is_dual<T>::value) {
    return static_cast<double>(x.val);
  } else {
    return static_cast<double>(x);
  }
}

}  // namespace psg

#endif  // PSG_DUAL_HPP_
