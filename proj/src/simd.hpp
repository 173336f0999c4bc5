#pragma once

// 16-lane float vectors via the GCC/Clang vector extension. The compiler
// lowers them to whatever the target ISA offers (one zmm, two ymm, ...).

#include <cstddef>
#include <cstring>

namespace melad::simd {

inline constexpr std::size_t kLanes = 16;

using v16 = float __attribute__((vector_size(kLanes * sizeof(float))));

inline v16 load(const float* p) {
  v16 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store(float* p, v16 v) { std::memcpy(p, &v, sizeof v); }

// Lane 0 first, so the result does not depend on the ISA width.
inline float hsum(v16 v) {
  float s = 0.0f;
  for (std::size_t i = 0; i < kLanes; ++i) s += v[i];
  return s;
}

using v8d = double __attribute__((vector_size(8 * sizeof(double))));

// Sum of term(0..n-1) in eight interleaved double lanes folded in lane
// order: a fixed summation order without one long dependency chain.
template <class F>
double lane_sum(std::size_t n, F term) {
  v8d acc{};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    v8d t;
    for (std::size_t j = 0; j < 8; ++j) t[j] = term(i + j);
    acc += t;
  }
  double s = 0.0;
  for (std::size_t j = 0; j < 8; ++j) s += acc[j];
  for (; i < n; ++i) s += term(i);
  return s;
}

}  // namespace melad::simd
