#pragma once

// Test helpers and independent double-precision oracles. Nothing here calls
// into the engine's kernels, so the engine can be checked against it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melad/architecture.hpp"
#include "melad/rng.hpp"
#include "melad/tensor.hpp"

namespace test {

inline melad::Tensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed,
                                   double lo = -1.0, double hi = 1.0) {
  melad::Tensor t(std::move(dims));
  melad::Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline std::vector<double> to_double(const melad::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

inline double max_abs_diff(const melad::Tensor& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const melad::Tensor& a, const melad::Tensor& b) {
  return max_abs_diff(a, to_double(b));
}

/// ||a - b|| / max(||b||, tiny), Euclidean norms.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

/// Cross-correlation with zero "same" padding, summed directly from its
/// definition: out[n,o,y,x] = b[o] + sum_{c,i,j} w[o,c,i,j] * in[n,c,y+l(i-r),x+l(j-r)]
/// with r = (k-1)/2 and out-of-range input reading as zero.
inline std::vector<double> conv_oracle(const std::vector<double>& in, std::size_t n,
                                       std::size_t c, std::size_t h, std::size_t w,
                                       const std::vector<double>& kernel, std::size_t o,
                                       std::size_t k, const std::vector<double>& bias, long l) {
  std::vector<double> out(n * o * h * w, 0.0);
  const long r = static_cast<long>(k - 1) / 2;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (long y = 0; y < static_cast<long>(h); ++y)
        for (long x = 0; x < static_cast<long>(w); ++x) {
          double s = bias.empty() ? 0.0 : bias[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (long i = 0; i < static_cast<long>(k); ++i)
              for (long j = 0; j < static_cast<long>(k); ++j) {
                const long yy = y + l * (i - r), xx = x + l * (j - r);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w))
                  continue;
                s += kernel[((oc * c + ic) * k + i) * k + j] *
                     in[((b * c + ic) * h + yy) * w + xx];
              }
          out[((b * o + oc) * h + y) * w + x] = s;
        }
  return out;
}

/// Train-mode batchnorm over (N, C, plane) with biased batch variance.
inline std::vector<double> batchnorm_oracle(const std::vector<double>& x, std::size_t n,
                                            std::size_t c, std::size_t plane,
                                            const std::vector<double>& gamma,
                                            const std::vector<double>& beta, double eps) {
  std::vector<double> y(x.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane; ++i) mu += x[(b * c + ch) * plane + i];
    mu /= static_cast<double>(n * plane);
    double var = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = x[(b * c + ch) * plane + i] - mu;
        var += d * d;
      }
    var /= static_cast<double>(n * plane);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t at = (b * c + ch) * plane + i;
        y[at] = gamma[ch] * (x[at] - mu) / std::sqrt(var + eps) + beta[ch];
      }
  }
  return y;
}

/// Width of the set of outputs that one input pixel influences, measured by
/// pushing a delta through the conv stack with all-ones single-channel
/// kernels (so nothing cancels) using the double-precision oracle.
inline std::size_t impulse_extent(const melad::ArchitectureConfig& c) {
  std::size_t rf = 1;
  for (const auto& l : c.layers)
    if (l.kind == melad::LayerKind::conv) rf += l.dilation * (l.kernel_size - 1);
  const std::size_t n = 2 * rf + 1, mid = rf;  // comfortably larger than the answer
  std::vector<double> field(n * n, 0.0);
  field[mid * n + mid] = 1.0;
  for (const auto& l : c.layers) {
    if (l.kind != melad::LayerKind::conv) continue;
    const std::vector<double> ones(l.kernel_size * l.kernel_size, 1.0);
    field = conv_oracle(field, 1, 1, n, n, ones, 1, l.kernel_size, {0.0}, l.dilation);
  }
  std::size_t lo = n, hi = 0;
  for (std::size_t x = 0; x < n; ++x)
    if (field[mid * n + x] != 0.0) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  return hi - lo + 1;
}

/// Scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("melad_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace test
