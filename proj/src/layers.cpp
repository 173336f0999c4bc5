#include "melad/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "simd.hpp"

namespace melad {

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma.assign(channels, 1.0f);
  p.beta.assign(channels, 0.0f);
  p.running_mean.assign(channels, 0.0f);
  p.running_var.assign(channels, 1.0f);
  return p;
}

void BatchNormParams::validate(std::size_t channels) const {
  auto check = [&](const std::vector<float>& v, const char* name) {
    if (v.size() != channels) {
      throw ShapeError(std::string("batchnorm ") + name + " has " + std::to_string(v.size()) +
                       " entries, input has " + std::to_string(channels) + " channels");
    }
  };
  check(gamma, "gamma");
  check(beta, "beta");
  check(running_mean, "running_mean");
  check(running_var, "running_var");
  if (!(eps >= 0.0f)) throw std::invalid_argument("batchnorm eps must be >= 0");
}

namespace {

void check_feature_map(const Tensor& t, const char* op) {
  if (t.rank() != 3 && t.rank() != 4) {
    throw ShapeError(std::string(op) + " expects (C,H,W) or (N,C,H,W), got " +
                     shape_string(t.dims()));
  }
}

}  // namespace

Tensor batch_norm_infer(const Tensor& input, const BatchNormParams& params) {
  check_feature_map(input, "batch_norm");
  const std::size_t n = input.batch(), c = input.channels();
  const std::size_t plane = input.height() * input.width();
  params.validate(c);
  Tensor out(input.dims());
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float scale = params.gamma[ch] / std::sqrt(params.running_var[ch] + params.eps);
      const float mean = params.running_mean[ch], beta = params.beta[ch];
      const float* src = input.raw() + (img * c + ch) * plane;
      float* dst = out.raw() + (img * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mean) * scale + beta;
    }
  }
  return out;
}

Tensor batch_norm(const Tensor& input, BatchNormParams& params, NormMode mode,
                  BatchNormCache* cache) {
  if (mode == NormMode::infer) return batch_norm_infer(input, params);

  check_feature_map(input, "batch_norm");
  const std::size_t n = input.batch(), c = input.channels();
  const std::size_t plane = input.height() * input.width();
  params.validate(c);
  const double count = static_cast<double>(n * plane);

  Tensor out(input.dims());
  std::vector<float> mean(c), inv_std(c);
  Tensor normalized = cache ? Tensor(input.dims()) : Tensor();

#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t img = 0; img < n; ++img) {
      const float* src = input.raw() + (img * c + ch) * plane;
      s += simd::lane_sum(plane, [&](std::size_t i) { return double(src[i]); });
    }
    const double mu = s / count;
    double ss = 0.0;
    for (std::size_t img = 0; img < n; ++img) {
      const float* src = input.raw() + (img * c + ch) * plane;
      ss += simd::lane_sum(plane, [&](std::size_t i) {
        const double d = src[i] - mu;
        return d * d;
      });
    }
    const double var = ss / count;
    const double istd = 1.0 / std::sqrt(var + params.eps);
    mean[ch] = static_cast<float>(mu);
    inv_std[ch] = static_cast<float>(istd);

    const float g = params.gamma[ch], b = params.beta[ch];
    for (std::size_t img = 0; img < n; ++img) {
      const float* src = input.raw() + (img * c + ch) * plane;
      float* dst = out.raw() + (img * c + ch) * plane;
      float* nrm = cache ? normalized.raw() + (img * c + ch) * plane : dst;
      for (std::size_t i = 0; i < plane; ++i) nrm[i] = static_cast<float>((src[i] - mu) * istd);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = g * nrm[i] + b;
    }

    const float m = params.momentum;
    params.running_mean[ch] = m * params.running_mean[ch] + (1.0f - m) * static_cast<float>(mu);
    params.running_var[ch] = m * params.running_var[ch] + (1.0f - m) * static_cast<float>(var);
  }

  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->normalized = std::move(normalized);
  }
  return out;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormParams& params,
                                   const Tensor& grad_out) {
  const Tensor& xh = cache.normalized;
  if (grad_out.dims() != xh.dims()) {
    throw ShapeError("batchnorm grad_out has extents " + shape_string(grad_out.dims()) +
                     ", forward output is " + shape_string(xh.dims()));
  }
  const std::size_t n = xh.batch(), c = xh.channels();
  const std::size_t plane = xh.height() * xh.width();
  params.validate(c);
  const double count = static_cast<double>(n * plane);

  BatchNormGrads g{Tensor(xh.dims()), std::vector<float>(c), std::vector<float>(c)};
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t img = 0; img < n; ++img) {
      const float* dy = grad_out.raw() + (img * c + ch) * plane;
      const float* x = xh.raw() + (img * c + ch) * plane;
      sum_dy += simd::lane_sum(plane, [&](std::size_t i) { return double(dy[i]); });
      sum_dy_xh += simd::lane_sum(plane, [&](std::size_t i) { return double(dy[i]) * x[i]; });
    }
    g.beta[ch] = static_cast<float>(sum_dy);
    g.gamma[ch] = static_cast<float>(sum_dy_xh);
    const float k = params.gamma[ch] * cache.inv_std[ch];
    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xh = static_cast<float>(sum_dy_xh / count);
    for (std::size_t img = 0; img < n; ++img) {
      const float* dy = grad_out.raw() + (img * c + ch) * plane;
      const float* x = xh.raw() + (img * c + ch) * plane;
      float* dx = g.input.raw() + (img * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) dx[i] = k * (dy[i] - mean_dy - x[i] * mean_dy_xh);
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  relu_inplace(out);
  return out;
}

void relu_inplace(Tensor& t) {
  float* p = t.raw();
  const std::size_t n = t.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (input.dims() != grad_out.dims()) {
    throw ShapeError("relu grad_out has extents " + shape_string(grad_out.dims()) +
                     ", input is " + shape_string(input.dims()));
  }
  Tensor g(input.dims());
  const std::size_t n = input.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) g[i] = input[i] > 0.0f ? grad_out[i] : 0.0f;
  return g;
}

void relu_backward_inplace(const Tensor& input, Tensor& grad) {
  if (input.dims() != grad.dims()) {
    throw ShapeError("relu grad has extents " + shape_string(grad.dims()) + ", input is " +
                     shape_string(input.dims()));
  }
  const float* x = input.raw();
  float* g = grad.raw();
  const std::size_t n = input.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) g[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

Tensor global_avg_pool(const Tensor& input) {
  check_feature_map(input, "global_avg_pool");
  const std::size_t n = input.batch(), c = input.channels();
  const std::size_t plane = input.height() * input.width();
  Tensor out = input.rank() == 4 ? Tensor({n, c}) : Tensor({c});
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* src = input.raw() + (img * c + ch) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += src[i];
      out[img * c + ch] = static_cast<float>(s / static_cast<double>(plane));
    }
  }
  return out;
}

Tensor global_avg_pool_backward(const std::vector<std::size_t>& input_dims,
                                const Tensor& grad_out) {
  Tensor g(input_dims);
  check_feature_map(g, "global_avg_pool_backward");
  const std::size_t n = g.batch(), c = g.channels();
  const std::size_t plane = g.height() * g.width();
  if (grad_out.size() != n * c) {
    throw ShapeError("global_avg_pool grad has " + std::to_string(grad_out.size()) +
                     " entries, expected " + std::to_string(n * c));
  }
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t i = 0; i < n * c; ++i) {
    std::fill_n(g.raw() + i * plane, plane, grad_out[i] * inv);
  }
  return g;
}

std::vector<float> softmax(std::span<const float> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  const float mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> e(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    s += e[i];
  }
  std::vector<float> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(e[i] / s);
  return out;
}

namespace {

void check_pair(std::span<const float> pred, std::span<const float> target) {
  if (pred.empty()) throw std::invalid_argument("cross-entropy of an empty vector");
  if (pred.size() != target.size()) {
    throw ShapeError("cross-entropy length mismatch: pred " + std::to_string(pred.size()) +
                     ", target " + std::to_string(target.size()));
  }
}

}  // namespace

float categorical_cross_entropy(std::span<const float> pred, std::span<const float> target) {
  check_pair(pred, target);
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target[i] == 0.0f) continue;
    loss -= target[i] * std::log(std::max(static_cast<double>(pred[i]), 1e-12));
  }
  return static_cast<float>(loss);
}

std::vector<float> softmax_cross_entropy_grad(std::span<const float> pred,
                                              std::span<const float> target) {
  check_pair(pred, target);
  std::vector<float> g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = pred[i] - target[i];
  return g;
}

}  // namespace melad
