#include "melad/conv.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "simd.hpp"

namespace melad {

void ConvParams::validate() const {
  if (kernel.rank() != 4) {
    throw ShapeError("conv kernel must be (out_ch, in_ch, k, k), got " + shape_string(kernel.dims()));
  }
  if (kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv kernel must be square, got " + shape_string(kernel.dims()));
  }
  if (kernel.dim(2) % 2 == 0) {
    throw ShapeError("same padding needs an odd kernel size, got " + std::to_string(kernel.dim(2)));
  }
  if (dilation < 1) {
    throw ShapeError("dilation must be >= 1, got " + std::to_string(dilation));
  }
  if (bias.size() != kernel.dim(0)) {
    throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(kernel.dim(0)));
  }
}

namespace {

using simd::kLanes;
using simd::v16;

constexpr std::size_t kMR = 12;  // output channels per register tile
constexpr std::size_t kNV = 2;  // vectors per output row segment
constexpr std::size_t kNR = kNV * kLanes;

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

void check_input(const Tensor& input, const ConvParams& params) {
  params.validate();
  if (input.rank() != 3 && input.rank() != 4) {
    throw ShapeError("conv input must be (C,H,W) or (N,C,H,W), got " + shape_string(input.dims()));
  }
  if (input.channels() != params.in_channels()) {
    throw ShapeError("conv input has " + std::to_string(input.channels()) +
                     " channels, kernel expects " + std::to_string(params.in_channels()));
  }
}

std::vector<std::size_t> output_dims(const Tensor& input, std::size_t out_ch) {
  if (input.rank() == 4) return {input.dim(0), out_ch, input.height(), input.width()};
  return {out_ch, input.height(), input.width()};
}

// Zero-padded copies of every image, margin m on each side. Trailing slack
// keeps full-width vector loads at the right edge of the last row in bounds.
struct PaddedBatch {
  std::vector<float> data;
  std::size_t hp = 0, wp = 0, image_stride = 0;
};

PaddedBatch pad_batch(const float* src, std::size_t n, std::size_t c, std::size_t h,
                      std::size_t w, std::size_t m) {
  PaddedBatch pb;
  pb.hp = h + 2 * m;
  pb.wp = w + 2 * m;
  pb.image_stride = c * pb.hp * pb.wp + kNR;
  pb.data.assign(n * pb.image_stride, 0.0f);
#pragma omp parallel for schedule(static)
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        std::memcpy(&pb.data[img * pb.image_stride + (ch * pb.hp + y + m) * pb.wp + m],
                    src + ((img * c + ch) * h + y) * w, w * sizeof(float));
      }
    }
  }
  return pb;
}

// Tap j = (c * k + ky) * k + kx reads the padded input at this offset
// relative to the output pixel.
std::vector<std::size_t> tap_offsets(std::size_t c, std::size_t k, std::size_t l, std::size_t hp,
                                     std::size_t wp) {
  std::vector<std::size_t> off(c * k * k);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx)
        off[(ch * k + ky) * k + kx] = ch * hp * wp + ky * l * wp + kx * l;
  return off;
}

// kernel (O, K) row-major -> blocks of kMR output channels, [block][j][i].
std::vector<float> pack_kernel(const float* kernel, std::size_t o, std::size_t kk) {
  const std::size_t blocks = round_up(o, kMR) / kMR;
  std::vector<float> packed(blocks * kk * kMR, 0.0f);
  for (std::size_t oc = 0; oc < o; ++oc) {
    const std::size_t b = oc / kMR, i = oc % kMR;
    for (std::size_t j = 0; j < kk; ++j) packed[(b * kk + j) * kMR + i] = kernel[oc * kk + j];
  }
  return packed;
}

// Output channels [0, live) of one register tile: MR channels x kNR pixels
// starting at base, written to dst with channel stride cs.
template <std::size_t MR>
void forward_tile(const float* base, const std::size_t* off, std::size_t kk, const float* wblk,
                  const float* bias, std::size_t live, float* dst, std::size_t cs,
                  std::size_t valid) {
  v16 acc[MR][kNV] = {};
  for (std::size_t j = 0; j < kk; ++j) {
    const float* src = base + off[j];
    const v16 b0 = simd::load(src);
    const v16 b1 = simd::load(src + kLanes);
    const float* wj = wblk + j * kMR;
    for (std::size_t i = 0; i < MR; ++i) {
      acc[i][0] += b0 * wj[i];
      acc[i][1] += b1 * wj[i];
    }
  }
  for (std::size_t i = 0; i < live; ++i) {
    const float bv = bias ? bias[i] : 0.0f;
    alignas(64) float row[kNR];
    simd::store(row, acc[i][0] + bv);
    simd::store(row + kLanes, acc[i][1] + bv);
    std::memcpy(dst + i * cs, row, valid * sizeof(float));
  }
}

void conv_forward_impl(const float* in, std::size_t n, std::size_t c, std::size_t h,
                       std::size_t w, const float* kernel, std::size_t o, std::size_t k,
                       std::size_t l, const float* bias, float* out) {
  const std::size_t m = l * (k - 1) / 2;
  const std::size_t kk = c * k * k;
  const PaddedBatch pb = pad_batch(in, n, c, h, w, m);
  const auto off = tap_offsets(c, k, l, pb.hp, pb.wp);
  const auto packed = pack_kernel(kernel, o, kk);
  const std::size_t blocks = round_up(o, kMR) / kMR;
  const std::size_t rows = n * h;

#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t img = r / h, y = r % h;
    const float* pad = pb.data.data() + img * pb.image_stride;
    float* dst_img = out + img * o * h * w;
    for (std::size_t b = 0; b < blocks; ++b) {
      const float* wblk = packed.data() + b * kk * kMR;
      // The last block only computes as many channels as remain, in steps of 4.
      const std::size_t live = std::min(kMR, o - b * kMR);
      for (std::size_t x0 = 0; x0 < w; x0 += kNR) {
        const float* base = pad + y * pb.wp + x0;
        float* dst = dst_img + y * w + x0;
        const std::size_t valid = std::min(kNR, w - x0);
        const float* bb = bias ? bias + b * kMR : nullptr;
        if (live > 8)
          forward_tile<12>(base, off.data(), kk, wblk, bb, live, dst, h * w, valid);
        else if (live > 4)
          forward_tile<8>(base, off.data(), kk, wblk, bb, live, dst, h * w, valid);
        else
          forward_tile<4>(base, off.data(), kk, wblk, bb, live, dst, h * w, valid);
      }
      dst_img += kMR * h * w;
    }
  }
}

}  // namespace

Tensor conv2d_dilated(const Tensor& input, const ConvParams& params) {
  check_input(input, params);
  Tensor out(output_dims(input, params.out_channels()));
  conv_forward_impl(input.raw(), input.batch(), input.channels(), input.height(), input.width(),
                    params.kernel.raw(), params.out_channels(), params.kernel_size(),
                    static_cast<std::size_t>(params.dilation), params.bias.data(), out.raw());
  return out;
}

namespace {

constexpr std::size_t kGO = 4;  // output channels per kernel-gradient tile
constexpr std::size_t kGJ = 6;  // taps per kernel-gradient tile
constexpr std::size_t kBandPixels = 256;  // rows per cache band ~ this many pixels

// Writes sum over rows [y0, y1) of grad_out(o, row) * tap_j(row) to
// part[o * kk + j] for the output channels of block ob. Rows are visited in
// cache-sized bands with per-lane partial sums carried across bands, so the
// summation order depends only on (y0, y1).
void kernel_grad_rows(const float* gpad, std::size_t h, std::size_t wr, const float* pad,
                      std::size_t wp, const std::vector<std::size_t>& off, std::size_t o,
                      std::size_t kk, std::size_t y0, std::size_t y1, std::size_t ob,
                      float* part) {
  const std::size_t jblocks = (kk + kGJ - 1) / kGJ;
  const std::size_t band = std::max<std::size_t>(1, kBandPixels / wr);
  std::vector<v16> lanes(jblocks * kGO * kGJ, v16{});
  for (std::size_t b0 = y0; b0 < y1; b0 += band) {
    const std::size_t b1 = std::min(y1, b0 + band);
    for (std::size_t jb = 0; jb < jblocks; ++jb) {
      v16* carried = lanes.data() + jb * kGO * kGJ;
      v16 acc[kGO][kGJ];
      for (std::size_t i = 0; i < kGO; ++i)
        for (std::size_t q = 0; q < kGJ; ++q) acc[i][q] = carried[i * kGJ + q];
      const float* taps[kGJ];
      for (std::size_t q = 0; q < kGJ; ++q) {
        const std::size_t j = jb * kGJ + q;
        taps[q] = pad + (j < kk ? off[j] : 0);
      }
      for (std::size_t y = b0; y < b1; ++y) {
        const float* g = gpad + (ob * kGO * h + y) * wr;
        const std::size_t prow = y * wp;
        for (std::size_t x = 0; x < wr; x += kLanes) {
          v16 gv[kGO];
          for (std::size_t i = 0; i < kGO; ++i) gv[i] = simd::load(g + i * h * wr + x);
          for (std::size_t q = 0; q < kGJ; ++q) {
            const v16 pv = simd::load(taps[q] + prow + x);
            for (std::size_t i = 0; i < kGO; ++i) acc[i][q] += gv[i] * pv;
          }
        }
      }
      for (std::size_t i = 0; i < kGO; ++i)
        for (std::size_t q = 0; q < kGJ; ++q) carried[i * kGJ + q] = acc[i][q];
    }
  }
  for (std::size_t jb = 0; jb < jblocks; ++jb) {
    for (std::size_t i = 0; i < kGO; ++i) {
      const std::size_t oc = ob * kGO + i;
      if (oc >= o) break;
      for (std::size_t q = 0; q < kGJ; ++q) {
        const std::size_t j = jb * kGJ + q;
        if (j >= kk) break;
        part[oc * kk + j] = simd::hsum(lanes[(jb * kGO + i) * kGJ + q]);
      }
    }
  }
}

}  // namespace

ConvGrads conv2d_dilated_backward(const Tensor& input, const ConvParams& params,
                                  const Tensor& grad_out, ExecMode mode, bool need_input_grad) {
  check_input(input, params);
  const auto expect = output_dims(input, params.out_channels());
  if (grad_out.dims() != expect) {
    throw ShapeError("conv grad_out has extents " + shape_string(grad_out.dims()) +
                     ", forward output is " + shape_string(expect));
  }
  const std::size_t n = input.batch(), c = input.channels(), h = input.height(),
                    w = input.width();
  const std::size_t o = params.out_channels(), k = params.kernel_size();
  const std::size_t l = static_cast<std::size_t>(params.dilation);
  const std::size_t kk = c * k * k;

  ConvGrads grads;

  // Input gradient: same-padded dilated correlation of grad_out with the
  // kernel transposed over channels and rotated 180 degrees.
  if (need_input_grad) {
    std::vector<float> flipped(c * o * k * k);
    const float* kw = params.kernel.raw();
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t ic = 0; ic < c; ++ic)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            flipped[((ic * o + oc) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                kw[((oc * c + ic) * k + ky) * k + kx];
    grads.input = Tensor(input.dims());
    conv_forward_impl(grad_out.raw(), n, o, h, w, flipped.data(), c, k, l, nullptr,
                      grads.input.raw());
  }

  // Kernel gradient.
  const std::size_t m = params.margin();
  const PaddedBatch pb = pad_batch(input.raw(), n, c, h, w, m);
  const auto off = tap_offsets(c, k, l, pb.hp, pb.wp);
  const std::size_t opad = round_up(o, kGO);
  const std::size_t wr = round_up(w, kLanes);
  // grad_out already has the tile layout unless channels or width need padding.
  std::vector<float> gpad;
  const float* gsrc = grad_out.raw();
  if (opad != o || wr != w) {
    gpad.assign(n * opad * h * wr, 0.0f);
    for (std::size_t img = 0; img < n; ++img)
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t y = 0; y < h; ++y)
          std::memcpy(&gpad[((img * opad + oc) * h + y) * wr],
                      grad_out.raw() + ((img * o + oc) * h + y) * w, w * sizeof(float));
    gsrc = gpad.data();
  }

  const std::size_t oblocks = opad / kGO;
  const std::size_t bands =
      mode == ExecMode::fast ? std::clamp<std::size_t>(num_threads(), 1, h) : 1;
  const std::size_t parts = n * bands;
  std::vector<float> partial(parts * o * kk, 0.0f);

#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t p = 0; p < parts; ++p) {
    for (std::size_t ob = 0; ob < oblocks; ++ob) {
      const std::size_t img = p / bands, band = p % bands;
      const std::size_t y0 = band * h / bands, y1 = (band + 1) * h / bands;
      kernel_grad_rows(gsrc + img * opad * h * wr, h, wr,
                       pb.data.data() + img * pb.image_stride, pb.wp, off, o, kk, y0, y1, ob,
                       partial.data() + p * o * kk);
    }
  }

  grads.kernel = Tensor(params.kernel.dims());
  float* gk = grads.kernel.raw();
#pragma omp parallel for schedule(static)
  for (std::size_t e = 0; e < o * kk; ++e) {
    float s = 0.0f;
    for (std::size_t p = 0; p < parts; ++p) s += partial[p * o * kk + e];
    gk[e] = s;
  }

  grads.bias.assign(o, 0.0f);
#pragma omp parallel for schedule(static)
  for (std::size_t oc = 0; oc < o; ++oc) {
    double s = 0.0;
    for (std::size_t img = 0; img < n; ++img) {
      const float* g = grad_out.raw() + (img * o + oc) * h * w;
      s += simd::lane_sum(h * w, [&](std::size_t i) { return double(g[i]); });
    }
    grads.bias[oc] = static_cast<float>(s);
  }
  return grads;
}

namespace reference {

Tensor conv2d_dilated(const Tensor& input, const ConvParams& params) {
  check_input(input, params);
  const std::size_t n = input.batch(), c = input.channels(), h = input.height(),
                    w = input.width();
  const std::size_t o = params.out_channels(), k = params.kernel_size();
  const long l = params.dilation, m = static_cast<long>(params.margin());
  Tensor out(output_dims(input, o));
  const float* in = input.raw();
  const float* kw = params.kernel.raw();
  float* dst = out.raw();
  for (std::size_t img = 0; img < n; ++img)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y) + l * static_cast<long>(ky) - m;
                const long ix = static_cast<long>(x) + l * static_cast<long>(kx) - m;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                acc += in[((img * c + ic) * h + iy) * w + ix] * kw[((oc * c + ic) * k + ky) * k + kx];
              }
          dst[((img * o + oc) * h + y) * w + x] = acc + params.bias[oc];
        }
  return out;
}

ConvGrads conv2d_dilated_backward(const Tensor& input, const ConvParams& params,
                                  const Tensor& grad_out) {
  check_input(input, params);
  const auto expect = output_dims(input, params.out_channels());
  if (grad_out.dims() != expect) {
    throw ShapeError("conv grad_out has extents " + shape_string(grad_out.dims()) +
                     ", forward output is " + shape_string(expect));
  }
  const std::size_t n = input.batch(), c = input.channels(), h = input.height(),
                    w = input.width();
  const std::size_t o = params.out_channels(), k = params.kernel_size();
  const long l = params.dilation, m = static_cast<long>(params.margin());

  ConvGrads g{Tensor(input.dims()), Tensor(params.kernel.dims()), std::vector<float>(o, 0.0f)};
  const float* in = input.raw();
  const float* kw = params.kernel.raw();
  const float* go = grad_out.raw();
  for (std::size_t img = 0; img < n; ++img)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const float gv = go[((img * o + oc) * h + y) * w + x];
          g.bias[oc] += gv;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y) + l * static_cast<long>(ky) - m;
                const long ix = static_cast<long>(x) + l * static_cast<long>(kx) - m;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                const std::size_t ii = ((img * c + ic) * h + iy) * w + ix;
                const std::size_t ki = ((oc * c + ic) * k + ky) * k + kx;
                g.input[ii] += gv * kw[ki];
                g.kernel[ki] += gv * in[ii];
              }
        }
  return g;
}

}  // namespace reference

}  // namespace melad
