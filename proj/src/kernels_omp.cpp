#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "mea/kernels.hpp"

namespace mea::kernels {

namespace omp {

void conv2d_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const ConvDims& d) {
  const int p = d.k / 2;
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int oc = 0; oc < d.out_c; ++oc) {
      double* out = y.data() + (static_cast<std::size_t>(n) * d.out_c + oc) * plane;
      std::fill(out, out + plane, bias[oc]);
      for (int ic = 0; ic < d.in_c; ++ic) {
        const double* in = x.data() + (static_cast<std::size_t>(n) * d.in_c + ic) * plane;
        const double* wk = weight.data() + (static_cast<std::size_t>(oc) * d.in_c + ic) * d.k * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const int dy = ky - p;
          const int r0 = std::max(0, -dy);
          const int r1 = std::min(d.h, d.h - dy);
          for (int kx = 0; kx < d.k; ++kx) {
            const int dx = kx - p;
            const int c0 = std::max(0, -dx);
            const int c1 = std::min(d.w, d.w - dx);
            const double wv = wk[ky * d.k + kx];
            for (int r = r0; r < r1; ++r) {
              double* dst = out + static_cast<std::size_t>(r) * d.w;
              const double* src = in + static_cast<std::size_t>(r + dy) * d.w + dx;
#pragma omp simd
              for (int c = c0; c < c1; ++c) dst[c] += wv * src[c];
            }
          }
        }
      }
    }
}

void conv2d_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const ConvDims& d) {
  const int p = d.k / 2;
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int ic = 0; ic < d.in_c; ++ic) {
      double* gin = dx.data() + (static_cast<std::size_t>(n) * d.in_c + ic) * plane;
      for (int oc = 0; oc < d.out_c; ++oc) {
        const double* gout = dy.data() + (static_cast<std::size_t>(n) * d.out_c + oc) * plane;
        const double* wk = weight.data() + (static_cast<std::size_t>(oc) * d.in_c + ic) * d.k * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const int oy = ky - p;
          const int r0 = std::max(0, -oy);
          const int r1 = std::min(d.h, d.h - oy);
          for (int kx = 0; kx < d.k; ++kx) {
            const int ox = kx - p;
            const int c0 = std::max(0, -ox);
            const int c1 = std::min(d.w, d.w - ox);
            const double wv = wk[ky * d.k + kx];
            for (int r = r0; r < r1; ++r) {
              double* dst = gin + static_cast<std::size_t>(r + oy) * d.w + ox;
              const double* src = gout + static_cast<std::size_t>(r) * d.w;
#pragma omp simd
              for (int c = c0; c < c1; ++c) dst[c] += wv * src[c];
            }
          }
        }
      }
    }
}

void conv2d_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const ConvDims& d) {
  const int p = d.k / 2;
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < d.out_c; ++oc) {
    double sb = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const double* gout = dy.data() + (static_cast<std::size_t>(n) * d.out_c + oc) * plane;
#pragma omp simd reduction(+ : sb)
      for (std::size_t i = 0; i < plane; ++i) sb += gout[i];
    }
    dbias[oc] += sb;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < d.out_c; ++oc)
    for (int ic = 0; ic < d.in_c; ++ic) {
      double* gw = dweight.data() + (static_cast<std::size_t>(oc) * d.in_c + ic) * d.k * d.k;
      for (int ky = 0; ky < d.k; ++ky) {
        const int oy = ky - p;
        const int r0 = std::max(0, -oy);
        const int r1 = std::min(d.h, d.h - oy);
        for (int kx = 0; kx < d.k; ++kx) {
          const int ox = kx - p;
          const int c0 = std::max(0, -ox);
          const int c1 = std::min(d.w, d.w - ox);
          double s = 0.0;
          for (int n = 0; n < d.n; ++n) {
            const double* gout = dy.data() + (static_cast<std::size_t>(n) * d.out_c + oc) * plane;
            const double* in = x.data() + (static_cast<std::size_t>(n) * d.in_c + ic) * plane;
            for (int r = r0; r < r1; ++r) {
              const double* g = gout + static_cast<std::size_t>(r) * d.w;
              const double* v = in + static_cast<std::size_t>(r + oy) * d.w + ox;
#pragma omp simd reduction(+ : s)
              for (int c = c0; c < c1; ++c) s += g[c] * v[c];
            }
          }
          gw[ky * d.k + kx] += s;
        }
      }
    }
}

void linear_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const LinearDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.out; ++o) {
      const double* w = weight.data() + static_cast<std::size_t>(o) * d.in;
      const double* v = x.data() + static_cast<std::size_t>(n) * d.in;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (int i = 0; i < d.in; ++i) s += w[i] * v[i];
      y[static_cast<std::size_t>(n) * d.out + o] = bias[o] + s;
    }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const LinearDims& d) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.n; ++n) {
    double* g = dx.data() + static_cast<std::size_t>(n) * d.in;
    for (int o = 0; o < d.out; ++o) {
      const double go = dy[static_cast<std::size_t>(n) * d.out + o];
      const double* w = weight.data() + static_cast<std::size_t>(o) * d.in;
#pragma omp simd
      for (int i = 0; i < d.in; ++i) g[i] += go * w[i];
    }
  }
}

void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const LinearDims& d) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < d.out; ++o) {
    double* gw = dweight.data() + static_cast<std::size_t>(o) * d.in;
    double sb = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const double go = dy[static_cast<std::size_t>(n) * d.out + o];
      const double* v = x.data() + static_cast<std::size_t>(n) * d.in;
      sb += go;
#pragma omp simd
      for (int i = 0; i < d.in; ++i) gw[i] += go * v[i];
    }
    dbias[o] += sb;
  }
}

void avg_pool_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d) {
  const int f = d.factor;
  const int oh = d.h / f;
  const int ow = d.w / f;
  const double inv = 1.0 / (f * f);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p) {
    const double* in = x.data() + static_cast<std::size_t>(p) * d.h * d.w;
    double* out = y.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      double* row = out + static_cast<std::size_t>(r) * ow;
      std::fill(row, row + ow, 0.0);
      for (int i = 0; i < f; ++i) {
        const double* src = in + static_cast<std::size_t>(r * f + i) * d.w;
        for (int c = 0; c < ow; ++c)
          for (int j = 0; j < f; ++j) row[c] += src[c * f + j];
      }
      for (int c = 0; c < ow; ++c) row[c] *= inv;
    }
  }
}

void avg_pool_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d) {
  const int f = d.factor;
  const int oh = d.h / f;
  const int ow = d.w / f;
  const double inv = 1.0 / (f * f);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p) {
    const double* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
    double* out = dx.data() + static_cast<std::size_t>(p) * d.h * d.w;
    for (int r = 0; r < d.h; ++r) {
      const double* grow = g + static_cast<std::size_t>(r / f) * ow;
      double* dst = out + static_cast<std::size_t>(r) * d.w;
      for (int c = 0; c < d.w; ++c) dst[c] += grow[c / f] * inv;
    }
  }
}

void upsample_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d) {
  const int f = d.factor;
  const int oh = d.h * f;
  const int ow = d.w * f;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p) {
    const double* in = x.data() + static_cast<std::size_t>(p) * d.h * d.w;
    double* out = y.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      const double* src = in + static_cast<std::size_t>(r / f) * d.w;
      double* dst = out + static_cast<std::size_t>(r) * ow;
      for (int c = 0; c < ow; ++c) dst[c] = src[c / f];
    }
  }
}

void upsample_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d) {
  const int f = d.factor;
  const int oh = d.h * f;
  const int ow = d.w * f;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.planes; ++p) {
    const double* g = dy.data() + static_cast<std::size_t>(p) * oh * ow;
    double* out = dx.data() + static_cast<std::size_t>(p) * d.h * d.w;
    for (int r = 0; r < oh; ++r) {
      const double* src = g + static_cast<std::size_t>(r) * ow;
      double* dst = out + static_cast<std::size_t>(r / f) * d.w;
      for (int c = 0; c < ow; ++c) dst[c / f] += src[c];
    }
  }
}

namespace {

struct DctBasis {
  double m[8][8];  // m[u][i] = alpha(u) cos((2i+1) u pi / 16)
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int i = 0; i < 8; ++i) {
        const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        m[u][i] = a * std::cos((2 * i + 1) * u * std::numbers::pi / 16.0);
      }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

}  // namespace

void jpeg_quantize(std::span<const double> x, std::span<double> y, const PlaneDims& d, const QuantTable& table) {
  const auto& m = basis().m;
  const int bh = d.h / 8;
  const int bw = d.w / 8;
#pragma omp parallel for collapse(2) schedule(static)
  for (int p = 0; p < d.planes; ++p)
    for (int b = 0; b < bh * bw; ++b) {
      const int by = (b / bw) * 8;
      const int bx = (b % bw) * 8;
      const double* in = x.data() + static_cast<std::size_t>(p) * d.h * d.w;
      double* out = y.data() + static_cast<std::size_t>(p) * d.h * d.w;
      double blk[8][8], tmp[8][8];
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) blk[i][j] = in[(by + i) * d.w + bx + j] * 255.0 - 128.0;
      // coeff = M * blk * M^T
      for (int u = 0; u < 8; ++u)
        for (int j = 0; j < 8; ++j) {
          double s = 0.0;
          for (int i = 0; i < 8; ++i) s += m[u][i] * blk[i][j];
          tmp[u][j] = s;
        }
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          double s = 0.0;
          for (int j = 0; j < 8; ++j) s += tmp[u][j] * m[v][j];
          const double step = table[u * 8 + v];
          blk[u][v] = std::nearbyint(s / step) * step;
        }
      // pixels = M^T * q * M
      for (int i = 0; i < 8; ++i)
        for (int v = 0; v < 8; ++v) {
          double s = 0.0;
          for (int u = 0; u < 8; ++u) s += m[u][i] * blk[u][v];
          tmp[i][v] = s;
        }
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          double s = 0.0;
          for (int v = 0; v < 8; ++v) s += tmp[i][v] * m[v][j];
          out[(by + i) * d.w + bx + j] = (s + 128.0) / 255.0;
        }
    }
}

}  // namespace omp

namespace {
std::atomic<Backend> g_backend{Backend::openmp};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

#define MEA_DISPATCH(fn, ...)                   \
  if (backend() == Backend::reference) {        \
    ref::fn(__VA_ARGS__);                       \
  } else {                                      \
    omp::fn(__VA_ARGS__);                       \
  }

void conv2d_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const ConvDims& d) {
  MEA_DISPATCH(conv2d_forward, x, weight, bias, y, d)
}
void conv2d_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const ConvDims& d) {
  MEA_DISPATCH(conv2d_backward_input, dy, weight, dx, d)
}
void conv2d_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const ConvDims& d) {
  MEA_DISPATCH(conv2d_backward_params, x, dy, dweight, dbias, d)
}
void linear_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const LinearDims& d) {
  MEA_DISPATCH(linear_forward, x, weight, bias, y, d)
}
void linear_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const LinearDims& d) {
  MEA_DISPATCH(linear_backward_input, dy, weight, dx, d)
}
void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const LinearDims& d) {
  MEA_DISPATCH(linear_backward_params, x, dy, dweight, dbias, d)
}
void avg_pool_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d) {
  MEA_DISPATCH(avg_pool_forward, x, y, d)
}
void avg_pool_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d) {
  MEA_DISPATCH(avg_pool_backward, dy, dx, d)
}
void upsample_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d) {
  MEA_DISPATCH(upsample_forward, x, y, d)
}
void upsample_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d) {
  MEA_DISPATCH(upsample_backward, dy, dx, d)
}
void jpeg_quantize(std::span<const double> x, std::span<double> y, const PlaneDims& d, const QuantTable& table) {
  MEA_DISPATCH(jpeg_quantize, x, y, d, table)
}

#undef MEA_DISPATCH

QuantTable luminance_table(int quality) {
  static constexpr int kLuma[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable t{};
  for (int i = 0; i < 64; ++i) t[i] = std::clamp((kLuma[i] * scale + 50) / 100, 1, 255);
  return t;
}

}  // namespace mea::kernels
