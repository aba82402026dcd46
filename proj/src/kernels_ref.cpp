#include <cmath>
#include <numbers>

#include "mea/kernels.hpp"

namespace mea::kernels::ref {

void conv2d_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const ConvDims& d) {
  const int p = d.k / 2;
  for (int n = 0; n < d.n; ++n)
    for (int oc = 0; oc < d.out_c; ++oc)
      for (int r = 0; r < d.h; ++r)
        for (int c = 0; c < d.w; ++c) {
          double s = bias[oc];
          for (int ic = 0; ic < d.in_c; ++ic)
            for (int ky = 0; ky < d.k; ++ky)
              for (int kx = 0; kx < d.k; ++kx) {
                const int sr = r + ky - p;
                const int sc = c + kx - p;
                if (sr < 0 || sr >= d.h || sc < 0 || sc >= d.w) continue;
                s += weight[((oc * d.in_c + ic) * d.k + ky) * d.k + kx] *
                     x[((n * d.in_c + ic) * d.h + sr) * d.w + sc];
              }
          y[((n * d.out_c + oc) * d.h + r) * d.w + c] = s;
        }
}

void conv2d_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const ConvDims& d) {
  const int p = d.k / 2;
  // dx[n,ic,sr,sc] = sum over outputs that read (sr,sc).
  for (int n = 0; n < d.n; ++n)
    for (int ic = 0; ic < d.in_c; ++ic)
      for (int sr = 0; sr < d.h; ++sr)
        for (int sc = 0; sc < d.w; ++sc) {
          double s = 0.0;
          for (int oc = 0; oc < d.out_c; ++oc)
            for (int ky = 0; ky < d.k; ++ky)
              for (int kx = 0; kx < d.k; ++kx) {
                const int r = sr - ky + p;
                const int c = sc - kx + p;
                if (r < 0 || r >= d.h || c < 0 || c >= d.w) continue;
                s += weight[((oc * d.in_c + ic) * d.k + ky) * d.k + kx] *
                     dy[((n * d.out_c + oc) * d.h + r) * d.w + c];
              }
          dx[((n * d.in_c + ic) * d.h + sr) * d.w + sc] += s;
        }
}

void conv2d_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const ConvDims& d) {
  const int p = d.k / 2;
  for (int oc = 0; oc < d.out_c; ++oc) {
    double sb = 0.0;
    for (int n = 0; n < d.n; ++n)
      for (int r = 0; r < d.h; ++r)
        for (int c = 0; c < d.w; ++c) sb += dy[((n * d.out_c + oc) * d.h + r) * d.w + c];
    dbias[oc] += sb;
    for (int ic = 0; ic < d.in_c; ++ic)
      for (int ky = 0; ky < d.k; ++ky)
        for (int kx = 0; kx < d.k; ++kx) {
          double s = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int r = 0; r < d.h; ++r)
              for (int c = 0; c < d.w; ++c) {
                const int sr = r + ky - p;
                const int sc = c + kx - p;
                if (sr < 0 || sr >= d.h || sc < 0 || sc >= d.w) continue;
                s += dy[((n * d.out_c + oc) * d.h + r) * d.w + c] * x[((n * d.in_c + ic) * d.h + sr) * d.w + sc];
              }
          dweight[((oc * d.in_c + ic) * d.k + ky) * d.k + kx] += s;
        }
  }
}

void linear_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const LinearDims& d) {
  for (int n = 0; n < d.n; ++n)
    for (int o = 0; o < d.out; ++o) {
      double s = bias[o];
      for (int i = 0; i < d.in; ++i) s += weight[o * d.in + i] * x[n * d.in + i];
      y[n * d.out + o] = s;
    }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const LinearDims& d) {
  for (int n = 0; n < d.n; ++n)
    for (int i = 0; i < d.in; ++i) {
      double s = 0.0;
      for (int o = 0; o < d.out; ++o) s += weight[o * d.in + i] * dy[n * d.out + o];
      dx[n * d.in + i] += s;
    }
}

void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const LinearDims& d) {
  for (int o = 0; o < d.out; ++o) {
    double sb = 0.0;
    for (int n = 0; n < d.n; ++n) sb += dy[n * d.out + o];
    dbias[o] += sb;
    for (int i = 0; i < d.in; ++i) {
      double s = 0.0;
      for (int n = 0; n < d.n; ++n) s += dy[n * d.out + o] * x[n * d.in + i];
      dweight[o * d.in + i] += s;
    }
  }
}

void avg_pool_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d) {
  const int oh = d.h / d.factor;
  const int ow = d.w / d.factor;
  const double inv = 1.0 / (d.factor * d.factor);
  for (int p = 0; p < d.planes; ++p)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int i = 0; i < d.factor; ++i)
          for (int j = 0; j < d.factor; ++j) s += x[(p * d.h + r * d.factor + i) * d.w + c * d.factor + j];
        y[(p * oh + r) * ow + c] = s * inv;
      }
}

void avg_pool_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d) {
  const int oh = d.h / d.factor;
  const int ow = d.w / d.factor;
  const double inv = 1.0 / (d.factor * d.factor);
  for (int p = 0; p < d.planes; ++p)
    for (int r = 0; r < d.h; ++r)
      for (int c = 0; c < d.w; ++c) dx[(p * d.h + r) * d.w + c] += dy[(p * oh + r / d.factor) * ow + c / d.factor] * inv;
}

void upsample_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d) {
  // d.h, d.w are the input extents.
  const int oh = d.h * d.factor;
  const int ow = d.w * d.factor;
  for (int p = 0; p < d.planes; ++p)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) y[(p * oh + r) * ow + c] = x[(p * d.h + r / d.factor) * d.w + c / d.factor];
}

void upsample_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d) {
  const int oh = d.h * d.factor;
  const int ow = d.w * d.factor;
  for (int p = 0; p < d.planes; ++p)
    for (int r = 0; r < d.h; ++r)
      for (int c = 0; c < d.w; ++c) {
        double s = 0.0;
        for (int i = 0; i < d.factor; ++i)
          for (int j = 0; j < d.factor; ++j) s += dy[(p * oh + r * d.factor + i) * ow + c * d.factor + j];
        dx[(p * d.h + r) * d.w + c] += s;
      }
}

void jpeg_quantize(std::span<const double> x, std::span<double> y, const PlaneDims& d, const QuantTable& table) {
  const double pi = std::numbers::pi;
  auto alpha = [](int u) { return u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0); };
  for (int p = 0; p < d.planes; ++p)
    for (int by = 0; by < d.h; by += 8)
      for (int bx = 0; bx < d.w; bx += 8) {
        double q[8][8];
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int i = 0; i < 8; ++i)
              for (int j = 0; j < 8; ++j) {
                const double px = x[(p * d.h + by + i) * d.w + bx + j] * 255.0 - 128.0;
                s += px * std::cos((2 * i + 1) * u * pi / 16.0) * std::cos((2 * j + 1) * v * pi / 16.0);
              }
            const double coeff = alpha(u) * alpha(v) * s;
            const double step = table[u * 8 + v];
            q[u][v] = std::nearbyint(coeff / step) * step;
          }
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u)
              for (int v = 0; v < 8; ++v)
                s += alpha(u) * alpha(v) * q[u][v] * std::cos((2 * i + 1) * u * pi / 16.0) *
                     std::cos((2 * j + 1) * v * pi / 16.0);
            y[(p * d.h + by + i) * d.w + bx + j] = (s + 128.0) / 255.0;
          }
      }
}

}  // namespace mea::kernels::ref
