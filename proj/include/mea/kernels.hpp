#pragma once

// Data-parallel compute kernels behind the autograd ops.
//
// Two implementations share one signature set:
//   ref  - straightforward serial loops, one output element at a time. Kept as
//          the reference the optimized kernels are tested against.
//   omp  - OpenMP-parallel, vector-friendly loop order. Every output element is
//          owned by exactly one thread, so results do not depend on the thread count.
//
// All tensors are dense NCHW double arrays. Backward kernels accumulate (+=) into
// their gradient outputs.

#include <array>
#include <span>

namespace mea::kernels {

// Same-padded, stride-1 square convolution.
struct ConvDims {
  int n = 1;
  int in_c = 1;
  int out_c = 1;
  int h = 1;
  int w = 1;
  int k = 3;  // odd
};

struct LinearDims {
  int n = 1;
  int in = 1;
  int out = 1;
};

// `planes` independent planes (n * c). h x w are the input extents: the fine
// grid for pooling, the coarse grid for upsampling.
struct PlaneDims {
  int planes = 1;
  int h = 1;
  int w = 1;
  int factor = 2;
};

using QuantTable = std::array<double, 64>;

#define MEA_KERNEL_SET                                                                                  \
  void conv2d_forward(std::span<const double> x, std::span<const double> weight,                        \
                      std::span<const double> bias, std::span<double> y, const ConvDims& d);            \
  void conv2d_backward_input(std::span<const double> dy, std::span<const double> weight,                \
                             std::span<double> dx, const ConvDims& d);                                  \
  void conv2d_backward_params(std::span<const double> x, std::span<const double> dy,                    \
                              std::span<double> dweight, std::span<double> dbias, const ConvDims& d);   \
  void linear_forward(std::span<const double> x, std::span<const double> weight,                        \
                      std::span<const double> bias, std::span<double> y, const LinearDims& d);          \
  void linear_backward_input(std::span<const double> dy, std::span<const double> weight,                \
                             std::span<double> dx, const LinearDims& d);                                \
  void linear_backward_params(std::span<const double> x, std::span<const double> dy,                    \
                              std::span<double> dweight, std::span<double> dbias, const LinearDims& d); \
  void avg_pool_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d);            \
  void avg_pool_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d);         \
  void upsample_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d);            \
  void upsample_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d);         \
  /* 8x8 block DCT quantize/dequantize of [0,1] planes on the 0..255 scale (h, w multiples of 8). */    \
  void jpeg_quantize(std::span<const double> x, std::span<double> y, const PlaneDims& d,                \
                     const QuantTable& table);

namespace ref {
MEA_KERNEL_SET
}  // namespace ref

namespace omp {
MEA_KERNEL_SET
}  // namespace omp

#undef MEA_KERNEL_SET

enum class Backend { reference, openmp };

// Process-wide selection used by the autograd ops. Defaults to openmp.
void set_backend(Backend b);
Backend backend();

void conv2d_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const ConvDims& d);
void conv2d_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const ConvDims& d);
void conv2d_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const ConvDims& d);
void linear_forward(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                    std::span<double> y, const LinearDims& d);
void linear_backward_input(std::span<const double> dy, std::span<const double> weight, std::span<double> dx,
                           const LinearDims& d);
void linear_backward_params(std::span<const double> x, std::span<const double> dy, std::span<double> dweight,
                            std::span<double> dbias, const LinearDims& d);
void avg_pool_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d);
void avg_pool_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d);
void upsample_forward(std::span<const double> x, std::span<double> y, const PlaneDims& d);
void upsample_backward(std::span<const double> dy, std::span<double> dx, const PlaneDims& d);
void jpeg_quantize(std::span<const double> x, std::span<double> y, const PlaneDims& d, const QuantTable& table);

// IJG quality scaling of the standard luminance table; quality in [1, 100].
QuantTable luminance_table(int quality);

}  // namespace mea::kernels
