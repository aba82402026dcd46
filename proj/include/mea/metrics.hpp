#pragma once

#include <limits>

#include "mea/image.hpp"

namespace mea {

// Percentage of differing bits. Throws InputError on length mismatch.
double ber(const MessageBits& a, const MessageBits& b);

// 10 log10(1 / MSE) with peak 1.0. Identical images give +infinity.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();
double psnr(const Image& x, const Image& y);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03,
// range 1) of the BT.601 luma 0.299 R + 0.587 G + 0.114 B.
double ssim(const Image& x, const Image& y);

// |x_w - x| min-max normalized over all channels to [0,1]; all zeros when constant.
Image residual_visual(const Image& x, const Image& x_w);

// L1/L2 ratio of the residual x_w - x divided by sqrt(n): 1 for a flat residual,
// toward 0 for a sparse one. Exploratory diagnostic only.
double residual_sparsity(const Image& x, const Image& x_w);

}  // namespace mea
