#include "mea/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mea/errors.hpp"

namespace mea {

namespace {

void require_same_extent(const Image& x, const Image& y, const char* what) {
  if (x.height() != y.height() || x.width() != y.width()) {
    throw InputError(std::string(what) + ": image extents differ");
  }
}

std::vector<double> luma(const Image& img) {
  const int h = img.height();
  const int w = img.width();
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[y * w + x] = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
  return out;
}

}  // namespace

double ber(const MessageBits& a, const MessageBits& b) {
  if (a.length() != b.length()) {
    throw InputError("ber: lengths differ (" + std::to_string(a.length()) + " vs " + std::to_string(b.length()) + ")");
  }
  if (a.length() == 0) throw InputError("ber: empty message");
  int diff = 0;
  for (int i = 0; i < a.length(); ++i) diff += (a.bits[i] != b.bits[i]);
  return 100.0 * diff / a.length();
}

double psnr(const Image& x, const Image& y) {
  require_same_extent(x, y, "psnr");
  double acc = 0.0;
  const auto a = x.values();
  const auto b = y.values();
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& x, const Image& y) {
  require_same_extent(x, y, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  const int h = x.height();
  const int w = x.width();
  if (h < kWin || w < kWin) throw InputError("ssim: image smaller than the 11x11 window");

  double g[kWin];
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    g[i] = std::exp(-0.5 * (i - kWin / 2) * (i - kWin / 2) / (kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;

  const auto a = luma(x);
  const auto b = luma(y);
  const int oh = h - kWin + 1;
  const int ow = w - kWin + 1;
  std::vector<double> local(static_cast<std::size_t>(oh) * ow);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double wt = g[i] * g[j];
          const double va = a[(r + i) * w + c + j];
          const double vb = b[(r + i) * w + c + j];
          mx += wt * va;
          my += wt * vb;
          sxx += wt * va * va;
          syy += wt * vb * vb;
          sxy += wt * va * vb;
        }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      local[r * ow + c] = ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
    }
  double acc = 0.0;
  for (double v : local) acc += v;
  return acc / static_cast<double>(local.size());
}

Image residual_visual(const Image& x, const Image& x_w) {
  require_same_extent(x, x_w, "residual_visual");
  Tensor r(x.tensor().shape());
  const auto a = x.values();
  const auto b = x_w.values();
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = std::abs(b[i] - a[i]);
  const auto [lo, hi] = std::minmax_element(r.values().begin(), r.values().end());
  const double mn = *lo;
  const double mx = *hi;
  if (mx == mn) return Image(Tensor(r.shape(), 0.0));
  for (auto& v : r.values()) v = std::clamp((v - mn) / (mx - mn), 0.0, 1.0);
  return Image(std::move(r));
}

double residual_sparsity(const Image& x, const Image& x_w) {
  require_same_extent(x, x_w, "residual_sparsity");
  const auto a = x.values();
  const auto b = x_w.values();
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    l1 += std::abs(d);
    l2 += d * d;
  }
  if (l2 == 0.0) return 0.0;
  return l1 / std::sqrt(l2) / std::sqrt(static_cast<double>(a.size()));
}

}  // namespace mea
