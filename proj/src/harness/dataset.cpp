#include "mea/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mea/errors.hpp"
#include "mea/rng.hpp"

namespace fs = std::filesystem;

namespace mea::harness {

void SplitFractions::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("dataset.splits", "split fractions must lie in [0, 1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("dataset.splits", "split fractions must sum to 1");
}

SplitCounts split_counts(std::size_t total, const SplitFractions& fractions) {
  fractions.validate();
  SplitCounts c;
  c.val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(total)));
  c.test = static_cast<std::size_t>(std::llround(fractions.test * static_cast<double>(total)));
  c.val = std::min(c.val, total);
  c.test = std::min(c.test, total - c.val);
  c.train = total - c.val - c.test;
  return c;
}

namespace {

// Bilinear upsampling of a coarse random grid.
void add_octave(std::vector<double>& plane, int size, int cells, double amplitude, Rng& rng) {
  std::vector<double> grid(static_cast<std::size_t>((cells + 1) * (cells + 1)));
  for (double& g : grid) g = uniform01(rng) * 2.0 - 1.0;
  const double scale = static_cast<double>(cells) / size;
  for (int y = 0; y < size; ++y) {
    const double gy = (y + 0.5) * scale;
    const int y0 = std::min(static_cast<int>(gy), cells - 1);
    const double ty = gy - y0;
    for (int x = 0; x < size; ++x) {
      const double gx = (x + 0.5) * scale;
      const int x0 = std::min(static_cast<int>(gx), cells - 1);
      const double tx = gx - x0;
      auto g = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy * (cells + 1) + xx)]; };
      const double v = (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
                       ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
      plane[static_cast<std::size_t>(y * size + x)] += amplitude * v;
    }
  }
}

}  // namespace

Image synthetic_image(int size, std::uint64_t seed) {
  if (size <= 0 || size % 8 != 0) throw InputError("synthetic images need a positive size divisible by 8");
  Rng rng = make_rng(seed, 0x5E7);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<double> pix(3 * plane, 0.0);

  // Shared luminance texture with a per-channel tint.
  std::vector<double> lum(plane, 0.0);
  double amplitude = 1.0;
  for (int cells = 2; cells <= size / 2; cells *= 2, amplitude *= 0.55) add_octave(lum, size, cells, amplitude, rng);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> tint(plane, 0.0);
    add_octave(tint, size, 4, 0.35, rng);
    const double base = uniform01(rng);
    for (std::size_t i = 0; i < plane; ++i) pix[c * plane + i] = base + 0.35 * lum[i] + tint[i];
  }

  std::uniform_int_distribution<int> shape_count(2, 5);
  const int shapes = shape_count(rng);
  for (int s = 0; s < shapes; ++s) {
    const bool circle = uniform01(rng) < 0.5;
    const double cx = uniform01(rng) * size, cy = uniform01(rng) * size;
    const double r = (0.08 + 0.22 * uniform01(rng)) * size;
    const double hw = r, hh = (0.3 + 0.7 * uniform01(rng)) * r;
    double color[3];
    for (double& v : color) v = uniform01(rng);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const bool inside = circle ? dx * dx + dy * dy <= r * r : std::abs(dx) <= hw && std::abs(dy) <= hh;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) {
          double& p = pix[c * plane + static_cast<std::size_t>(y * size + x)];
          p = 0.3 * p + 0.7 * color[c];
        }
      }
    }
  }

  const auto [lo, hi] = std::minmax_element(pix.begin(), pix.end());
  const double span = std::max(*hi - *lo, 1e-12);
  const double low = *lo;
  Tensor t(Shape{1, 3, size, size});
  for (std::size_t i = 0; i < pix.size(); ++i) t.data()[i] = 0.05 + 0.9 * (pix[i] - low) / span;
  return Image(std::move(t));
}

std::vector<Image> synthetic_images(std::size_t count, int size, std::uint64_t seed) {
  std::vector<Image> out(count);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < count; ++i) out[i] = synthetic_image(size, mix_seed(seed, i));
  return out;
}

namespace {

bool is_raster(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  static const char* known[] = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp", ".ppm", ".pgm"};
  return std::any_of(std::begin(known), std::end(known), [&](const char* k) { return ext == k; });
}

std::optional<Image> load_image(const fs::path& path, int size) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) return std::nullopt;
  const int side = std::min(bgr.rows, bgr.cols);
  cv::Mat square = bgr(cv::Rect((bgr.cols - side) / 2, (bgr.rows - side) / 2, side, side));
  cv::Mat resized;
  cv::resize(square, resized, cv::Size(size, size), 0, 0, side > size ? cv::INTER_AREA : cv::INTER_LINEAR);
  cv::Mat rgb;
  cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
  Tensor t(Shape{1, 3, size, size});
  for (int y = 0; y < size; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = row[x][c] / 255.0;
  }
  return Image(std::move(t));
}

}  // namespace

DatasetSplits ingest_dataset(const std::string& path, int image_size, const SplitFractions& fractions,
                             std::uint64_t seed, std::size_t synthetic_count) {
  fractions.validate();
  if (image_size <= 0 || image_size % 8 != 0) throw ConfigError("image_size", "must be a positive multiple of 8");

  std::vector<Image> images;
  if (path == "synthetic") {
    if (synthetic_count == 0) throw InputError("synthetic dataset with zero images");
    images = synthetic_images(synthetic_count, image_size, seed);
  } else {
    if (!fs::is_directory(path)) throw InputError("dataset directory '" + path + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_raster(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      if (auto img = load_image(f, image_size)) {
        images.push_back(std::move(*img));
      } else {
        std::cerr << "warning: skipping unreadable image " << f << '\n';
      }
    }
    if (images.empty()) throw InputError("dataset directory '" + path + "' contains no readable images");
  }

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x5917);
  std::shuffle(order.begin(), order.end(), rng);

  const SplitCounts counts = split_counts(images.size(), fractions);
  DatasetSplits out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Image& img = images[order[k]];
    if (k < counts.train) out.train.push_back(std::move(img));
    else if (k < counts.train + counts.val) out.val.push_back(std::move(img));
    else out.test.push_back(std::move(img));
  }
  return out;
}

}  // namespace mea::harness
