#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mea/image.hpp"

namespace mea::harness {

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const;
};

struct DatasetSplits {
  std::vector<Image> train;
  std::vector<Image> val;
  std::vector<Image> test;
};

// Value-noise octaves plus a few filled shapes, mapped into [0.05, 0.95].
Image synthetic_image(int size, std::uint64_t seed);
std::vector<Image> synthetic_images(std::size_t count, int size, std::uint64_t seed);

// Split sizes: val and test are rounded, train takes the rest.
struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};
SplitCounts split_counts(std::size_t total, const SplitFractions& fractions);

// path == "synthetic" generates `synthetic_count` images; otherwise every readable
// raster in the directory is center-cropped, resized and converted to RGB.
// Order is shuffled with `seed` before splitting.
DatasetSplits ingest_dataset(const std::string& path, int image_size, const SplitFractions& fractions,
                             std::uint64_t seed, std::size_t synthetic_count = 400);

}  // namespace mea::harness
