#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mea/rng.hpp"
#include "mea/tensor.hpp"

namespace mea {

// H x W x 3 image with values in [0, 1], stored channel-planar. H and W are
// multiples of 8.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0);
  // Validates extents and range; throws InputError.
  explicit Image(Tensor chw);

  int height() const { return pixels_.shape().h; }
  int width() const { return pixels_.shape().w; }
  static constexpr int channels() { return 3; }

  // {1, 3, H, W}
  const Tensor& tensor() const { return pixels_; }
  std::span<const double> values() const& { return pixels_.values(); }
  std::span<const double> values() const&& = delete;
  double at(int c, int y, int x) const { return pixels_.at(0, c, y, x); }

  bool operator==(const Image& other) const { return pixels_.storage() == other.pixels_.storage(); }

 private:
  Tensor pixels_{Shape{1, 3, 0, 0}};
};

// Stacks equally sized images into one {N, 3, H, W} tensor.
Tensor stack(std::span<const Image> images);
// Splits a batch back into images, hard-clamping into [0, 1].
std::vector<Image> unstack(const Tensor& batch);

// L-bit forensic payload, bits in {0, 1}.
struct MessageBits {
  std::vector<std::uint8_t> bits;

  int length() const { return static_cast<int>(bits.size()); }
  bool operator==(const MessageBits&) const = default;

  static MessageBits random(int length, Rng& rng);
};

// Model-side representation: +alpha for 1, -alpha for 0.
struct WatermarkSignal {
  std::vector<double> values;
  double alpha = 1.0;
};

using SoftMessage = std::vector<double>;

WatermarkSignal signal_of(const MessageBits& message, double alpha);
// 1 where soft > 0, else 0. NaN throws NumericError.
MessageBits binarize(std::span<const double> soft);

// {N, L, 1, 1} tensor of ±alpha signals.
Tensor signal_tensor(std::span<const MessageBits> messages, double alpha);

}  // namespace mea
