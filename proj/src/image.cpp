#include "mea/image.hpp"

#include <algorithm>
#include <cmath>

#include "mea/errors.hpp"

namespace mea {

Image::Image(int height, int width, double fill) : Image(Tensor(Shape{1, 3, height, width}, fill)) {}

Image::Image(Tensor chw) : pixels_(std::move(chw)) {
  const Shape s = pixels_.shape();
  if (s.n != 1 || s.c != 3) throw InputError("image tensor must be {1,3,H,W}, got " + s.str());
  if (s.h <= 0 || s.w <= 0 || s.h % 8 != 0 || s.w % 8 != 0) {
    throw InputError("image extents must be positive multiples of 8, got " + std::to_string(s.h) + "x" +
                     std::to_string(s.w));
  }
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("image value outside [0,1]: " + std::to_string(v));
  }
}

Tensor stack(std::span<const Image> images) {
  if (images.empty()) throw InputError("cannot stack an empty image list");
  const int h = images[0].height();
  const int w = images[0].width();
  Tensor out(Shape{static_cast<int>(images.size()), 3, h, w});
  const std::size_t per = static_cast<std::size_t>(3) * h * w;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() != h || images[i].width() != w) throw InputError("stack: images differ in size");
    std::copy(images[i].values().begin(), images[i].values().end(), out.data() + i * per);
  }
  return out;
}

std::vector<Image> unstack(const Tensor& batch) {
  const Shape s = batch.shape();
  std::vector<Image> out;
  out.reserve(s.n);
  const std::size_t per = s.per_sample();
  for (int i = 0; i < s.n; ++i) {
    Tensor t(Shape{1, s.c, s.h, s.w});
    for (std::size_t j = 0; j < per; ++j) t[j] = std::clamp(batch[i * per + j], 0.0, 1.0);
    out.emplace_back(std::move(t));
  }
  return out;
}

MessageBits MessageBits::random(int length, Rng& rng) {
  MessageBits m;
  m.bits.resize(length);
  for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return m;
}

WatermarkSignal signal_of(const MessageBits& message, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("alpha", "must be positive");
  WatermarkSignal s;
  s.alpha = alpha;
  s.values.reserve(message.bits.size());
  for (auto b : message.bits) s.values.push_back(b ? alpha : -alpha);
  return s;
}

MessageBits binarize(std::span<const double> soft) {
  MessageBits m;
  m.bits.reserve(soft.size());
  for (double v : soft) {
    if (std::isnan(v)) throw NumericError("binarize", "NaN in soft message");
    m.bits.push_back(v > 0.0 ? 1 : 0);
  }
  return m;
}

Tensor signal_tensor(std::span<const MessageBits> messages, double alpha) {
  if (messages.empty()) throw InputError("no messages");
  const int length = messages[0].length();
  Tensor out(Shape{static_cast<int>(messages.size()), length, 1, 1});
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (messages[i].length() != length) throw InputError("messages differ in length");
    for (int j = 0; j < length; ++j) out[i * length + j] = messages[i].bits[j] ? alpha : -alpha;
  }
  return out;
}

}  // namespace mea
