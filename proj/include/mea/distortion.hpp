#pragma once

#include <string>
#include <vector>

#include "mea/autograd.hpp"
#include "mea/codec.hpp"
#include "mea/image.hpp"
#include "mea/rng.hpp"

namespace mea {

enum class DistortionKind { identity, gaussian_noise, gaussian_blur, jpeg_approx, dropout, crop_resize };

std::string to_string(DistortionKind k);
DistortionKind distortion_kind_from_string(const std::string& s);

// One noise-layer distortion. Only the fields of `kind` are meaningful.
//   gaussian_noise  sigma in [0, 0.5]
//   gaussian_blur   kernel_size odd in [3, 11], blur_sigma in (0, 5]
//   jpeg_approx     quality in [10, 95]
//   dropout         keep_probability in (0, 1]
//   crop_resize     crop_fraction in [0.5, 1]
struct DistortionSpec {
  DistortionKind kind = DistortionKind::identity;
  double sigma = 0.0;
  int kernel_size = 3;
  double blur_sigma = 1.0;
  int quality = 50;
  double keep_probability = 1.0;
  double crop_fraction = 1.0;
  double probability = 1.0;  // selection weight inside a pool

  void validate() const;
  std::string label() const;

  static DistortionSpec identity(double p = 1.0);
  static DistortionSpec noise(double sigma, double p = 1.0);
  static DistortionSpec blur(int kernel_size, double sigma, double p = 1.0);
  static DistortionSpec jpeg(int quality, double p = 1.0);
  static DistortionSpec dropout(double keep_probability, double p = 1.0);
  static DistortionSpec crop(double fraction, double p = 1.0);
};

// Applies `spec` to a batch {N,3,H,W}. The result is clamped to [0,1] (smoothly in
// train mode) and differentiable w.r.t. `images`. Dropout takes replaced pixels
// from `cover` when given, zero otherwise.
ag::Var apply(const DistortionSpec& spec, const ag::Var& images, Rng& rng, Mode mode = Mode::train,
              const ag::Var* cover = nullptr, double clamp_sharpness = 50.0);

// Evaluation-mode single image.
Image apply(const DistortionSpec& spec, const Image& image, Rng& rng);

class DistortionPool {
 public:
  DistortionPool() = default;
  // Validates: non-empty, each spec valid, probabilities sum to 1 (±1e-9).
  explicit DistortionPool(std::vector<DistortionSpec> specs);

  const DistortionSpec& sample(Rng& rng) const;
  const std::vector<DistortionSpec>& specs() const { return specs_; }

  static DistortionPool identity_only();
  // identity 0.4, noise(0.02) 0.2, blur(3, 1.0) 0.15, jpeg(50) 0.15, dropout(0.3) 0.1
  static DistortionPool default_training();

 private:
  std::vector<DistortionSpec> specs_;
};

const DistortionSpec& sample_from_pool(const DistortionPool& pool, Rng& rng);

}  // namespace mea
