#include "mea/distortion.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "mea/errors.hpp"

namespace mea {

std::string to_string(DistortionKind k) {
  switch (k) {
    case DistortionKind::identity: return "identity";
    case DistortionKind::gaussian_noise: return "gaussian_noise";
    case DistortionKind::gaussian_blur: return "gaussian_blur";
    case DistortionKind::jpeg_approx: return "jpeg_approx";
    case DistortionKind::dropout: return "dropout";
    case DistortionKind::crop_resize: return "crop_resize";
  }
  return "?";
}

DistortionKind distortion_kind_from_string(const std::string& s) {
  for (auto k : {DistortionKind::identity, DistortionKind::gaussian_noise, DistortionKind::gaussian_blur,
                 DistortionKind::jpeg_approx, DistortionKind::dropout, DistortionKind::crop_resize}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("kind", "unknown distortion '" + s + "'");
}

void DistortionSpec::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("probability", "must lie in [0,1]");
  switch (kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_noise:
      if (!(sigma >= 0.0 && sigma <= 0.5)) throw ConfigError("sigma", "must lie in [0,0.5]");
      break;
    case DistortionKind::gaussian_blur:
      if (kernel_size < 3 || kernel_size > 11 || kernel_size % 2 == 0) {
        throw ConfigError("kernel_size", "must be odd in [3,11]");
      }
      if (!(blur_sigma > 0.0 && blur_sigma <= 5.0)) throw ConfigError("blur_sigma", "must lie in (0,5]");
      break;
    case DistortionKind::jpeg_approx:
      if (quality < 10 || quality > 95) throw ConfigError("quality", "must lie in [10,95]");
      break;
    case DistortionKind::dropout:
      if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
        throw ConfigError("keep_probability", "must lie in (0,1]");
      }
      break;
    case DistortionKind::crop_resize:
      if (!(crop_fraction >= 0.5 && crop_fraction <= 1.0)) throw ConfigError("crop_fraction", "must lie in [0.5,1]");
      break;
  }
}

std::string DistortionSpec::label() const {
  std::ostringstream os;
  os << to_string(kind);
  switch (kind) {
    case DistortionKind::identity: break;
    case DistortionKind::gaussian_noise: os << "(" << sigma << ")"; break;
    case DistortionKind::gaussian_blur: os << "(" << kernel_size << "," << blur_sigma << ")"; break;
    case DistortionKind::jpeg_approx: os << "(" << quality << ")"; break;
    case DistortionKind::dropout: os << "(" << keep_probability << ")"; break;
    case DistortionKind::crop_resize: os << "(" << crop_fraction << ")"; break;
  }
  return os.str();
}

DistortionSpec DistortionSpec::identity(double p) { return DistortionSpec{.probability = p}; }
DistortionSpec DistortionSpec::noise(double s, double p) {
  return DistortionSpec{.kind = DistortionKind::gaussian_noise, .sigma = s, .probability = p};
}
DistortionSpec DistortionSpec::blur(int k, double s, double p) {
  return DistortionSpec{.kind = DistortionKind::gaussian_blur, .kernel_size = k, .blur_sigma = s, .probability = p};
}
DistortionSpec DistortionSpec::jpeg(int q, double p) {
  return DistortionSpec{.kind = DistortionKind::jpeg_approx, .quality = q, .probability = p};
}
DistortionSpec DistortionSpec::dropout(double keep, double p) {
  return DistortionSpec{.kind = DistortionKind::dropout, .keep_probability = keep, .probability = p};
}
DistortionSpec DistortionSpec::crop(double f, double p) {
  return DistortionSpec{.kind = DistortionKind::crop_resize, .crop_fraction = f, .probability = p};
}

ag::Var apply(const DistortionSpec& spec, const ag::Var& images, Rng& rng, Mode mode, const ag::Var* cover,
              double clamp_sharpness) {
  spec.validate();
  const Shape s = images.shape();
  ag::Var out;
  switch (spec.kind) {
    case DistortionKind::identity:
      return images;
    case DistortionKind::gaussian_noise: {
      if (spec.sigma == 0.0) return images;
      std::normal_distribution<double> dist(0.0, spec.sigma);
      Tensor noise(s);
      for (auto& v : noise.values()) v = dist(rng);
      out = ag::add_tensor(images, noise);
      break;
    }
    case DistortionKind::gaussian_blur:
      out = ag::gaussian_blur(images, spec.kernel_size, spec.blur_sigma);
      break;
    case DistortionKind::jpeg_approx:
      out = ag::jpeg_straight_through(images, kernels::luminance_table(spec.quality));
      break;
    case DistortionKind::dropout: {
      if (cover && !(cover->shape() == s)) throw InputError("dropout cover shape mismatch");
      // One keep/drop decision per pixel location, shared across channels.
      Tensor keep(s);
      Tensor fill(s, 0.0);
      for (int n = 0; n < s.n; ++n)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x) {
            const double k = uniform01(rng) < spec.keep_probability ? 1.0 : 0.0;
            for (int c = 0; c < s.c; ++c) {
              keep.at(n, c, y, x) = k;
              if (cover && k == 0.0) fill.at(n, c, y, x) = cover->value().at(n, c, y, x);
            }
          }
      out = ag::add_tensor(ag::mul_tensor(images, keep), fill);
      break;
    }
    case DistortionKind::crop_resize: {
      const double box_h = spec.crop_fraction * s.h;
      const double box_w = spec.crop_fraction * s.w;
      const double top = uniform01(rng) * (s.h - box_h);
      const double left = uniform01(rng) * (s.w - box_w);
      out = ag::crop_resize(images, top, left, box_h, box_w);
      break;
    }
  }
  return mode == Mode::train ? ag::smooth_clamp(out, clamp_sharpness) : ag::hard_clamp(out);
}

Image apply(const DistortionSpec& spec, const Image& image, Rng& rng) {
  ag::NoGradGuard no_grad;
  ag::Var out = apply(spec, ag::Var::constant(image.tensor()), rng, Mode::eval);
  return unstack(out.value()).front();
}

DistortionPool::DistortionPool(std::vector<DistortionSpec> specs) : specs_(std::move(specs)) {
  if (specs_.empty()) throw ConfigError("pool", "distortion pool is empty");
  double total = 0.0;
  for (const auto& s : specs_) {
    s.validate();
    total += s.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("pool", "probabilities sum to " + std::to_string(total) + ", expected 1");
  }
}

const DistortionSpec& DistortionPool::sample(Rng& rng) const {
  if (specs_.empty()) throw ConfigError("pool", "distortion pool is empty");
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& s : specs_) {
    acc += s.probability;
    if (u < acc) return s;
  }
  return specs_.back();
}

DistortionPool DistortionPool::identity_only() { return DistortionPool({DistortionSpec::identity()}); }

DistortionPool DistortionPool::default_training() {
  return DistortionPool({DistortionSpec::identity(0.4), DistortionSpec::noise(0.02, 0.2),
                         DistortionSpec::blur(3, 1.0, 0.15), DistortionSpec::jpeg(50, 0.15),
                         DistortionSpec::dropout(0.3, 0.1)});
}

const DistortionSpec& sample_from_pool(const DistortionPool& pool, Rng& rng) { return pool.sample(rng); }

}  // namespace mea
