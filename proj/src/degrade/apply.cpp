#include "dfir/degrade/apply.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dfir/core/error.hpp"
#include "dfir/core/rng.hpp"

namespace dfir::degrade {

std::vector<float> motion_kernel(double length, double angle_deg, int* extent) {
  const int k = 2 * static_cast<int>(std::ceil(length / 2.0)) + 1;
  const double c = k / 2;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::sin(theta);
  const double dy = std::cos(theta);
  std::vector<float> kernel(static_cast<std::size_t>(k) * k, 0.0f);

  // Bilinear splat of densely sampled points along the segment.
  const int samples = std::max(2, static_cast<int>(std::ceil(length * 4.0)));
  for (int i = 0; i <= samples; ++i) {
    const double s = -length / 2.0 + length * i / samples;
    const double x = c + s * dx;
    const double y = c + s * dy;
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const double w[2][2] = {{(1 - fy) * (1 - fx), (1 - fy) * fx}, {fy * (1 - fx), fy * fx}};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const int yy = y0 + a;
        const int xx = x0 + b;
        if (yy >= 0 && yy < k && xx >= 0 && xx < k)
          kernel[static_cast<std::size_t>(yy) * k + xx] += static_cast<float>(w[a][b]);
      }
  }
  const float peak = *std::max_element(kernel.begin(), kernel.end());
  if (peak > 0.0f)
    for (float& v : kernel) v /= peak;
  if (extent) *extent = k;
  return kernel;
}

namespace {

// Adds `weight * kernel` centred on (cy, cx), clipped at the borders.
void stamp(std::vector<float>& layer, int height, int width, const std::vector<float>& kernel,
           int k, int cy, int cx, float weight) {
  const int c = k / 2;
  for (int i = 0; i < k; ++i) {
    const int y = cy + i - c;
    if (y < 0 || y >= height) continue;
    for (int j = 0; j < k; ++j) {
      const int x = cx + j - c;
      if (x < 0 || x >= width) continue;
      layer[static_cast<std::size_t>(y) * width + x] += weight * kernel[static_cast<std::size_t>(i) * k + j];
    }
  }
}

std::vector<float> convolve(const std::vector<float>& layer, int height, int width,
                            const std::vector<float>& kernel, int k) {
  std::vector<float> out(layer.size(), 0.0f);
  const int c = k / 2;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      float acc = 0.0f;
      for (int i = 0; i < k; ++i) {
        const int yy = y + i - c;
        if (yy < 0 || yy >= height) continue;
        for (int j = 0; j < k; ++j) {
          const int xx = x + j - c;
          if (xx < 0 || xx >= width) continue;
          acc += layer[static_cast<std::size_t>(yy) * width + xx] *
                 kernel[static_cast<std::size_t>(k - 1 - i) * k + (k - 1 - j)];
        }
      }
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  return out;
}

int count_for_density(double per_kilopixel, int height, int width, Rng& rng) {
  const double expected = per_kilopixel * height * width / 1000.0;
  return static_cast<int>(std::floor(expected + rng.uniform()));
}

std::vector<float> rain_layer(const RainParams& p, int height, int width, Rng& rng) {
  std::vector<float> layer(static_cast<std::size_t>(height) * width, 0.0f);
  int k = 1;
  const auto kernel = motion_kernel(p.length, p.angle_deg, &k);
  const int n = count_for_density(p.density, height, width, rng);
  for (int i = 0; i < n; ++i) {
    const int y = static_cast<int>(rng.below(height));
    const int x = static_cast<int>(rng.below(width));
    const float brightness = static_cast<float>(rng.uniform(0.6, 1.0));
    stamp(layer, height, width, kernel, k, y, x, brightness);
  }
  for (float& v : layer) v = std::min(v, 1.0f);
  return layer;
}

std::vector<float> snow_layer(const SnowParams& p, int height, int width, Rng& rng) {
  std::vector<float> layer(static_cast<std::size_t>(height) * width, 0.0f);
  const int n = count_for_density(p.density, height, width, rng);
  for (int i = 0; i < n; ++i) {
    const double cy = rng.uniform(0.0, height);
    const double cx = rng.uniform(0.0, width);
    const double r = p.flake_radius * rng.uniform(0.6, 1.4);
    const double alpha = p.opacity * rng.uniform(0.7, 1.0);
    const int reach = static_cast<int>(std::ceil(r + 1.0));
    for (int y = static_cast<int>(cy) - reach; y <= static_cast<int>(cy) + reach; ++y) {
      if (y < 0 || y >= height) continue;
      for (int x = static_cast<int>(cx) - reach; x <= static_cast<int>(cx) + reach; ++x) {
        if (x < 0 || x >= width) continue;
        const double d = std::hypot(y + 0.5 - cy, x + 0.5 - cx);
        const double a = alpha * std::clamp(r + 0.5 - d, 0.0, 1.0);
        float& dst = layer[static_cast<std::size_t>(y) * width + x];
        dst = std::max(dst, static_cast<float>(a));
      }
    }
  }
  // Short vertical fall blur, sum-normalized so opacity stays bounded by 1.
  int k = 1;
  auto kernel = motion_kernel(2.0, 0.0, &k);
  float sum = 0.0f;
  for (float v : kernel) sum += v;
  for (float& v : kernel) v /= sum;
  return convolve(layer, height, width, kernel, k);
}

}  // namespace

Image apply_degradation(const Image& clean, const DegradationSpec& spec, std::uint64_t rng_seed) {
  spec.validate();
  const int h = clean.height();
  const int w = clean.width();
  const int extent = spec.kernel_extent();
  if (h < extent || w < extent)
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than degradation kernel " + std::to_string(extent));

  Image out = clean;
  Rng layer_rng(derive_seed(rng_seed, {1}));
  Rng noise_rng(derive_seed(rng_seed, {2}));

  switch (spec.kind) {
    case Kind::kRain: {
      const auto layer = rain_layer(spec.rain, h, w, layer_rng);
      const float s = static_cast<float>(spec.rain.streak_intensity);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const float v = s * layer[static_cast<std::size_t>(y) * w + x];
          for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) += v;
        }
      break;
    }
    case Kind::kHaze: {
      const double t = spec.haze.transmission;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < Image::kChannels; ++c) {
            const double v = t * clean.at(y, x, c) + (1.0 - t) * spec.haze.airlight[c];
            out.at(y, x, c) = static_cast<float>(v);
          }
      break;
    }
    case Kind::kSnow: {
      const auto layer = snow_layer(spec.snow, h, w, layer_rng);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const float a = std::min(layer[static_cast<std::size_t>(y) * w + x], 1.0f);
          if (a == 0.0f) continue;
          for (int c = 0; c < Image::kChannels; ++c) out.at(y, x, c) = out.at(y, x, c) * (1.0f - a) + a;
        }
      break;
    }
    case Kind::kNoiseOnly:
      break;
  }

  if (spec.noise_sigma > 0.0) {
    for (float& v : out.pixels()) v += static_cast<float>(spec.noise_sigma * noise_rng.normal());
  }
  out.clamp01();
  return out;
}

}  // namespace dfir::degrade
