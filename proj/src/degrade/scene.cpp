#include "dfir/degrade/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "dfir/core/rng.hpp"

namespace dfir::degrade {

namespace {

using Color = std::array<float, 3>;

Color random_color(Rng& rng) {
  return {static_cast<float>(rng.uniform(0.05, 0.95)), static_cast<float>(rng.uniform(0.05, 0.95)),
          static_cast<float>(rng.uniform(0.05, 0.95))};
}

// Coarse random lattice, bilinearly upsampled.
std::vector<float> value_noise(int height, int width, int cells, Rng& rng) {
  std::vector<float> lattice(static_cast<std::size_t>(cells + 1) * (cells + 1));
  for (float& v : lattice) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<float> out(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double gy = static_cast<double>(y) / height * cells;
      const double gx = static_cast<double>(x) / width * cells;
      const int iy = static_cast<int>(gy);
      const int ix = static_cast<int>(gx);
      const double fy = gy - iy;
      const double fx = gx - ix;
      auto at = [&](int a, int b) { return lattice[static_cast<std::size_t>(a) * (cells + 1) + b]; };
      const double v = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
                       fy * ((1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(v);
    }
  return out;
}

}  // namespace

Image generate_scene(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  Image img(height, width);

  const Color c0 = random_color(rng);
  const Color c1 = random_color(rng);
  const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ux = std::cos(dir);
  const double uy = std::sin(dir);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double p = ((x + 0.5) / width - 0.5) * ux + ((y + 0.5) / height - 0.5) * uy;
      const float t = static_cast<float>(std::clamp(p + 0.5, 0.0, 1.0));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1 - t) * c0[c] + t * c1[c];
    }

  const int n_shapes = 3 + static_cast<int>(rng.below(4));
  for (int s = 0; s < n_shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cy = rng.uniform(0.0, height);
    const double cx = rng.uniform(0.0, width);
    const double ry = rng.uniform(0.08, 0.3) * height;
    const double rx = rng.uniform(0.08, 0.3) * width;
    const Color fill = random_color(rng);
    const bool striped = rng.uniform() < 0.3;
    const double period = rng.uniform(3.0, 8.0);
    const double stripe_angle = rng.uniform(0.0, std::numbers::pi);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = (y + 0.5 - cy) / ry;
        const double dx = (x + 0.5 - cx) / rx;
        // Signed distance in pixels (approximate), negative inside.
        double sd = ellipse ? (std::hypot(dx, dy) - 1.0) * std::min(rx, ry)
                            : std::max(std::abs(dx) - 1.0, std::abs(dy) - 1.0) * std::min(rx, ry);
        const double cover = std::clamp(0.5 - sd, 0.0, 1.0);
        if (cover <= 0.0) continue;
        double shade = 1.0;
        if (striped) {
          const double u = (x * std::cos(stripe_angle) + y * std::sin(stripe_angle)) / period;
          shade = 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * u);
        }
        for (int c = 0; c < 3; ++c) {
          float& dst = img.at(y, x, c);
          dst = static_cast<float>((1 - cover) * dst + cover * fill[c] * shade);
        }
      }
  }

  const auto coarse = value_noise(height, width, 4, rng);
  const auto fine = value_noise(height, width, std::max(4, width / 8), rng);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const float t = 0.08f * coarse[i] + 0.04f * fine[i];
      for (int c = 0; c < 3; ++c) img.at(y, x, c) += t;
    }
  img.clamp01();
  return img;
}

}  // namespace dfir::degrade
