#include <cmath>

#include "testing.hpp"
#include "dfir/core/error.hpp"
#include "dfir/eval/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dfir;
using namespace dfir::eval;

namespace {

Image binary_image(int n, std::uint64_t seed) {
  Rng rng(seed);
  Image im(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const float v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = v;
    }
  return im;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Image a = test::random_image(16, 16, 1);
  CHECK(psnr(a, a) == kPsnrIdentical);

  Image lo(8, 8, 0.2f), hi(8, 8, 0.3f);
  CHECK(psnr(lo, hi) == doctest::Approx(20.0).epsilon(1e-5));

  Image q0(8, 8, 100.0f / 255.0f), q1(8, 8, 101.0f / 255.0f);
  CHECK(psnr(q0, q1, {.quantize = true}) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-6));
  CHECK(20.0 * std::log10(255.0) == doctest::Approx(48.13).epsilon(1e-4));

  CHECK_THROWS_AS(psnr(Image(4, 4), Image(4, 5)), ShapeError);
}

TEST_CASE("psnr strictly decreases along nested perturbations") {
  const Image base = test::random_image(12, 12, 2);
  Rng rng(3);
  Image cur = base;
  double prev = kPsnrIdentical;
  for (int k = 0; k < 30; ++k) {
    // Perturb one more previously untouched pixel: MSE strictly increases.
    const int y = k / 12, x = k % 12;
    cur.at(y, x, 0) = base.at(y, x, 0) > 0.5f ? 0.0f : 1.0f;
    const double p = psnr(base, cur);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("psnr is invariant to a shared spatial permutation") {
  const Image a = test::random_image(10, 10, 4);
  const Image b = test::random_image(10, 10, 5);
  Image pa(10, 10), pb(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c) {
        pa.at(y, x, c) = a.at(9 - x, (y * 3) % 10, c);
        pb.at(y, x, c) = b.at(9 - x, (y * 3) % 10, c);
      }
  CHECK(psnr(pa, pb) == doctest::Approx(psnr(a, b)).epsilon(1e-12));
}

TEST_CASE("ssim identities") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = test::random_image(20, 17, s);
    const Image b = test::random_image(20, 17, s + 100);
    CHECK(ssim(a, a) == 1.0);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-9);
    CHECK(ssim(a, b) <= 1.0);
    CHECK(ssim(a, b) >= -1.0);
  }
  CHECK_THROWS_AS(ssim(Image(10, 10), Image(10, 10)), ShapeError);
}

TEST_CASE("ssim matches the brute-force window oracle on 11x11 toys") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const Image a = test::random_image(11, 11, s);
    const Image b = test::random_image(11, 11, s + 50);
    CHECK(ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-10));
  }
  const Image a = test::random_image(15, 13, 7);
  const Image b = test::random_image(15, 13, 8);
  CHECK(ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-10));
}

TEST_CASE("ssim of a binary image against its inverse is negative") {
  const Image a = binary_image(11, 9);
  Image inv = a;
  for (float& v : inv.pixels()) v = 1.0f - v;
  const double s = ssim(a, inv);
  CHECK(s < 0.0);
  CHECK(s == doctest::Approx(oracle::ssim(a, inv)).epsilon(1e-10));
}

TEST_CASE("ssim of two constant images reduces to the luminance term") {
  const double p = 0.3, q = 0.6;
  const double c1 = kSsimK1 * kSsimK1;
  const double expected = (2 * p * q + c1) / (p * p + q * q + c1);
  CHECK(ssim(Image(16, 16, static_cast<float>(p)), Image(16, 16, static_cast<float>(q))) ==
        doctest::Approx(expected).epsilon(1e-6));
}
