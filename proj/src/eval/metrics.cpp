#include "dfir/eval/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dfir/core/error.hpp"

namespace dfir::eval {

double luma(float r, float g, float b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Image& a, const Image& b, PsnrOptions options) {
  if (!a.same_shape(b)) throw ShapeError("psnr: image shapes differ");
  if (a.empty()) throw ShapeError("psnr: empty image");
  const Image qa = options.quantize ? a.quantized() : a;
  const Image qb = options.quantize ? b.quantized() : b;
  auto clamp = [](float v) { return static_cast<double>(std::clamp(v, 0.0f, 1.0f)); };
  double sum = 0.0;
  std::size_t n = 0;
  if (options.luma) {
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        const double ya = luma(clamp(qa.at(y, x, 0)), clamp(qa.at(y, x, 1)), clamp(qa.at(y, x, 2)));
        const double yb = luma(clamp(qb.at(y, x, 0)), clamp(qb.at(y, x, 1)), clamp(qb.at(y, x, 2)));
        sum += (ya - yb) * (ya - yb);
        ++n;
      }
  } else {
    auto pa = qa.pixels();
    auto pb = qb.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = clamp(pa[i]) - clamp(pb[i]);
      sum += d * d;
    }
    n = pa.size();
  }
  return psnr_from_mse(sum / static_cast<double>(n));
}

namespace {

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> taps{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Separable 'valid' Gaussian filtering.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto taps = gaussian_taps();
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

std::vector<double> luma_plane(const Image& im) {
  std::vector<double> out(static_cast<std::size_t>(im.height()) * im.width());
  for (int y = 0; y < im.height(); ++y)
    for (int x = 0; x < im.width(); ++x)
      out[static_cast<std::size_t>(y) * im.width() + x] = luma(im.at(y, x, 0), im.at(y, x, 1), im.at(y, x, 2));
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: image shapes differ");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow)
    throw ShapeError("ssim: images smaller than the 11x11 window");
  const int h = a.height();
  const int w = a.width();
  const auto x = luma_plane(a);
  const auto y = luma_plane(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w);
  const auto my = filter_valid(y, h, w);
  const auto sxx = filter_valid(xx, h, w);
  const auto syy = filter_valid(yy, h, w);
  const auto sxy = filter_valid(xy, h, w);
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    // Written symmetric in (x, y) so that swapping inputs is bit-exact and
    // identical inputs give exactly 1.
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace dfir::eval
