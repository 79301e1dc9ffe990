#pragma once

#include <limits>

#include "dfir/core/image.hpp"

namespace dfir::eval {

// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

struct PsnrOptions {
  bool luma = false;      // compare ITU-R 601 luma instead of RGB
  bool quantize = false;  // snap both inputs to the 8-bit grid first
};

// 10 log10(1 / MSE) on [0, 1] images (inputs are clamped).
double psnr(const Image& a, const Image& b, PsnrOptions options = {});
double psnr_from_mse(double mse);

double luma(float r, float g, float b);

// Single-scale SSIM on 601 luma: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1, mean over the valid region.
double ssim(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

}  // namespace dfir::eval
