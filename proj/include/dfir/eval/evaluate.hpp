#pragma once

#include <torch/torch.h>

#include "dfir/nets/restoration.hpp"

namespace dfir::eval {

struct QualityScore {
  double psnr = 0.0;  // mean over images
  double ssim = 0.0;
  int count = 0;
};

// Mean per-image PSNR/SSIM between two [N, 3, H, W] batches in [0, 1].
QualityScore score_batches(const torch::Tensor& predicted, const torch::Tensor& reference);

// Restores `degraded` in chunks (evaluation mode) and scores against `clean`.
QualityScore evaluate_restoration(nets::RestorationNet& net, const torch::Tensor& degraded,
                                  const torch::Tensor& clean, int64_t chunk = 32);

}  // namespace dfir::eval
