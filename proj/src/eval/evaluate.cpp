#include "dfir/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "dfir/core/error.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/eval/metrics.hpp"

namespace dfir::eval {

QualityScore score_batches(const torch::Tensor& predicted, const torch::Tensor& reference) {
  if (predicted.sizes() != reference.sizes()) throw ShapeError("score_batches: shape mismatch");
  QualityScore s;
  const auto pred = to_images(predicted);
  const auto ref = to_images(reference);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    // Identical pairs would contribute +inf; cap at 100 dB so means stay finite.
    s.psnr += std::min(psnr(pred[i], ref[i]), 100.0);
    s.ssim += ssim(pred[i], ref[i]);
  }
  s.count = static_cast<int>(pred.size());
  if (s.count > 0) {
    s.psnr /= s.count;
    s.ssim /= s.count;
  }
  return s;
}

QualityScore evaluate_restoration(nets::RestorationNet& net, const torch::Tensor& degraded,
                                  const torch::Tensor& clean, int64_t chunk) {
  std::vector<torch::Tensor> outs;
  for (int64_t i = 0; i < degraded.size(0); i += chunk)
    outs.push_back(nets::restore(net, degraded.slice(0, i, std::min(i + chunk, degraded.size(0)))));
  return score_batches(torch::cat(outs), clean);
}

}  // namespace dfir::eval
