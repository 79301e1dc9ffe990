#pragma once

#include <torch/torch.h>

#include <functional>
#include <vector>

#include "dfir/diffusion/schedule.hpp"

namespace dfir::diffusion {

enum class DdimForm {
  kStandard,  // second coefficient sqrt(1 - alpha_bar_prev)
  kLiteral,   // second coefficient sqrt(1 - alpha_bar_t)
};

// Deterministic (eta = 0) update from the x0 prediction
// x0 = (z_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t).
torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps, double alpha_bar_t,
                        double alpha_bar_prev, DdimForm form = DdimForm::kStandard);
// Throws ValidationError unless t > t_prev >= 0.
torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps, const NoiseSchedule& schedule, int t,
                        int t_prev, DdimForm form = DdimForm::kStandard);

using EpsPredictor = std::function<torch::Tensor(const torch::Tensor& z, int t)>;

struct SamplerOptions {
  DdimForm form = DdimForm::kStandard;
  // Keep the autograd graph only for the last k steps; -1 keeps all.
  int grad_steps = -1;
};

// Walks a descending path (as from NoiseSchedule::denoise_path) from z at
// path.front() to path.back().
torch::Tensor ddim_sample(torch::Tensor z, const std::vector<int>& path, const NoiseSchedule& schedule,
                          const EpsPredictor& predict, const SamplerOptions& options = {});

}  // namespace dfir::diffusion
