#pragma once

#include <torch/torch.h>

#include <vector>

namespace dfir::diffusion {

// Discrete forward-noising schedule. alpha_bar[0] = 1 (no noise); alpha_bar[t]
// for t in 1..T is the running product of (1 - beta).
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  int steps() const { return steps_; }
  double alpha_bar(int t) const;
  double beta(int t) const;

  // S timesteps t_i = round((i + 1) * T / S), i = 0..S-1, strictly increasing
  // and ending at T.
  std::vector<int> subsequence(int count) const;

  // Descending timesteps visited when denoising from noise level lambda over
  // the given subsequence: starts at the largest entry <= lambda * T and ends
  // with 0. Empty when no entry qualifies (lambda too small): no noising at all.
  std::vector<int> denoise_path(const std::vector<int>& subsequence, double lambda) const;

 private:
  int steps_ = 0;
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
};

// sqrt(ab) * z0 + sqrt(1 - ab) * eps.
torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& eps, double alpha_bar);
torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& eps, const NoiseSchedule& schedule,
                              int t);

}  // namespace dfir::diffusion
