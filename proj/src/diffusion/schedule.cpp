#include "dfir/diffusion/schedule.hpp"

#include <cmath>

#include "dfir/core/error.hpp"

namespace dfir::diffusion {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("NoiseSchedule: steps must be positive");
  if (!(beta_start > 0 && beta_end >= beta_start && beta_end < 1))
    throw ValidationError("NoiseSchedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps_ = steps;
  s.betas_.assign(steps + 1, 0.0);
  s.alpha_bar_.assign(steps + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    s.betas_[t] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.betas_[t]);
  }
  return s;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps_)
    throw ValidationError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + "]");
  return alpha_bar_[t];
}

double NoiseSchedule::beta(int t) const {
  alpha_bar(t);
  return betas_[t];
}

std::vector<int> NoiseSchedule::subsequence(int count) const {
  if (count < 1 || count > steps_) throw ValidationError("subsequence length must be in [1, T]");
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i)
    out[i] = static_cast<int>(std::lround(static_cast<double>(i + 1) * steps_ / count));
  return out;
}

std::vector<int> NoiseSchedule::denoise_path(const std::vector<int>& subsequence, double lambda) const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must be in [0, 1]");
  const double limit = lambda * steps_ + 1e-9;
  std::vector<int> path;
  for (auto it = subsequence.rbegin(); it != subsequence.rend(); ++it)
    if (*it <= limit) path.push_back(*it);
  if (!path.empty()) path.push_back(0);
  return path;
}

torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& eps, double alpha_bar) {
  if (z0.sizes() != eps.sizes()) throw ShapeError("forward_diffuse: noise shape differs from latent shape");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw ValidationError("forward_diffuse: alpha_bar outside [0, 1]");
  return std::sqrt(alpha_bar) * z0 + std::sqrt(1.0 - alpha_bar) * eps;
}

torch::Tensor forward_diffuse(const torch::Tensor& z0, const torch::Tensor& eps, const NoiseSchedule& schedule,
                              int t) {
  return forward_diffuse(z0, eps, schedule.alpha_bar(t));
}

}  // namespace dfir::diffusion
