#include "dfir/diffusion/sampler.hpp"

#include <cmath>

#include "dfir/core/error.hpp"

namespace dfir::diffusion {

torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps, double alpha_bar_t,
                        double alpha_bar_prev, DdimForm form) {
  if (z_t.sizes() != eps.sizes()) throw ShapeError("ddim_step: noise prediction shape differs from latent");
  if (!(alpha_bar_t > 0.0)) throw ValidationError("ddim_step: alpha_bar_t must be positive");
  const auto x0 = (z_t - std::sqrt(1.0 - alpha_bar_t) * eps) / std::sqrt(alpha_bar_t);
  const double noise_coef = form == DdimForm::kStandard ? std::sqrt(1.0 - alpha_bar_prev) : std::sqrt(1.0 - alpha_bar_t);
  return std::sqrt(alpha_bar_prev) * x0 + noise_coef * eps;
}

torch::Tensor ddim_step(const torch::Tensor& z_t, const torch::Tensor& eps, const NoiseSchedule& schedule, int t,
                        int t_prev, DdimForm form) {
  if (!(t > t_prev && t_prev >= 0))
    throw ValidationError("ddim_step: need t > t_prev >= 0, got t=" + std::to_string(t) +
                          " t_prev=" + std::to_string(t_prev));
  return ddim_step(z_t, eps, schedule.alpha_bar(t), schedule.alpha_bar(t_prev), form);
}

torch::Tensor ddim_sample(torch::Tensor z, const std::vector<int>& path, const NoiseSchedule& schedule,
                          const EpsPredictor& predict, const SamplerOptions& options) {
  const int n_steps = path.empty() ? 0 : static_cast<int>(path.size()) - 1;
  for (int i = 0; i < n_steps; ++i) {
    const bool keep_graph = options.grad_steps < 0 || i >= n_steps - options.grad_steps;
    if (keep_graph) {
      z = ddim_step(z, predict(z, path[i]), schedule, path[i], path[i + 1], options.form);
    } else {
      torch::NoGradGuard no_grad;
      z = ddim_step(z, predict(z, path[i]), schedule, path[i], path[i + 1], options.form);
    }
  }
  return z;
}

}  // namespace dfir::diffusion
