#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

#include "dfir/diffusion/autoencoder.hpp"
#include "dfir/diffusion/sampler.hpp"
#include "dfir/diffusion/schedule.hpp"
#include "dfir/diffusion/unet.hpp"
#include "json.hpp"

namespace dfir::diffusion {

struct DiffusionConfig {
  AutoencoderOptions autoencoder;
  CondUNetOptions unet;  // unet.context_dim is the prompt dimension
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int ddim_steps = 70;
};

void to_json(nlohmann::json& j, const DiffusionConfig& c);
void from_json(const nlohmann::json& j, DiffusionConfig& c);

// One learned unit-norm token per degradation kind plus a null token.
class ClassTokensImpl : public torch::nn::Module {
 public:
  static constexpr int64_t kNull = 4;

  explicit ClassTokensImpl(int64_t dim);
  // indices [B] in 0..kNull -> [B, 1, dim].
  torch::Tensor forward(const torch::Tensor& indices);
  torch::Tensor null_tokens(int64_t batch);

 private:
  torch::nn::Embedding table_{nullptr};
};
TORCH_MODULE(ClassTokens);

struct GenerateOptions {
  SamplerOptions sampler;
  std::uint64_t seed = 0;  // forward-noise draw
};

// Autoencoder, conditional U-Net, class tokens and schedule as one unit.
// Latents are scaled by latent_scale after encoding so they have roughly unit
// variance for the noise schedule.
class LatentDiffusion {
 public:
  explicit LatentDiffusion(DiffusionConfig config);

  torch::Tensor encode(const torch::Tensor& images);
  torch::Tensor decode(const torch::Tensor& latents);
  torch::Tensor predict_eps(const torch::Tensor& z, int t, const torch::Tensor& prompt);

  // Content-conditioned generation: encode, forward-noise to the largest
  // subsequence step <= lambda * T, denoise under `prompt`, decode. Output is
  // differentiable with respect to `prompt`.
  torch::Tensor generate(const torch::Tensor& clean, const torch::Tensor& prompt, double lambda,
                         const GenerateOptions& options = {});
  // Denoise from pure Gaussian latents at the top of the subsequence.
  torch::Tensor sample(const torch::Tensor& prompt, int64_t latent_h, int64_t latent_w,
                       const GenerateOptions& options = {});

  // eval mode, requires_grad off on every weight.
  void freeze();
  std::string weights_hash() const;

  const DiffusionConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const std::vector<int>& subsequence() const { return subsequence_; }

  TinyAutoencoder autoencoder{nullptr};
  CondUNet unet{nullptr};
  ClassTokens tokens{nullptr};
  double latent_scale = 1.0;

 private:
  DiffusionConfig config_;
  NoiseSchedule schedule_;
  std::vector<int> subsequence_;
};

}  // namespace dfir::diffusion
