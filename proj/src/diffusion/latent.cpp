#include "dfir/diffusion/latent.hpp"

#include "dfir/core/checkpoint.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/hash.hpp"

namespace dfir::diffusion {

namespace F = torch::nn::functional;

void to_json(nlohmann::json& j, const DiffusionConfig& c) {
  j = {{"autoencoder", {{"width", c.autoencoder.width},
                       {"latent_channels", c.autoencoder.latent_channels},
                       {"downsampling", c.autoencoder.downsampling}}},
       {"unet", {{"width", c.unet.width}, {"context_dim", c.unet.context_dim}, {"pooled_context", c.unet.pooled_context}}},
       {"timesteps", c.timesteps},
       {"beta_start", c.beta_start},
       {"beta_end", c.beta_end},
       {"ddim_steps", c.ddim_steps}};
}

void from_json(const nlohmann::json& j, DiffusionConfig& c) {
  c.autoencoder.width = j.at("autoencoder").at("width").get<int>();
  c.autoencoder.latent_channels = j.at("autoencoder").at("latent_channels").get<int>();
  c.autoencoder.downsampling = j.at("autoencoder").value("downsampling", 4);
  c.unet.latent_channels = c.autoencoder.latent_channels;
  c.unet.width = j.at("unet").at("width").get<int>();
  c.unet.context_dim = j.at("unet").at("context_dim").get<int>();
  c.unet.pooled_context = j.at("unet").value("pooled_context", true);
  c.timesteps = j.at("timesteps").get<int>();
  c.beta_start = j.at("beta_start").get<double>();
  c.beta_end = j.at("beta_end").get<double>();
  c.ddim_steps = j.at("ddim_steps").get<int>();
}

ClassTokensImpl::ClassTokensImpl(int64_t dim) {
  table_ = register_module("table", torch::nn::Embedding(kNull + 1, dim));
}

torch::Tensor ClassTokensImpl::forward(const torch::Tensor& indices) {
  return F::normalize(table_(indices), F::NormalizeFuncOptions().dim(-1)).unsqueeze(1);
}

torch::Tensor ClassTokensImpl::null_tokens(int64_t batch) {
  return forward(torch::full({batch}, kNull, torch::kInt64));
}

LatentDiffusion::LatentDiffusion(DiffusionConfig config) : config_(config) {
  config_.unet.latent_channels = config_.autoencoder.latent_channels;
  autoencoder = TinyAutoencoder(config_.autoencoder);
  unet = CondUNet(config_.unet);
  tokens = ClassTokens(config_.unet.context_dim);
  schedule_ = NoiseSchedule::linear(config_.timesteps, config_.beta_start, config_.beta_end);
  subsequence_ = schedule_.subsequence(config_.ddim_steps);
}

torch::Tensor LatentDiffusion::encode(const torch::Tensor& images) { return autoencoder->encode(images) * latent_scale; }

torch::Tensor LatentDiffusion::decode(const torch::Tensor& latents) {
  return autoencoder->decode(latents / latent_scale);
}

torch::Tensor LatentDiffusion::predict_eps(const torch::Tensor& z, int t, const torch::Tensor& prompt) {
  return unet->forward(z, torch::full({z.size(0)}, static_cast<float>(t)), prompt);
}

torch::Tensor LatentDiffusion::generate(const torch::Tensor& clean, const torch::Tensor& prompt, double lambda,
                                        const GenerateOptions& options) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("generate: lambda must be in [0, 1]");
  const auto path = schedule_.denoise_path(subsequence_, lambda);
  torch::Tensor z0;
  {
    torch::NoGradGuard no_grad;
    z0 = encode(clean);
  }
  if (path.empty()) return decode(z0).clamp(0.0, 1.0);
  auto gen = at::detail::createCPUGenerator(options.seed);
  const auto eps = torch::randn(z0.sizes(), gen);
  const auto zt = forward_diffuse(z0, eps, schedule_, path.front());
  auto predict = [&](const torch::Tensor& z, int t) { return predict_eps(z, t, prompt); };
  return decode(ddim_sample(zt, path, schedule_, predict, options.sampler)).clamp(0.0, 1.0);
}

torch::Tensor LatentDiffusion::sample(const torch::Tensor& prompt, int64_t latent_h, int64_t latent_w,
                                      const GenerateOptions& options) {
  auto gen = at::detail::createCPUGenerator(options.seed);
  const auto z = torch::randn({prompt.size(0), config_.autoencoder.latent_channels, latent_h, latent_w}, gen);
  const auto path = schedule_.denoise_path(subsequence_, 1.0);
  auto predict = [&](const torch::Tensor& zz, int t) { return predict_eps(zz, t, prompt); };
  return decode(ddim_sample(z, path, schedule_, predict, options.sampler)).clamp(0.0, 1.0);
}

void LatentDiffusion::freeze() {
  for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{autoencoder.get(), unet.get(), tokens.get()}) {
    m->eval();
    for (auto& p : m->parameters()) p.set_requires_grad(false);
  }
}

std::string LatentDiffusion::weights_hash() const {
  return sha256_hex(dfir::weights_hash(*autoencoder) + dfir::weights_hash(*unet) + dfir::weights_hash(*tokens));
}

}  // namespace dfir::diffusion
